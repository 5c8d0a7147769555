//! Small dense linear algebra for the absorbing-chain model.
//!
//! Matrices here are tiny (a few hundred rows at most), so everything is
//! row-major `Vec<f64>` with straightforward loops.

use std::fmt;

use crate::error::{Error, Result};

/// Pivot magnitude below which elimination declares the matrix singular.
pub const PIVOT_THRESHOLD: f64 = 1e-12;

/// Tolerance on row sums when a matrix must be row-stochastic.
pub const STOCHASTIC_TOLERANCE: f64 = 1e-12;

/// Dense row-major matrix of finite reals.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Builds a matrix from row-major entries.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidMatrix("matrix must have at least one row and column".into()));
        }
        if data.len() != rows * cols {
            return Err(Error::InvalidMatrix(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidMatrix(format!("non-finite entry {bad}")));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidMatrix("ragged rows".into()));
        }
        Self::from_row_major(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|i| self.row(i).iter().sum()).collect()
    }

    /// Copies out the block `[r0, r0+rows) x [c0, c0+cols)`.
    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Matrix {
        assert!(r0 + rows <= self.rows && c0 + cols <= self.cols, "block out of range");
        let mut out = Matrix::zeros(rows, cols);
        for i in 0..rows {
            out.data[i * cols..(i + 1) * cols]
                .copy_from_slice(&self.data[(r0 + i) * self.cols + c0..(r0 + i) * self.cols + c0 + cols]);
        }
        out
    }

    /// Infinity norm: maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                op: "sub",
                left: (self.rows, self.cols),
                right: (other.rows, other.cols),
            });
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    fn scale_in_place(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    /// Checks nonnegativity and unit row sums within [`STOCHASTIC_TOLERANCE`].
    pub fn check_row_stochastic(&self) -> Result<()> {
        for i in 0..self.rows {
            let row = self.row(i);
            if let Some(v) = row.iter().find(|v| **v < 0.0) {
                return Err(Error::NotStochastic(format!("row {i} has negative entry {v}")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > STOCHASTIC_TOLERANCE {
                return Err(Error::NotStochastic(format!("row {i} sums to {sum}")));
            }
        }
        Ok(())
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

/// A row vector, typically a probability distribution over chain states.
#[derive(Debug, Clone, PartialEq)]
pub struct RowVector(pub Vec<f64>);

impl RowVector {
    /// Unit vector `e_index` of length `len`.
    pub fn unit(len: usize, index: usize) -> Self {
        let mut v = vec![0.0; len];
        v[index] = 1.0;
        Self(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Row vector times matrix.
    pub fn mul(&self, m: &Matrix) -> Result<RowVector> {
        if self.len() != m.rows {
            return Err(Error::DimensionMismatch {
                op: "vector-matrix product",
                left: (1, self.len()),
                right: (m.rows, m.cols),
            });
        }
        Ok(RowVector(vec_mat(&self.0, m)))
    }
}

pub(crate) fn vec_mat(v: &[f64], m: &Matrix) -> Vec<f64> {
    let mut out = vec![0.0; m.cols];
    for (i, &vi) in v.iter().enumerate() {
        if vi == 0.0 {
            continue;
        }
        for (o, &mij) in out.iter_mut().zip(m.row(i)) {
            *o += vi * mij;
        }
    }
    out
}

/// Standard matrix product.
pub fn mat_mul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::DimensionMismatch {
            op: "mat_mul",
            left: (a.rows, a.cols),
            right: (b.rows, b.cols),
        });
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        for k in 0..a.cols {
            let aik = a[(i, k)];
            if aik == 0.0 {
                continue;
            }
            let brow = b.row(k);
            let orow = &mut out.data[i * b.cols..(i + 1) * b.cols];
            for (o, &bkj) in orow.iter_mut().zip(brow) {
                *o += aik * bkj;
            }
        }
    }
    Ok(out)
}

/// Inverse by Gauss-Jordan elimination with partial pivoting.
pub fn mat_inverse(a: &Matrix) -> Result<Matrix> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            op: "mat_inverse",
            left: (a.rows, a.cols),
            right: (a.rows, a.cols),
        });
    }
    let n = a.rows;
    let mut work = a.clone();
    let mut inv = Matrix::identity(n);

    for col in 0..n {
        let (pivot_row, pivot_abs) = (col..n)
            .map(|r| (r, work[(r, col)].abs()))
            .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pivot_abs < PIVOT_THRESHOLD {
            return Err(Error::Singular { column: col, pivot: pivot_abs });
        }
        if pivot_row != col {
            swap_rows(&mut work, pivot_row, col);
            swap_rows(&mut inv, pivot_row, col);
        }
        let pivot = work[(col, col)];
        for j in 0..n {
            work[(col, j)] /= pivot;
            inv[(col, j)] /= pivot;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let factor = work[(r, col)];
            if factor == 0.0 {
                continue;
            }
            for j in 0..n {
                work[(r, j)] -= factor * work[(col, j)];
                inv[(r, j)] -= factor * inv[(col, j)];
            }
        }
    }
    Ok(inv)
}

/// Inverse of `I - Q` for a nonnegative substochastic `q`, where
/// `exit[i] = 1 - Σ_j q[i][j]` is supplied exactly rather than recomputed.
///
/// Elimination without pivoting on the M-matrix `I - Q`. Each pivot is rebuilt
/// as the row's exit mass plus the magnitudes of its remaining off-diagonal
/// entries, so every quantity is a sum of nonnegative terms and nothing
/// cancels. This keeps full relative accuracy even when the expected visit
/// counts reach `1e20`, where partial pivoting loses most of its digits.
pub fn absorbing_fundamental_inverse(q: &Matrix, exit: &[f64]) -> Result<Matrix> {
    if !q.is_square() || exit.len() != q.rows {
        return Err(Error::DimensionMismatch {
            op: "absorbing_fundamental_inverse",
            left: (q.rows, q.cols),
            right: (exit.len(), 1),
        });
    }
    if q.as_slice().iter().any(|v| *v < 0.0) || exit.iter().any(|v| v.is_nan() || *v < 0.0) {
        return Err(Error::InvalidMatrix("expected nonnegative Q and exit masses".into()));
    }
    let n = q.rows;
    // off-diagonal magnitudes of I - Q, i.e. q_ij for i != j
    let mut off = q.clone();
    for i in 0..n {
        off[(i, i)] = 0.0;
    }
    let mut slack = exit.to_vec();
    let mut lower = Matrix::zeros(n, n);
    let mut pivots = vec![0.0; n];

    for k in 0..n {
        let pivot = slack[k] + (k + 1..n).map(|j| off[(k, j)]).sum::<f64>();
        if pivot <= 0.0 || !pivot.is_normal() {
            return Err(Error::Singular { column: k, pivot });
        }
        pivots[k] = pivot;
        for i in k + 1..n {
            let m = off[(i, k)] / pivot;
            if m == 0.0 {
                continue;
            }
            lower[(i, k)] = m;
            for j in k + 1..n {
                if j != i {
                    off[(i, j)] += m * off[(k, j)];
                }
            }
            slack[i] += m * slack[k];
        }
    }

    // columns of the inverse: L y = e_c, then U x = y
    let mut inv = Matrix::zeros(n, n);
    let mut y = vec![0.0; n];
    for c in 0..n {
        for i in 0..n {
            let mut acc = if i == c { 1.0 } else { 0.0 };
            for k in 0..i {
                acc += lower[(i, k)] * y[k];
            }
            y[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = y[i];
            for j in i + 1..n {
                acc += off[(i, j)] * inv[(j, c)];
            }
            inv[(i, c)] = acc / pivots[i];
        }
    }
    Ok(inv)
}

fn swap_rows(m: &mut Matrix, a: usize, b: usize) {
    for j in 0..m.cols {
        m.data.swap(a * m.cols + j, b * m.cols + j);
    }
}

/// Returns `[v, vP, vP^2, ..., vP^steps]`.
///
/// `P^n` is never formed; each step is one vector-matrix product.
pub fn propagate(v: &RowVector, p_matrix: &Matrix, steps: usize) -> Result<Vec<RowVector>> {
    if v.len() != p_matrix.rows || !p_matrix.is_square() {
        return Err(Error::DimensionMismatch {
            op: "propagate",
            left: (1, v.len()),
            right: (p_matrix.rows, p_matrix.cols),
        });
    }
    p_matrix.check_row_stochastic()?;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(v.clone());
    for _ in 0..steps {
        let next = vec_mat(&out.last().expect("nonempty").0, p_matrix);
        out.push(RowVector(next));
    }
    Ok(out)
}

/// Upper bound on the spectral radius of `q` from `‖Q^m‖∞^(1/m)`.
///
/// Every `m` gives a valid bound, so this returns the smallest one seen over
/// `m = 1, 2, 4, ..., 2^max_doublings`. Powers are kept normalized with a
/// separate log scale so strongly decaying chains do not underflow.
pub fn spectral_radius_bound_with(q: &Matrix, max_doublings: u32) -> f64 {
    assert!(q.is_square(), "spectral_radius_bound needs a square matrix");
    let norm = q.norm_inf();
    if norm == 0.0 {
        return 0.0;
    }
    let mut best = norm;
    let mut power = q.clone();
    power.scale_in_place(1.0 / norm);
    // q^m = exp(log_scale) * power, with ‖power‖∞ = 1.
    let mut log_scale = norm.ln();
    let mut m = 1.0_f64;
    for _ in 0..max_doublings {
        let squared = mat_mul(&power, &power).expect("square");
        let sq_norm = squared.norm_inf();
        if sq_norm == 0.0 {
            // nilpotent
            return 0.0;
        }
        log_scale = 2.0 * log_scale + sq_norm.ln();
        m *= 2.0;
        best = best.min((log_scale / m).exp());
        power = squared;
        power.scale_in_place(1.0 / sq_norm);
    }
    best
}

/// [`spectral_radius_bound_with`] using up to `2^30` as the largest power.
pub fn spectral_radius_bound(q: &Matrix) -> f64 {
    spectral_radius_bound_with(q, 30)
}

/// True iff every entry of `Q^m` is below `tolerance` for some `m ≤ max_power`.
///
/// For nonnegative `q` with row sums at most one, the largest entry of `Q^m`
/// is nonincreasing in `m` (`Q^(m+1) = Q·Q^m` averages rows of `Q^m`), so it
/// suffices to test powers of two and finally `Q^max_power` itself. Matrices
/// outside that class fall back to checking every power.
pub fn verify_transience(q: &Matrix, tolerance: f64, max_power: u64) -> bool {
    assert!(q.is_square(), "verify_transience needs a square matrix");
    if max_power == 0 {
        return Matrix::identity(q.rows).max_abs_entry() < tolerance;
    }
    let substochastic = q.as_slice().iter().all(|v| *v >= 0.0)
        && q.row_sums().iter().all(|s| *s <= 1.0 + STOCHASTIC_TOLERANCE);
    if !substochastic {
        let mut power = q.clone();
        for m in 1..=max_power {
            if power.max_abs_entry() < tolerance {
                return true;
            }
            if m < max_power {
                power = mat_mul(q, &power).expect("square");
            }
        }
        return false;
    }

    // Q^(2^j) for 2^j <= max_power, then binary exponentiation for Q^max_power.
    let mut squares = vec![q.clone()];
    let mut exp = 1_u64;
    loop {
        if squares.last().expect("nonempty").max_abs_entry() < tolerance {
            return true;
        }
        match exp.checked_mul(2) {
            Some(next) if next <= max_power => {
                let last = squares.last().expect("nonempty");
                squares.push(mat_mul(last, last).expect("square"));
                exp = next;
            }
            _ => break,
        }
    }
    let mut acc: Option<Matrix> = None;
    for (bit, sq) in squares.iter().enumerate() {
        if max_power & (1 << bit) != 0 {
            acc = Some(match acc {
                None => sq.clone(),
                Some(a) => mat_mul(&a, sq).expect("square"),
            });
        }
    }
    acc.expect("max_power >= 1").max_abs_entry() < tolerance
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_product(a: &Matrix, b: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a[(i, k)] * b[(k, j)];
                }
                out[(i, j)] = s;
            }
        }
        out
    }

    fn single_q(k: usize, p: f64) -> Matrix {
        let mut q = Matrix::zeros(k, k);
        for i in 0..k {
            q[(i, 0)] = 1.0 - p;
            if i + 1 < k {
                q[(i, i + 1)] = p;
            }
        }
        q
    }

    #[test]
    fn identity_product() {
        let i3 = Matrix::identity(3);
        assert_eq!(mat_mul(&i3, &i3).unwrap(), i3);
    }

    #[test]
    fn swap_is_involution() {
        let s = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(mat_mul(&s, &s).unwrap(), Matrix::identity(2));
    }

    #[test]
    fn product_matches_triple_loop() {
        let a = Matrix::from_row_major(
            4,
            4,
            vec![
                0.3, -1.2, 2.5, 0.0, 4.1, 0.7, -0.2, 1.1, -3.3, 0.9, 0.05, 2.2, 1.0, 1.0, -1.0, 0.5,
            ],
        )
        .unwrap();
        let b = Matrix::from_row_major(
            4,
            4,
            vec![
                1.5, 0.2, -0.4, 3.0, 0.0, -2.1, 0.8, 1.9, 0.6, 0.6, 0.6, -0.6, 2.4, -1.7, 0.3, 0.1,
            ],
        )
        .unwrap();
        let got = mat_mul(&a, &b).unwrap();
        let want = naive_product(&a, &b);
        for (g, w) in got.as_slice().iter().zip(want.as_slice()) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn product_dimension_mismatch() {
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(2, 3);
        assert!(matches!(mat_mul(&a, &b), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn rejects_bad_shapes_and_values() {
        assert!(Matrix::from_row_major(2, 2, vec![1.0; 3]).is_err());
        assert!(Matrix::from_row_major(1, 1, vec![f64::NAN]).is_err());
        assert!(Matrix::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn inverse_of_identity_and_diagonal() {
        assert_eq!(mat_inverse(&Matrix::identity(5)).unwrap(), Matrix::identity(5));
        let inv = mat_inverse(&Matrix::diagonal(&[2.0, 4.0])).unwrap();
        assert_eq!(inv, Matrix::diagonal(&[0.5, 0.25]));
    }

    #[test]
    fn inverse_of_fundamental_system_multiplies_back() {
        let q = single_q(3, 0.5);
        let i_minus_q = Matrix::identity(3).sub(&q).unwrap();
        let inv = mat_inverse(&i_minus_q).unwrap();
        let back = mat_mul(&i_minus_q, &inv).unwrap();
        let err = back.sub(&Matrix::identity(3)).unwrap().norm_inf();
        assert!(err < 1e-9, "residual {err}");
    }

    #[test]
    fn inverse_needs_pivoting() {
        let a = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(mat_inverse(&a).unwrap(), a);
    }

    #[test]
    fn singular_inverse_is_an_error() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert!(matches!(mat_inverse(&a), Err(Error::Singular { .. })));
        let tiny = Matrix::diagonal(&[1.0, 1e-13]);
        assert!(matches!(mat_inverse(&tiny), Err(Error::Singular { .. })));
        assert!(mat_inverse(&Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn fundamental_inverse_agrees_with_pivoting() {
        let q = single_q(4, 0.4);
        let exit: Vec<f64> = vec![0.0, 0.0, 0.0, 0.4];
        let accurate = absorbing_fundamental_inverse(&q, &exit).unwrap();
        let pivoted = mat_inverse(&Matrix::identity(4).sub(&q).unwrap()).unwrap();
        for (a, b) in accurate.as_slice().iter().zip(pivoted.as_slice()) {
            assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0));
        }
    }

    #[test]
    fn fundamental_inverse_keeps_relative_accuracy() {
        // n11 = p^-K = 1e20 for K = 20, p = 0.1
        let q = single_q(20, 0.1);
        let mut exit = vec![0.0; 20];
        exit[19] = 0.1;
        let inv = absorbing_fundamental_inverse(&q, &exit).unwrap();
        assert!((inv[(0, 0)] / 1e20 - 1.0).abs() < 1e-12);
        assert!(mat_inverse(&Matrix::identity(20).sub(&q).unwrap()).is_err());
    }

    #[test]
    fn fundamental_inverse_detects_no_exit() {
        let q = single_q(3, 0.0);
        assert!(matches!(
            absorbing_fundamental_inverse(&q, &[0.0; 3]),
            Err(Error::Singular { .. })
        ));
        assert!(absorbing_fundamental_inverse(&q, &[0.0; 2]).is_err());
    }

    #[test]
    fn propagate_identity_is_constant() {
        let e1 = RowVector::unit(3, 0);
        let seq = propagate(&e1, &Matrix::identity(3), 5).unwrap();
        assert_eq!(seq.len(), 6);
        assert!(seq.iter().all(|v| *v == e1));
    }

    #[test]
    fn propagate_forced_absorption() {
        // K=2, p=1 chain: 1 -> 2 -> absorbing
        let p = Matrix::from_rows(&[vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![0.0, 0.0, 1.0]]).unwrap();
        let seq = propagate(&RowVector::unit(3, 0), &p, 2).unwrap();
        assert_eq!(seq[2].0, vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn propagate_k3_loss_tenth() {
        let mut p = Matrix::zeros(4, 4);
        for i in 0..3 {
            p[(i, 0)] = 0.9;
            p[(i, i + 1)] = 0.1;
        }
        p[(3, 3)] = 1.0;
        let seq = propagate(&RowVector::unit(4, 0), &p, 3).unwrap();
        assert!((seq[3].0[3] - 0.001).abs() < 1e-15);
        for v in &seq {
            assert!((v.sum() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn propagate_rejects_non_stochastic() {
        let p = Matrix::from_rows(&[vec![0.5, 0.4], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(
            propagate(&RowVector::unit(2, 0), &p, 1),
            Err(Error::NotStochastic(_))
        ));
        let neg = Matrix::from_rows(&[vec![1.5, -0.5], vec![0.0, 1.0]]).unwrap();
        assert!(propagate(&RowVector::unit(2, 0), &neg, 1).is_err());
        assert!(propagate(&RowVector::unit(3, 0), &Matrix::identity(2), 1).is_err());
    }

    #[test]
    fn spectral_bound_cases() {
        assert_eq!(spectral_radius_bound(&Matrix::zeros(3, 3)), 0.0);
        let id = spectral_radius_bound(&Matrix::identity(2));
        assert!((id - 1.0).abs() < 1e-12 && id >= 1.0 - 1e-15);
        assert!(spectral_radius_bound(&single_q(3, 0.5)) < 1.0);
        // strictly upper triangular is nilpotent
        let nil = Matrix::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(spectral_radius_bound(&nil), 0.0);
    }

    #[test]
    fn spectral_bound_is_tight_for_diagonal() {
        let d = Matrix::diagonal(&[0.3, 0.7]);
        assert!((spectral_radius_bound(&d) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn transience_cases() {
        assert!(verify_transience(&single_q(3, 0.9), 1e-12, 1 << 20));
        assert!(!verify_transience(&Matrix::identity(2), 1e-12, 1 << 20));
        // Q = [0.5]: 0.5^40 < 1e-12 < 0.5^39
        let half = single_q(1, 0.5);
        assert!(verify_transience(&half, 1e-12, 40));
        assert!(!verify_transience(&half, 1e-12, 39));
    }

    #[test]
    fn transience_general_matrix_fallback() {
        let q = Matrix::from_rows(&[vec![0.5, -0.2], vec![0.1, 0.3]]).unwrap();
        assert!(verify_transience(&q, 1e-6, 200));
        assert!(!verify_transience(&q, 1e-6, 2));
    }
}
