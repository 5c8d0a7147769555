//! Absorbing Markov chain of a single follower's election counter, and the
//! network split distribution it induces over `N - 1` independent followers.
//!
//! All times are in heartbeat steps. Step `n` means "after the leader has
//! sent `n` heartbeats since the follower's counter was last reset".

use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::numerics::{absorbing_fundamental_inverse, Matrix, RowVector};

/// Default tail-mass threshold at which moment sums stop.
pub const DEFAULT_EPSILON: f64 = 1e-9;

/// Default hard limit on the number of steps summed for moments.
pub const DEFAULT_STEP_CAP: usize = 5_000_000;

/// Number of candidate followers that splits an `n_nodes` network.
pub fn split_threshold(n_nodes: usize) -> usize {
    n_nodes / 2 + 1
}

fn check_probability(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParams(format!("{name} must lie in [0, 1], got {p}")));
    }
    Ok(())
}

fn check_timeouts(timeouts: &[u32]) -> Result<()> {
    if timeouts.is_empty() {
        return Err(Error::InvalidParams("timeout set is empty".into()));
    }
    if timeouts.contains(&0) {
        return Err(Error::InvalidParams("timeout steps must be >= 1".into()));
    }
    if timeouts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParams(format!(
            "timeout steps must be strictly ascending without duplicates, got {timeouts:?}"
        )));
    }
    Ok(())
}

/// Inputs shared by every analytical quantity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelParams {
    pub n_nodes: usize,
    pub loss_rate: f64,
    pub timeout_steps: Vec<u32>,
    pub heartbeat_interval_ms: f64,
}

impl ModelParams {
    pub fn new(n_nodes: usize, loss_rate: f64, timeout_steps: Vec<u32>, heartbeat_interval_ms: f64) -> Result<Self> {
        let params = Self {
            n_nodes,
            loss_rate,
            timeout_steps,
            heartbeat_interval_ms,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_nodes < 3 {
            return Err(Error::InvalidParams(format!("need at least 3 nodes, got {}", self.n_nodes)));
        }
        check_probability("loss rate", self.loss_rate)?;
        check_timeouts(&self.timeout_steps)?;
        if !(self.heartbeat_interval_ms.is_finite() && self.heartbeat_interval_ms > 0.0) {
            return Err(Error::InvalidParams(format!(
                "heartbeat interval must be positive, got {}",
                self.heartbeat_interval_ms
            )));
        }
        Ok(())
    }

    pub fn followers(&self) -> usize {
        self.n_nodes - 1
    }

    pub fn chain(&self) -> Result<TransitionMatrix> {
        build_multi_timeout_chain(&self.timeout_steps, self.loss_rate)
    }

    /// Lazily evaluated absorption curve: recurrence when there is one
    /// timeout value, matrix propagation otherwise.
    pub fn curve_stream(&self) -> Result<AbsorptionStream> {
        match self.timeout_steps.as_slice() {
            [k] => AbsorptionStream::recurrence(*k, self.loss_rate),
            _ => Ok(AbsorptionStream::matrix(&self.chain()?)),
        }
    }

    pub fn curve(&self, max_step: usize) -> Result<AbsorptionCurve> {
        Ok(AbsorptionCurve {
            values: self.curve_stream()?.take(max_step + 1).collect(),
        })
    }

    /// Split-time mean and variance without materializing the curve.
    pub fn split_moments(&self, epsilon: f64, step_cap: usize) -> Result<SplitMoments> {
        if self.loss_rate == 0.0 {
            return Err(Error::NoAbsorption);
        }
        let tail = BinomialTail::new(self.n_nodes);
        let cdf = self.curve_stream()?.map(move |a| tail.split_probability(a));
        moments_from_cdf(cdf, epsilon, step_cap)
    }
}

/// Canonical-form absorbing chain: transient states first, then absorbing.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    pub full: Matrix,
    pub q_block: Matrix,
    pub r_block: Matrix,
    pub transient_count: usize,
    pub absorbing_count: usize,
    /// Over all `t + r` states; mass sits on the reset states only.
    pub initial_distribution: RowVector,
    pub loss_rate: f64,
    pub timeout_steps: Vec<u32>,
}

impl TransitionMatrix {
    /// Indices of the freshly-reset state `(i, K_i)` of each stage.
    pub fn reset_states(&self) -> Vec<usize> {
        self.timeout_steps
            .iter()
            .scan(0usize, |offset, &k| {
                let s = *offset;
                *offset += k as usize;
                Some(s)
            })
            .collect()
    }

    pub fn transient_initial(&self) -> &[f64] {
        &self.initial_distribution.0[..self.transient_count]
    }
}

/// Chain for a fixed timeout of `k` steps: state 0 is the reset counter,
/// state `k` is candidacy.
pub fn build_single_timeout_chain(k: u32, loss_rate: f64) -> Result<TransitionMatrix> {
    let chain = build_multi_timeout_chain(&[k], loss_rate)?;
    Ok(chain)
}

/// Chain for a timeout drawn uniformly from `timeouts` on every reset.
///
/// Stage `i` owns `K_i` consecutive transient states, counter value `K_i`
/// first. A lost heartbeat decrements the counter (or absorbs into stage
/// `i`'s candidate state); a received one jumps to the reset state of a
/// uniformly chosen stage.
pub fn build_multi_timeout_chain(timeouts: &[u32], loss_rate: f64) -> Result<TransitionMatrix> {
    check_timeouts(timeouts)?;
    check_probability("loss rate", loss_rate)?;

    let r = timeouts.len();
    let t: usize = timeouts.iter().map(|&k| k as usize).sum();
    let size = t + r;
    let reset_share = (1.0 - loss_rate) / r as f64;

    let mut full = Matrix::zeros(size, size);
    let mut offsets = Vec::with_capacity(r);
    let mut offset = 0usize;
    for &k in timeouts {
        offsets.push(offset);
        offset += k as usize;
    }

    for (stage, &k) in timeouts.iter().enumerate() {
        let base = offsets[stage];
        for c in 0..k as usize {
            let state = base + c;
            let lost_to = if c + 1 < k as usize { state + 1 } else { t + stage };
            full[(state, lost_to)] += loss_rate;
            for &reset in &offsets {
                full[(state, reset)] += reset_share;
            }
        }
    }
    for a in 0..r {
        full[(t + a, t + a)] = 1.0;
    }

    let mut initial = vec![0.0; size];
    for &reset in &offsets {
        initial[reset] = 1.0 / r as f64;
    }

    Ok(TransitionMatrix {
        q_block: full.block(0, 0, t, t),
        r_block: full.block(0, t, t, r),
        full,
        transient_count: t,
        absorbing_count: r,
        initial_distribution: RowVector(initial),
        loss_rate,
        timeout_steps: timeouts.to_vec(),
    })
}

/// Probability, per step `n`, that one follower is a candidate by step `n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AbsorptionCurve {
    pub values: Vec<f64>,
}

impl AbsorptionCurve {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, step: usize) -> Option<f64> {
        self.values.get(step).copied()
    }
}

/// Infinite iterator over the absorption curve `a_0, a_1, ...`.
#[derive(Debug, Clone)]
pub enum AbsorptionStream {
    Recurrence(RecurrenceState),
    Matrix(PropagationState),
}

#[derive(Debug, Clone)]
pub struct RecurrenceState {
    k: usize,
    p_k: f64,
    increment: f64,
    step: usize,
    // a_{n-1}, ..., a_{n-k-1}; front is the oldest
    history: std::collections::VecDeque<f64>,
}

#[derive(Debug, Clone)]
pub struct PropagationState {
    // sparse rows of Q
    q_rows: Vec<Vec<(usize, f64)>>,
    exit_prob: Vec<f64>,
    transient: Vec<f64>,
    absorbed: f64,
    started: bool,
}

impl AbsorptionStream {
    pub fn recurrence(k: u32, loss_rate: f64) -> Result<Self> {
        check_timeouts(&[k])?;
        check_probability("loss rate", loss_rate)?;
        let k = k as usize;
        let p_k = loss_rate.powi(k as i32);
        Ok(Self::Recurrence(RecurrenceState {
            k,
            p_k,
            increment: (1.0 - loss_rate) * p_k,
            step: 0,
            history: std::collections::VecDeque::with_capacity(k + 2),
        }))
    }

    pub fn matrix(chain: &TransitionMatrix) -> Self {
        let t = chain.transient_count;
        let q_rows = (0..t)
            .map(|i| {
                chain
                    .q_block
                    .row(i)
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(j, v)| (j, *v))
                    .collect()
            })
            .collect();
        let exit_prob = chain.r_block.row_sums();
        let absorbed = chain.initial_distribution.0[t..].iter().sum();
        Self::Matrix(PropagationState {
            q_rows,
            exit_prob,
            transient: chain.transient_initial().to_vec(),
            absorbed,
            started: false,
        })
    }
}

impl Iterator for AbsorptionStream {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        match self {
            Self::Recurrence(s) => {
                let n = s.step;
                let value = if n < s.k {
                    0.0
                } else if n == s.k {
                    s.p_k
                } else {
                    let prev = *s.history.back().expect("history holds a_{n-1}");
                    // a_{n-k-1}; indices below zero read as 0
                    let lagged = if s.history.len() == s.k + 1 { s.history[0] } else { 0.0 };
                    prev + (1.0 - lagged) * s.increment
                };
                s.history.push_back(value);
                if s.history.len() > s.k + 1 {
                    s.history.pop_front();
                }
                s.step += 1;
                Some(value.min(1.0))
            }
            Self::Matrix(s) => {
                if s.started {
                    let mut next = vec![0.0; s.transient.len()];
                    let mut exiting = 0.0;
                    for (i, &mass) in s.transient.iter().enumerate() {
                        if mass == 0.0 {
                            continue;
                        }
                        exiting += mass * s.exit_prob[i];
                        for &(j, q) in &s.q_rows[i] {
                            next[j] += mass * q;
                        }
                    }
                    s.transient = next;
                    s.absorbed += exiting;
                }
                s.started = true;
                Some(s.absorbed.min(1.0))
            }
        }
    }
}

/// Closed recurrence for the single-timeout chain, `n = 0..=max_step`.
pub fn absorption_curve_recurrence(k: u32, loss_rate: f64, max_step: usize) -> Result<AbsorptionCurve> {
    let stream = AbsorptionStream::recurrence(k, loss_rate)?;
    Ok(AbsorptionCurve {
        values: stream.take(max_step + 1).collect(),
    })
}

/// Recurrence for a timeout set; refuses more than one timeout value.
pub fn absorption_curve_recurrence_for(timeouts: &[u32], loss_rate: f64, max_step: usize) -> Result<AbsorptionCurve> {
    match timeouts {
        [k] => absorption_curve_recurrence(*k, loss_rate, max_step),
        _ => Err(Error::RecurrenceNeedsSingleTimeout(timeouts.len())),
    }
}

/// Absorbed mass after propagating the chain's initial distribution.
pub fn absorption_curve_matrix(chain: &TransitionMatrix, max_step: usize) -> AbsorptionCurve {
    AbsorptionCurve {
        values: AbsorptionStream::matrix(chain).take(max_step + 1).collect(),
    }
}

/// Kahan-compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub(crate) fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum
    }
}

/// `P(Binomial(N - 1, a) >= floor(N/2) + 1)` evaluated in log space.
#[derive(Debug, Clone)]
pub struct BinomialTail {
    followers: usize,
    threshold: usize,
    ln_choose: Vec<f64>,
}

impl BinomialTail {
    pub fn new(n_nodes: usize) -> Self {
        let followers = n_nodes.saturating_sub(1);
        let ln_f = ln_gamma(followers as f64 + 1.0);
        let ln_choose = (0..=followers)
            .map(|m| ln_f - ln_gamma(m as f64 + 1.0) - ln_gamma((followers - m) as f64 + 1.0))
            .collect();
        Self {
            followers,
            threshold: split_threshold(n_nodes),
            ln_choose,
        }
    }

    /// `(P(split), P(no split))`, each summed directly so whichever is
    /// small keeps its relative accuracy.
    fn tails(&self, a: f64) -> (f64, f64) {
        if a <= 0.0 {
            return (0.0, 1.0);
        }
        if a >= 1.0 {
            return (1.0, 0.0);
        }
        let ln_a = a.ln();
        let ln_b = (-a).ln_1p();
        let term = |m: usize| (self.ln_choose[m] + m as f64 * ln_a + (self.followers - m) as f64 * ln_b).exp();
        let mut upper = CompensatedSum::default();
        for m in (self.threshold..=self.followers).rev() {
            upper.add(term(m));
        }
        let mut lower = CompensatedSum::default();
        for m in 0..self.threshold {
            lower.add(term(m));
        }
        (upper.value().clamp(0.0, 1.0), lower.value().clamp(0.0, 1.0))
    }

    pub fn split_probability(&self, a: f64) -> f64 {
        let (upper, lower) = self.tails(a);
        if upper <= 0.5 {
            upper
        } else {
            (1.0 - lower).clamp(0.0, 1.0)
        }
    }

    /// `1 - split_probability(a)` without cancellation.
    pub fn no_split_probability(&self, a: f64) -> f64 {
        let (upper, lower) = self.tails(a);
        if lower <= 0.5 {
            lower
        } else {
            (1.0 - upper).clamp(0.0, 1.0)
        }
    }
}

/// Split probability when the candidate count is approximated as
/// `Poisson((N - 1) a)`.
///
/// The pmf uses `exp(-lambda)`; a positive exponent would not be a
/// probability distribution.
#[derive(Debug, Clone)]
pub struct PoissonTail {
    followers: usize,
    threshold: usize,
}

impl PoissonTail {
    pub fn new(n_nodes: usize) -> Self {
        Self {
            followers: n_nodes.saturating_sub(1),
            threshold: split_threshold(n_nodes),
        }
    }

    pub fn split_probability(&self, a: f64) -> f64 {
        let lambda = self.followers as f64 * a;
        if lambda <= 0.0 {
            return 0.0;
        }
        let ln_lambda = lambda.ln();
        let term = |m: usize| (-lambda + m as f64 * ln_lambda - ln_gamma(m as f64 + 1.0)).exp();
        if lambda < self.threshold as f64 {
            // terms shrink geometrically past the mode; sum the tail directly
            let mut upper = CompensatedSum::default();
            let mut m = self.threshold;
            loop {
                let t = term(m);
                upper.add(t);
                if t <= 1e-18 * upper.value() || t == 0.0 || m > self.threshold + 10_000 {
                    break;
                }
                m += 1;
            }
            return upper.value().clamp(0.0, 1.0);
        }
        let mut lower = CompensatedSum::default();
        for m in 0..self.threshold {
            lower.add(term(m));
        }
        (1.0 - lower.value()).clamp(0.0, 1.0)
    }
}

/// Distribution of the network split step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitDistribution {
    pub cdf: Vec<f64>,
    pub pdf: Vec<f64>,
    pub mean_steps: f64,
    pub variance_steps: f64,
    pub truncation_step: usize,
    pub truncated_tail_mass: f64,
    /// Set when the sums stopped before the tail fell under epsilon.
    pub truncated_by_cap: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SplitMoments {
    pub mean_steps: f64,
    pub variance_steps: f64,
    pub truncation_step: usize,
    pub truncated_tail_mass: f64,
    pub truncated_by_cap: bool,
}

/// Mean from the tail sum `Σ (1 - F(n))`, variance from `Σ n² f(n) - mean²`.
///
/// Stops at the first step whose tail mass is below `epsilon`, or after
/// `step_cap` steps (or when `cdf` runs out), which is flagged.
pub fn moments_from_cdf(cdf: impl IntoIterator<Item = f64>, epsilon: f64, step_cap: usize) -> Result<SplitMoments> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParams(format!("epsilon must be in (0, 1), got {epsilon}")));
    }
    if step_cap == 0 {
        return Err(Error::InvalidParams("step cap must be >= 1".into()));
    }
    let mut mean = CompensatedSum::default();
    let mut second = CompensatedSum::default();
    let mut prev = 0.0_f64;
    let mut last_step = None;
    let mut tail = 1.0;
    for (n, f) in cdf.into_iter().enumerate() {
        let f = f.max(prev);
        tail = 1.0 - f;
        mean.add(tail);
        let nf = n as f64;
        second.add(nf * nf * (f - prev));
        prev = f;
        last_step = Some(n);
        if tail < epsilon {
            break;
        }
        if n + 1 >= step_cap {
            break;
        }
    }
    let truncation_step = last_step.ok_or(Error::Empty("cdf"))?;
    let mean = mean.value();
    Ok(SplitMoments {
        mean_steps: mean,
        variance_steps: (second.value() - mean * mean).max(0.0),
        truncation_step,
        truncated_tail_mass: tail,
        truncated_by_cap: tail >= epsilon,
    })
}

fn distribution_from_cdf(raw: impl Iterator<Item = f64>) -> SplitDistribution {
    let mut cdf = Vec::new();
    let mut prev = 0.0_f64;
    for f in raw {
        // keeps round-off from producing negative pdf entries
        let f = f.max(prev);
        cdf.push(f);
        prev = f;
    }
    let pdf = cdf
        .iter()
        .scan(0.0, |last, &f| {
            let d = f - *last;
            *last = f;
            Some(d)
        })
        .collect();
    let moments = moments_from_cdf(cdf.iter().copied(), DEFAULT_EPSILON, usize::MAX).expect("valid defaults");
    SplitDistribution {
        cdf,
        pdf,
        mean_steps: moments.mean_steps,
        variance_steps: moments.variance_steps,
        truncation_step: moments.truncation_step,
        truncated_tail_mass: moments.truncated_tail_mass,
        truncated_by_cap: moments.truncated_by_cap,
    }
}

/// Binomial split CDF over the steps covered by `curve`.
pub fn split_cdf(curve: &AbsorptionCurve, n_nodes: usize) -> SplitDistribution {
    let tail = BinomialTail::new(n_nodes);
    distribution_from_cdf(curve.values.iter().map(|&a| tail.split_probability(a)))
}

/// Poisson-approximated split CDF over the steps covered by `curve`.
pub fn split_cdf_poisson(curve: &AbsorptionCurve, n_nodes: usize) -> SplitDistribution {
    let tail = PoissonTail::new(n_nodes);
    distribution_from_cdf(curve.values.iter().map(|&a| tail.split_probability(a)))
}

/// Moments of the binomial split distribution for a precomputed curve.
pub fn split_moments(curve: &AbsorptionCurve, n_nodes: usize, epsilon: f64, step_cap: usize) -> Result<SplitMoments> {
    let tail = BinomialTail::new(n_nodes);
    moments_from_cdf(curve.values.iter().map(|&a| tail.split_probability(a)), epsilon, step_cap)
}

/// Expected number of candidates at `step`.
pub fn expected_candidates(curve: &AbsorptionCurve, n_nodes: usize, step: usize) -> Option<f64> {
    curve.get(step).map(|a| (n_nodes - 1) as f64 * a)
}

/// Expected number of heartbeat replies (followers still following) at `step`.
pub fn expected_replies(curve: &AbsorptionCurve, n_nodes: usize, step: usize) -> Option<f64> {
    curve.get(step).map(|a| (n_nodes - 1) as f64 * (1.0 - a))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FundamentalMatrix {
    pub n_matrix: Matrix,
    /// Expected visits to reset states, i.e. heartbeats received including
    /// the one that started the term.
    pub expected_heartbeats: f64,
    pub time_to_candidate_steps: f64,
    pub mean_receipt_interval_steps: f64,
}

/// `N = (I - Q)^-1` and the per-follower expectations derived from it.
pub fn fundamental_matrix(chain: &TransitionMatrix) -> Result<FundamentalMatrix> {
    if chain.loss_rate == 0.0 {
        return Err(Error::NoAbsorption);
    }
    let n_matrix = absorbing_fundamental_inverse(&chain.q_block, &chain.r_block.row_sums())?;
    let init = chain.transient_initial();
    let resets = chain.reset_states();

    let mut heartbeats = 0.0;
    let mut time = 0.0;
    for (i, &w) in init.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let row = n_matrix.row(i);
        heartbeats += w * resets.iter().map(|&j| row[j]).sum::<f64>();
        time += w * row.iter().sum::<f64>();
    }
    Ok(FundamentalMatrix {
        n_matrix,
        expected_heartbeats: heartbeats,
        time_to_candidate_steps: time,
        mean_receipt_interval_steps: time / heartbeats,
    })
}
