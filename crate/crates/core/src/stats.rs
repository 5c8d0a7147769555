//! Empirical split-time distributions and their comparison with the model.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::raft_sim::TrialOutcome;
use crate::split_model::{CompensatedSum, SplitDistribution};

pub const SUMMARY_QUANTILES: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

/// Right-continuous step CDF over integer steps.
pub trait StepCdf {
    /// `P(T <= step)`.
    fn value_at(&self, step: u64) -> f64;

    /// Steps at which the function may change.
    fn grid(&self) -> Vec<u64>;
}

/// Empirical CDF of uncensored split steps.
///
/// Fractions are taken over all trials, censored ones included, so the
/// curve estimates `P(T <= n)` below the censoring step and ends at
/// `1 - censored/total`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalCdf {
    pub steps: Vec<u64>,
    pub probabilities: Vec<f64>,
    pub sample_count: usize,
    pub censored_count: usize,
}

impl EmpiricalCdf {
    pub fn from_samples(samples: &[u64], censored_count: usize) -> Result<Self> {
        let total = samples.len() + censored_count;
        if total == 0 {
            return Err(Error::Empty("outcomes"));
        }
        if samples.is_empty() {
            return Err(Error::AllCensored(censored_count));
        }
        let mut sorted = samples.to_vec();
        sorted.sort_unstable();
        let mut steps = Vec::new();
        let mut probabilities = Vec::new();
        let mut seen = 0usize;
        for chunk in sorted.chunk_by(|a, b| a == b) {
            seen += chunk.len();
            steps.push(chunk[0]);
            probabilities.push(seen as f64 / total as f64);
        }
        Ok(Self {
            steps,
            probabilities,
            sample_count: total,
            censored_count,
        })
    }

    /// Mean of the distribution the curve puts mass on.
    pub fn implied_mean(&self) -> f64 {
        let mass = self.probabilities.last().copied().unwrap_or(0.0);
        let mut prev = 0.0;
        let mut acc = 0.0;
        for (&s, &p) in self.steps.iter().zip(&self.probabilities) {
            acc += s as f64 * (p - prev);
            prev = p;
        }
        acc / mass
    }
}

impl StepCdf for EmpiricalCdf {
    fn value_at(&self, step: u64) -> f64 {
        match self.steps.partition_point(|&s| s <= step) {
            0 => 0.0,
            i => self.probabilities[i - 1],
        }
    }

    fn grid(&self) -> Vec<u64> {
        self.steps.clone()
    }
}

impl StepCdf for SplitDistribution {
    /// Past the computed range the last value is held.
    fn value_at(&self, step: u64) -> f64 {
        match self.cdf.get(step as usize) {
            Some(v) => *v,
            None => self.cdf.last().copied().unwrap_or(0.0),
        }
    }

    fn grid(&self) -> Vec<u64> {
        (0..self.cdf.len() as u64).collect()
    }
}

/// Empirical CDF of the split steps of `outcomes`.
pub fn empirical_cdf(outcomes: &[TrialOutcome]) -> Result<EmpiricalCdf> {
    if outcomes.is_empty() {
        return Err(Error::Empty("outcomes"));
    }
    let samples: Vec<u64> = outcomes.iter().filter(|o| !o.censored).map(|o| o.split_step).collect();
    let censored = outcomes.len() - samples.len();
    EmpiricalCdf::from_samples(&samples, censored)
}

fn merged_grid(a: &dyn StepCdf, b: &dyn StepCdf) -> Vec<u64> {
    let mut grid = a.grid();
    grid.extend(b.grid());
    grid.sort_unstable();
    grid.dedup();
    grid
}

/// Kolmogorov-Smirnov distance `sup_n |A(n) - B(n)|` over the union of the
/// two step grids.
pub fn ks_distance(a: &dyn StepCdf, b: &dyn StepCdf) -> f64 {
    merged_grid(a, b)
        .into_iter()
        .map(|s| (a.value_at(s) - b.value_at(s)).abs())
        .fold(0.0, f64::max)
}

/// [`ks_distance`] restricted to steps `<= last_step`.
pub fn ks_distance_within(a: &dyn StepCdf, b: &dyn StepCdf, last_step: u64) -> f64 {
    merged_grid(a, b)
        .into_iter()
        .take_while(|&s| s <= last_step)
        .map(|s| (a.value_at(s) - b.value_at(s)).abs())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    /// Unbiased (n - 1) sample variance; 0 for a single sample.
    pub variance: f64,
    pub standard_error: f64,
    /// Keyed by the quantile level formatted as in [`SUMMARY_QUANTILES`].
    pub quantiles: BTreeMap<String, f64>,
    pub uncensored: usize,
    pub censored: usize,
}

/// Linear-interpolation quantile of sorted data (the usual "type 7").
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Mean, variance and quantiles of uncensored split steps.
pub fn summarize(outcomes: &[TrialOutcome]) -> Result<Summary> {
    let mut values: Vec<f64> = outcomes.iter().filter(|o| !o.censored).map(|o| o.split_step as f64).collect();
    let censored = outcomes.len() - values.len();
    if values.is_empty() {
        return Err(if outcomes.is_empty() {
            Error::Empty("outcomes")
        } else {
            Error::AllCensored(censored)
        });
    }
    values.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    let mut sum = CompensatedSum::default();
    values.iter().for_each(|v| sum.add(*v));
    let mean = sum.value() / n;
    let mut sq = CompensatedSum::default();
    values.iter().for_each(|v| sq.add((v - mean) * (v - mean)));
    let variance = if values.len() > 1 { sq.value() / (n - 1.0) } else { 0.0 };
    let quantiles = SUMMARY_QUANTILES
        .iter()
        .map(|&q| (format!("{q}"), quantile_sorted(&values, q)))
        .collect();
    Ok(Summary {
        mean,
        variance,
        standard_error: (variance / n).sqrt(),
        quantiles,
        uncensored: values.len(),
        censored,
    })
}
