//! Iterative truth discovery.
//!
//! Alternates a weight update (each participant's weight is a decreasing
//! function of its total distance to the current estimates) with a weighted
//! average per task, until the estimates stop moving. [`Crh`] is the shipped
//! weight rule; anything implementing [`WeightRule`] can be plugged in.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{Error, Result};

/// Floor applied to a participant's squared-deviation sum before the log.
pub const CRH_EPSILON: f64 = 1e-12;

pub trait WeightRule {
    /// One non-negative, finite weight per participant, given the current
    /// per-task estimates.
    fn weights(&self, data: &DataMatrix, truths: &[f64]) -> Vec<f64>;
}

/// Log-ratio weights: `w_s = log(sum_s' D_s' / D_s)` with
/// `D_s = sum_m (x_m^s - x_m^*)^2` floored at `epsilon`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crh {
    pub epsilon: f64,
}

impl Default for Crh {
    fn default() -> Self {
        Self { epsilon: CRH_EPSILON }
    }
}

impl Crh {
    /// Raw log-ratio values before the zero floor.
    pub fn raw_weights(&self, data: &DataMatrix, truths: &[f64]) -> Vec<f64> {
        let dev: Vec<f64> = data
            .rows()
            .map(|row| {
                let d: f64 = row.iter().zip(truths).map(|(x, t)| (x - t).powi(2)).sum();
                d.max(self.epsilon)
            })
            .collect();
        let total: f64 = dev.iter().sum();
        dev.iter().map(|d| (total / d).ln()).collect()
    }
}

impl WeightRule for Crh {
    fn weights(&self, data: &DataMatrix, truths: &[f64]) -> Vec<f64> {
        self.raw_weights(data, truths).into_iter().map(|w| w.max(0.0)).collect()
    }
}

/// Computes [`Crh`] weights with the default regulariser.
pub fn crh_weights(data: &DataMatrix, truths: &[f64]) -> Vec<f64> {
    Crh::default().weights(data, truths)
}

/// `x_m^* = sum_s w_s x_m^s / sum_s w_s` for every task.
pub fn weighted_truths(data: &DataMatrix, weights: &[f64]) -> Result<Vec<f64>> {
    if weights.len() != data.participant_count() {
        return Err(Error::Aggregation(format!(
            "{} weights for {} participants",
            weights.len(),
            data.participant_count()
        )));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::Aggregation(
            "weights must be finite, non-negative, and not all zero".into(),
        ));
    }
    let mut out = vec![0.0; data.task_count()];
    for (row, &w) in data.rows().zip(weights) {
        if w == 0.0 {
            continue;
        }
        for (acc, x) in out.iter_mut().zip(row) {
            *acc += w * x;
        }
    }
    // Clamp rounding spill outside the readings' span.
    for (t, (lo, hi)) in out.iter_mut().zip(data.task_ranges()) {
        *t = (*t / total).clamp(lo, hi);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Initialization {
    /// Unweighted per-task mean.
    Mean,
    /// Uniform draw within each task's reading range.
    Random { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for Convergence {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_iterations: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    /// Largest absolute change of any estimate in this iteration.
    pub max_change: f64,
    /// Participants whose weight was floored at zero.
    pub floored_weights: usize,
    /// All weights were zero, so equal weights were used instead.
    pub equal_weight_fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregationResult {
    pub truths: Vec<f64>,
    pub weights: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<IterationTrace>,
}

/// Runs truth discovery with the given weight rule.
///
/// A round in which every weight comes out zero (a lone participant, say)
/// falls back to equal weights and is flagged in the trace.
pub fn run_truth_discovery<W: WeightRule + ?Sized>(
    data: &DataMatrix,
    rule: &W,
    convergence: Convergence,
    init: Initialization,
) -> Result<AggregationResult> {
    if data.participant_count() == 0 {
        return Err(Error::Aggregation("no participants".into()));
    }
    if data.task_count() == 0 {
        return Err(Error::Aggregation("no tasks".into()));
    }
    let n = data.participant_count() as f64;
    let mut truths: Vec<f64> = match init {
        Initialization::Mean => (0..data.task_count())
            .map(|j| data.rows().map(|r| r[j]).sum::<f64>() / n)
            .collect(),
        Initialization::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            data.task_ranges()
                .into_iter()
                .map(|(lo, hi)| if hi > lo { rng.random_range(lo..=hi) } else { lo })
                .collect()
        }
    };
    let mut weights = vec![1.0; data.participant_count()];
    let mut trace = Vec::new();
    let mut converged = false;
    for _ in 0..convergence.max_iterations.max(1) {
        let raw = rule.weights(data, &truths);
        let floored_weights = raw.iter().filter(|w| !(**w > 0.0)).count();
        weights = raw
            .into_iter()
            .map(|w| if w.is_finite() { w.max(0.0) } else { 0.0 })
            .collect();
        let equal_weight_fallback = weights.iter().all(|w| *w == 0.0);
        if equal_weight_fallback {
            weights.iter_mut().for_each(|w| *w = 1.0);
        }
        let next = weighted_truths(data, &weights)?;
        let max_change = next.iter().zip(&truths).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        truths = next;
        trace.push(IterationTrace {
            max_change,
            floored_weights,
            equal_weight_fallback,
        });
        if max_change < convergence.tolerance {
            converged = true;
            break;
        }
    }
    Ok(AggregationResult {
        truths,
        weights,
        iterations: trace.len(),
        converged,
        trace,
    })
}

/// Truth discovery with CRH weights, mean initialisation and default
/// convergence settings.
pub fn run_crh(data: &DataMatrix) -> Result<AggregationResult> {
    run_truth_discovery(data, &Crh::default(), Convergence::default(), Initialization::Mean)
}
