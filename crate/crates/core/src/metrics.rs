//! Evaluation quantities for a single trial and for batches of trials.

use serde::{Deserialize, Serialize};

use crate::data::WorkerId;
use crate::error::{Error, Result};

/// IR verdicts tolerate this much negative utility.
pub const IR_SLACK: f64 = 1e-9;
/// Budget verdicts tolerate this much overshoot.
pub const BUDGET_SLACK: f64 = 1e-9;

/// `(1/M) sum_m |estimate_m - truth_m|`.
pub fn mae(estimates: &[f64], truths: &[f64]) -> Result<f64> {
    if estimates.len() != truths.len() {
        return Err(Error::Data(format!(
            "{} estimates for {} ground truths",
            estimates.len(),
            truths.len()
        )));
    }
    if truths.is_empty() {
        return Err(Error::Data("no tasks to score".into()));
    }
    Ok(estimates.iter().zip(truths).map(|(e, t)| (e - t).abs()).sum::<f64>() / truths.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBound {
    pub raw: f64,
    /// `raw` capped at 1.
    pub capped: f64,
}

/// `Pr(MAE >= alpha) <= sqrt(2/pi) sum_s delta_s / alpha`.
pub fn markov_error_bound(participant_deltas: &[f64], alpha_err: f64) -> Result<ErrorBound> {
    if !(alpha_err > 0.0) {
        return Err(Error::Domain(format!(
            "error threshold must be positive, got {alpha_err}"
        )));
    }
    let raw = (2.0 / std::f64::consts::PI).sqrt() * participant_deltas.iter().sum::<f64>() / alpha_err;
    Ok(ErrorBound {
        raw,
        capped: raw.min(1.0),
    })
}

/// Fraction of trials with `mae >= alpha_err`.
pub fn error_probability_estimate(trial_maes: &[f64], alpha_err: f64) -> Result<f64> {
    if trial_maes.is_empty() {
        return Err(Error::Data("no trials to estimate from".into()));
    }
    Ok(trial_maes.iter().filter(|&&m| m >= alpha_err).count() as f64 / trial_maes.len() as f64)
}

/// Normal-approximation standard error of a proportion.
pub fn binomial_standard_error(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Sample mean and standard deviation; the deviation is `None` below two
/// values.
pub fn mean_and_std(xs: &[f64]) -> Option<(f64, Option<f64>)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = (xs.len() > 1).then(|| (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    Some((mean, std))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IrVerdict {
    pub pass: bool,
    /// Smallest expected utility among participants.
    pub min_utility: Option<f64>,
    pub violations: usize,
}

pub fn verify_ir(expected_utilities: &[f64]) -> IrVerdict {
    let violations = expected_utilities.iter().filter(|&&u| !(u >= -IR_SLACK)).count();
    IrVerdict {
        pass: violations == 0,
        min_utility: expected_utilities.iter().copied().reduce(f64::min),
        violations,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RealizedTotals {
    pub count: usize,
    pub mean: f64,
    pub std_error: f64,
}

impl RealizedTotals {
    pub fn from_samples(totals: &[f64]) -> Option<Self> {
        let (mean, std) = mean_and_std(totals)?;
        let std_error = std.map_or(0.0, |s| s / (totals.len() as f64).sqrt());
        Some(Self {
            count: totals.len(),
            mean,
            std_error,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetVerdict {
    pub pass: bool,
    pub expected_total: f64,
    pub budget: f64,
    /// `max(0, expected_total - budget)`.
    pub overshoot: f64,
    pub realized: Option<RealizedTotals>,
}

pub fn verify_budget(expected_total: f64, budget: f64, realized_totals: &[f64]) -> BudgetVerdict {
    BudgetVerdict {
        pass: expected_total <= budget + BUDGET_SLACK,
        expected_total,
        budget,
        overshoot: (expected_total - budget).max(0.0),
        realized: RealizedTotals::from_samples(realized_totals),
    }
}

/// `APP / OPT`; `None` without participants.
pub fn approximation_ratio(app: f64, opt: f64, participant_count: usize) -> Option<f64> {
    (participant_count > 0).then(|| app / opt)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    /// Absent when nobody participated.
    pub mae: Option<f64>,
    /// Realized total payment; Theseus only.
    pub total_payment: Option<f64>,
    /// Realized payment minus sensing cost, per participant.
    pub realized_utilities: Vec<(WorkerId, f64)>,
    pub participant_count: usize,
    /// Sum of participating noise levels.
    pub app: f64,
    /// Smallest `delta_lo` over all workers.
    pub opt: f64,
    pub ir: Option<IrVerdict>,
    pub budget: Option<BudgetVerdict>,
    /// Set when thresholds came from the fallback window.
    pub ratio_guarantee_unavailable: bool,
    /// Set when calibration produced no feasible parameters.
    pub infeasible: bool,
}
