//! Choosing payment parameters and participation thresholds.
//!
//! Complete information (costs known per worker):
//!
//! ```text
//! a_s >= c_s1 / (2 lo)                                   slope floor
//! b_s  = a_s (t^2 + A(t)) - c_s1 t + c_s2                intercept calibration
//! sum b_s <= B + sum 2 a_s lo^2                          budget cap
//! ```
//!
//! Incomplete information (only `c1 in [c1_lo, c1_hi]`, `c2 in [c2_lo, c2_hi]`):
//!
//! ```text
//! a_s >= c1_hi / (2 lo)                                  slope floor
//! b_s <= a_s (h^2 + A(h)) - c1_hi h + c2_lo              intercept ceiling
//! b_s >= a_s (l^2 + A(h)) - c1_lo l + c2_hi              intercept floor
//! sum b_s <= B + sum 2 a_s lo^2                          budget cap
//! ```
//!
//! where `lo` is the bottom of the quality support, `A` the truncated second
//! moment, and `t` (resp. `l < h`) the participation thresholds. Thresholds
//! are drawn from `[participation_lower_bound, approx_upper_bound]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::WorkerId;
use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::payment::{PaymentParams, WorkerPayment};
use crate::population::{CostBounds, WorkerProfile};
use crate::quality::QualityDistribution;

/// Numeric slack used when checking conditions.
pub const CONDITION_SLACK: f64 = 1e-9;

/// Absolute tolerance of the upper-bound bisection.
pub const ROOT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuaranteeTargets {
    /// Required probability that at least one worker participates.
    pub theta: f64,
    /// Approximation-ratio threshold (> 1).
    pub alpha_ratio: f64,
    /// Allowed probability of exceeding `alpha_ratio`.
    pub beta: f64,
}

impl GuaranteeTargets {
    pub fn new(theta: f64, alpha_ratio: f64, beta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::Config(format!("theta must lie in (0, 1), got {theta}")));
        }
        if !(alpha_ratio > 1.0 && alpha_ratio.is_finite()) {
            return Err(Error::Config(format!("alpha_ratio must exceed 1, got {alpha_ratio}")));
        }
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::Config(format!("beta must lie in (0, 1), got {beta}")));
        }
        Ok(Self {
            theta,
            alpha_ratio,
            beta,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Complete,
    Incomplete,
}

/// Smallest threshold guaranteeing `Pr(min_s delta_lo_s <= threshold) >= theta`:
/// `F^-1(1 - (1 - theta)^(1/S))`.
pub fn participation_lower_bound(dist: &dyn QualityDistribution, worker_count: usize, theta: f64) -> Result<f64> {
    if worker_count == 0 {
        return Err(Error::Domain("worker count must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&theta) {
        return Err(Error::Domain(format!("theta must lie in [0, 1), got {theta}")));
    }
    // 1 - (1-theta)^(1/S), computed without cancellation.
    let p = -((1.0 - theta).ln() / worker_count as f64).exp_m1();
    dist.quantile(p.clamp(0.0, 1.0))
}

/// `g(t) = t + sqrt(-2 / (S ln beta)) * (R(t) S - lo * alpha)`. The ratio
/// guarantee holds for every threshold with `g <= 0`.
pub fn ratio_bound_gap(
    dist: &dyn QualityDistribution,
    worker_count: usize,
    targets: &GuaranteeTargets,
    t: f64,
) -> Result<f64> {
    let s = worker_count as f64;
    let k = (-2.0 / (s * targets.beta.ln())).sqrt();
    Ok(t + k * (dist.truncated_first_moment(t)? * s - dist.support_lo() * targets.alpha_ratio))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UpperBound {
    Root {
        value: f64,
    },
    /// `g` keeps one sign over the support; values at both ends reported.
    NoSolution {
        g_lo: f64,
        g_hi: f64,
    },
}

impl UpperBound {
    pub fn root(&self) -> Option<f64> {
        match *self {
            UpperBound::Root { value } => Some(value),
            UpperBound::NoSolution { .. } => None,
        }
    }

    /// True when the ratio guarantee holds on the whole support.
    pub fn holds_everywhere(&self) -> bool {
        matches!(*self, UpperBound::NoSolution { g_hi, .. } if g_hi <= 0.0)
    }
}

/// Largest threshold for which `Pr(APP/OPT >= alpha) <= beta` is guaranteed,
/// found by bisection on the increasing function [`ratio_bound_gap`].
pub fn approx_upper_bound(
    dist: &dyn QualityDistribution,
    worker_count: usize,
    targets: &GuaranteeTargets,
) -> Result<UpperBound> {
    if worker_count == 0 {
        return Err(Error::Domain("worker count must be at least 1".into()));
    }
    let (lo, hi) = (dist.support_lo(), dist.support_hi());
    let left = lo + 1e-12 * (hi - lo);
    let g_lo = ratio_bound_gap(dist, worker_count, targets, left)?;
    let g_hi = ratio_bound_gap(dist, worker_count, targets, hi)?;
    if g_lo > 0.0 || g_hi < 0.0 {
        return Ok(UpperBound::NoSolution { g_lo, g_hi });
    }
    let (mut a, mut b) = (left, hi);
    while b - a > ROOT_TOL * 1e-3 {
        let mid = 0.5 * (a + b);
        if ratio_bound_gap(dist, worker_count, targets, mid)? <= 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(UpperBound::Root { value: 0.5 * (a + b) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scenario", rename_all = "snake_case")]
pub enum Thresholds {
    Complete { delta_t: f64 },
    Incomplete { delta_l: f64, delta_h: f64 },
}

impl Thresholds {
    /// Threshold whose truncated second moment is the reference moment:
    /// `delta_t`, or `delta_h`.
    pub fn reference_cap(&self) -> f64 {
        match *self {
            Thresholds::Complete { delta_t } => delta_t,
            Thresholds::Incomplete { delta_h, .. } => delta_h,
        }
    }

    /// Threshold that governs guaranteed participation.
    pub fn participation_cap(&self) -> f64 {
        match *self {
            Thresholds::Complete { delta_t } => delta_t,
            Thresholds::Incomplete { delta_l, .. } => delta_l,
        }
    }
}

/// Window from which thresholds are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdWindow {
    pub window: Interval,
    /// False when the ratio guarantee cannot be met inside the window and
    /// the window fell back to `[lower bound, support_hi]`.
    pub ratio_guarantee: bool,
}

/// Combines the two bounds. A usable root gives `[lower, root]`; otherwise
/// the window is `[lower, support_hi]` and the ratio guarantee holds only if
/// `g <= 0` on the whole support.
pub fn threshold_window(
    dist: &dyn QualityDistribution,
    lower: f64,
    upper: &UpperBound,
    scenario: Scenario,
) -> Result<ThresholdWindow> {
    let hi = dist.support_hi();
    let root_usable = |r: f64| match scenario {
        Scenario::Complete => r >= lower,
        Scenario::Incomplete => r > lower,
    };
    let (upper, ratio_guarantee) = match upper.root() {
        Some(r) if root_usable(r) => (r, true),
        Some(_) => (hi, false),
        None => (hi, upper.holds_everywhere()),
    };
    Ok(ThresholdWindow {
        window: Interval::new(lower, upper)?,
        ratio_guarantee,
    })
}

/// Draws thresholds uniformly from the window; the incomplete scenario sorts
/// two independent draws.
pub fn draw_thresholds<R: Rng>(window: &ThresholdWindow, scenario: Scenario, rng: &mut R) -> Result<Thresholds> {
    let w = window.window;
    match scenario {
        Scenario::Complete => Ok(Thresholds::Complete {
            delta_t: w.lerp(rng.random()),
        }),
        Scenario::Incomplete => {
            if !(w.hi() > w.lo()) {
                return Err(Error::Domain(
                    "degenerate threshold window; need delta_l < delta_h".into(),
                ));
            }
            for _ in 0..64 {
                let (x, y) = (w.lerp(rng.random()), w.lerp(rng.random()));
                if x != y {
                    return Ok(Thresholds::Incomplete {
                        delta_l: x.min(y),
                        delta_h: x.max(y),
                    });
                }
            }
            Err(Error::Domain("could not draw distinct thresholds".into()))
        }
    }
}

/// Result of a parameter generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum ParamOutcome {
    Feasible {
        params: PaymentParams,
        budget_slack: f64,
    },
    /// `candidate` satisfies every condition except those named in `reason`.
    Infeasible {
        candidate: Vec<WorkerPayment>,
        min_budget: f64,
        shortfall: f64,
        reason: String,
    },
}

impl ParamOutcome {
    pub fn params(&self) -> Option<&PaymentParams> {
        match self {
            ParamOutcome::Feasible { params, .. } => Some(params),
            ParamOutcome::Infeasible { .. } => None,
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.params().is_some()
    }
}

/// `sum_s (b_s - 2 a_s lo^2)`: the smallest budget passing the budget cap.
pub fn minimum_budget(payments: &[WorkerPayment], support_lo: f64) -> f64 {
    payments.iter().map(|p| p.b - 2.0 * p.a * support_lo * support_lo).sum()
}

fn finish(payments: Vec<WorkerPayment>, budget: f64, support_lo: f64) -> Result<ParamOutcome> {
    let min_budget = minimum_budget(&payments, support_lo);
    if let Some(bad) = payments.iter().find(|p| !(p.b > 0.0)) {
        return Ok(ParamOutcome::Infeasible {
            min_budget,
            shortfall: 0.0,
            reason: format!("worker {}: intercept {} is not positive", bad.worker_id, bad.b),
            candidate: payments,
        });
    }
    if min_budget > budget {
        return Ok(ParamOutcome::Infeasible {
            candidate: payments,
            min_budget,
            shortfall: min_budget - budget,
            reason: "budget below the minimum required by the budget cap".into(),
        });
    }
    Ok(ParamOutcome::Feasible {
        params: PaymentParams::new(budget, payments)?,
        budget_slack: budget - min_budget,
    })
}

/// Complete-information parameters at the slope floor `a_s = c_s1 / (2 lo)`
/// and the calibrated intercept.
pub fn generate_complete_params(
    workers: &[WorkerProfile],
    delta_t: f64,
    dist: &dyn QualityDistribution,
    budget: f64,
) -> Result<ParamOutcome> {
    let lo = dist.support_lo();
    let a_t = dist.truncated_second_moment(delta_t)?;
    let payments = workers
        .iter()
        .map(|w| {
            let a = w.cost_slope / (2.0 * lo);
            let b = a * (delta_t * delta_t + a_t) - w.cost_slope * delta_t + w.cost_intercept;
            WorkerPayment { worker_id: w.id, a, b }
        })
        .collect();
    finish(payments, budget, lo)
}

/// Slope for the incomplete scenario: the floor `c1_hi / (2 lo)`, raised if
/// needed to the point where the intercept interval becomes non-empty.
pub fn incomplete_slope(bounds: &CostBounds, delta_l: f64, delta_h: f64, support_lo: f64) -> f64 {
    let floor = bounds.c1_hi / (2.0 * support_lo);
    let crossing = (bounds.c1_hi * delta_h - bounds.c1_lo * delta_l + bounds.c2_hi - bounds.c2_lo)
        / (delta_h * delta_h - delta_l * delta_l);
    floor.max(crossing)
}

/// Intercept interval `[floor, ceiling]` for slope `a`.
pub fn intercept_interval(a: f64, bounds: &CostBounds, delta_l: f64, delta_h: f64, a_h: f64) -> (f64, f64) {
    let floor = a * (delta_l * delta_l + a_h) - bounds.c1_lo * delta_l + bounds.c2_hi;
    let ceiling = a * (delta_h * delta_h + a_h) - bounds.c1_hi * delta_h + bounds.c2_lo;
    (floor, ceiling)
}

/// Incomplete-information parameters: one slope for everyone and the
/// intercept at the bottom of its feasible interval.
pub fn generate_incomplete_params(
    worker_ids: &[WorkerId],
    bounds: &CostBounds,
    delta_l: f64,
    delta_h: f64,
    dist: &dyn QualityDistribution,
    budget: f64,
) -> Result<ParamOutcome> {
    let lo = dist.support_lo();
    if !(lo <= delta_l && delta_l < delta_h && delta_h <= dist.support_hi()) {
        return Err(Error::Domain(format!(
            "thresholds must satisfy {lo} <= delta_l < delta_h <= {}, got {delta_l}, {delta_h}",
            dist.support_hi()
        )));
    }
    let a_h = dist.truncated_second_moment(delta_h)?;
    let a = incomplete_slope(bounds, delta_l, delta_h, lo);
    let (b, _) = intercept_interval(a, bounds, delta_l, delta_h, a_h);
    let payments = worker_ids
        .iter()
        .map(|&worker_id| WorkerPayment { worker_id, a, b })
        .collect();
    finish(payments, budget, lo)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionKind {
    SlopeFloor,
    InterceptCalibration,
    InterceptCeiling,
    InterceptFloor,
    BudgetCap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionVerdict {
    pub kind: ConditionKind,
    /// `None` for pool-wide conditions.
    pub worker_id: Option<WorkerId>,
    pub satisfied: bool,
    /// Signed slack: positive means satisfied with room to spare, negative
    /// is the size of the violation. Equalities report `-|difference|`.
    pub margin: f64,
}

/// What the conditions are checked against.
#[derive(Debug, Clone, Copy)]
pub enum ConditionInputs<'a> {
    Complete {
        workers: &'a [WorkerProfile],
        delta_t: f64,
    },
    Incomplete {
        bounds: CostBounds,
        delta_l: f64,
        delta_h: f64,
    },
}

fn slack(scale: f64) -> f64 {
    CONDITION_SLACK * scale.abs().max(1.0)
}

fn at_least(kind: ConditionKind, worker_id: Option<WorkerId>, value: f64, bound: f64) -> ConditionVerdict {
    let margin = value - bound;
    ConditionVerdict {
        kind,
        worker_id,
        satisfied: margin >= -slack(bound),
        margin,
    }
}

/// Evaluates every applicable condition independently.
pub fn check_conditions(
    params: &PaymentParams,
    inputs: ConditionInputs<'_>,
    dist: &dyn QualityDistribution,
) -> Result<Vec<ConditionVerdict>> {
    let lo = dist.support_lo();
    let mut out = Vec::new();
    match inputs {
        ConditionInputs::Complete { workers, delta_t } => {
            let a_t = dist.truncated_second_moment(delta_t)?;
            for w in workers {
                let p = params
                    .get(w.id)
                    .ok_or_else(|| Error::Config(format!("no payment parameters for worker {}", w.id)))?;
                out.push(at_least(
                    ConditionKind::SlopeFloor,
                    Some(w.id),
                    p.a,
                    w.cost_slope / (2.0 * lo),
                ));
                let target = p.a * (delta_t * delta_t + a_t) - w.cost_slope * delta_t + w.cost_intercept;
                let diff = (p.b - target).abs();
                out.push(ConditionVerdict {
                    kind: ConditionKind::InterceptCalibration,
                    worker_id: Some(w.id),
                    satisfied: diff <= slack(target),
                    margin: -diff,
                });
            }
        }
        ConditionInputs::Incomplete {
            bounds,
            delta_l,
            delta_h,
        } => {
            let a_h = dist.truncated_second_moment(delta_h)?;
            for p in &params.workers {
                out.push(at_least(
                    ConditionKind::SlopeFloor,
                    Some(p.worker_id),
                    p.a,
                    bounds.c1_hi / (2.0 * lo),
                ));
                let (floor, ceiling) = intercept_interval(p.a, &bounds, delta_l, delta_h, a_h);
                out.push(at_least(
                    ConditionKind::InterceptCeiling,
                    Some(p.worker_id),
                    ceiling,
                    p.b,
                ));
                out.push(at_least(ConditionKind::InterceptFloor, Some(p.worker_id), p.b, floor));
            }
        }
    }
    let min_budget = minimum_budget(&params.workers, lo);
    out.push(at_least(ConditionKind::BudgetCap, None, params.budget, min_budget));
    Ok(out)
}

pub fn all_satisfied(verdicts: &[ConditionVerdict]) -> bool {
    verdicts.iter().all(|v| v.satisfied)
}

/// How thresholds are chosen for a calibration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdChoice {
    /// Uniform draw from the threshold window.
    Draw {
        seed: u64,
    },
    Fixed(Thresholds),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub scenario: Scenario,
    pub worker_count: usize,
    pub delta_lower: f64,
    pub delta_upper: UpperBound,
    pub window: ThresholdWindow,
    pub thresholds: Thresholds,
    /// `A` at the reference threshold: the reference worker's second moment.
    pub reference_second_moment: f64,
    pub outcome: ParamOutcome,
    pub verdicts: Vec<ConditionVerdict>,
    pub feasible: bool,
}

impl CalibrationReport {
    pub fn params(&self) -> Option<&PaymentParams> {
        self.outcome.params()
    }
}

/// Inputs shared by both scenarios.
#[derive(Debug, Clone, Copy)]
pub struct CalibrationRequest<'a> {
    pub scenario: Scenario,
    pub workers: &'a [WorkerProfile],
    pub dist: &'a dyn QualityDistribution,
    pub targets: GuaranteeTargets,
    pub budget: f64,
    /// Cost bounds known to the platform (used by the incomplete scenario).
    pub bounds: CostBounds,
    pub thresholds: ThresholdChoice,
}

/// Bounds, thresholds, parameters and condition verdicts in one pass.
pub fn calibrate(req: &CalibrationRequest<'_>) -> Result<CalibrationReport> {
    let s = req.workers.len();
    let dist = req.dist;
    let delta_lower = participation_lower_bound(dist, s, req.targets.theta)?;
    let delta_upper = approx_upper_bound(dist, s, &req.targets)?;
    let window = threshold_window(dist, delta_lower, &delta_upper, req.scenario)?;
    let thresholds = match req.thresholds {
        ThresholdChoice::Fixed(t) => t,
        ThresholdChoice::Draw { seed } => draw_thresholds(&window, req.scenario, &mut ChaCha8Rng::seed_from_u64(seed))?,
    };
    let (outcome, inputs) = match thresholds {
        Thresholds::Complete { delta_t } => (
            generate_complete_params(req.workers, delta_t, dist, req.budget)?,
            ConditionInputs::Complete {
                workers: req.workers,
                delta_t,
            },
        ),
        Thresholds::Incomplete { delta_l, delta_h } => {
            let ids: Vec<WorkerId> = req.workers.iter().map(|w| w.id).collect();
            (
                generate_incomplete_params(&ids, &req.bounds, delta_l, delta_h, dist, req.budget)?,
                ConditionInputs::Incomplete {
                    bounds: req.bounds,
                    delta_l,
                    delta_h,
                },
            )
        }
    };
    let verdicts = match &outcome {
        ParamOutcome::Feasible { params, .. } => check_conditions(params, inputs, dist)?,
        ParamOutcome::Infeasible { candidate, .. } => {
            let unchecked = PaymentParams {
                budget: req.budget,
                workers: candidate.clone(),
            };
            check_conditions(&unchecked, inputs, dist)?
        }
    };
    let feasible = outcome.is_feasible() && all_satisfied(&verdicts);
    Ok(CalibrationReport {
        scenario: req.scenario,
        worker_count: s,
        delta_lower,
        delta_upper,
        window,
        reference_second_moment: dist.truncated_second_moment(thresholds.reference_cap())?,
        thresholds,
        outcome,
        verdicts,
        feasible,
    })
}
