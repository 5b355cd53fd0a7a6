//! Strategic workers: quality bounds, linear sensing costs, Gaussian data,
//! and the equilibrium strategy profiles induced by the payment rule.
//!
//! Strategies live directly in noise-std space: a participating worker picks
//! `delta` in `[delta_lo, delta_hi]`; smaller is more effort. Sensing at
//! `delta` costs `cost_intercept - cost_slope * delta`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{DataMatrix, TaskId, WorkerId};
use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::payment::{PaymentParams, WorkerPayment};
use crate::quality::QualityDistribution;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkerProfile {
    pub id: WorkerId,
    /// Best achievable noise std.
    pub delta_lo: f64,
    /// Worst noise std.
    pub delta_hi: f64,
    pub cost_slope: f64,
    pub cost_intercept: f64,
}

impl WorkerProfile {
    pub fn new(id: WorkerId, delta_lo: f64, delta_hi: f64, cost_slope: f64, cost_intercept: f64) -> Result<Self> {
        let w = Self {
            id,
            delta_lo,
            delta_hi,
            cost_slope,
            cost_intercept,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta_lo > 0.0 && self.delta_lo < self.delta_hi && self.delta_hi.is_finite()) {
            return Err(Error::Config(format!(
                "worker {}: need 0 < delta_lo < delta_hi, got [{}, {}]",
                self.id, self.delta_lo, self.delta_hi
            )));
        }
        if !(self.cost_slope > 0.0 && self.cost_intercept > 0.0) {
            return Err(Error::Config(format!(
                "worker {}: cost coefficients must be positive",
                self.id
            )));
        }
        if self.cost(self.delta_hi) < -1e-12 {
            return Err(Error::Config(format!(
                "worker {}: sensing cost is negative at delta_hi (c2 < c1 * delta_hi)",
                self.id
            )));
        }
        Ok(())
    }

    pub fn cost(&self, delta: f64) -> f64 {
        self.cost_intercept - self.cost_slope * delta
    }

    pub fn strategy_range(&self) -> Interval {
        Interval::new(self.delta_lo, self.delta_hi).expect("validated")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Participate(f64),
    DropOut,
}

impl Strategy {
    pub fn delta(&self) -> Option<f64> {
        match *self {
            Strategy::Participate(d) => Some(d),
            Strategy::DropOut => None,
        }
    }

    pub fn participates(&self) -> bool {
        matches!(self, Strategy::Participate(_))
    }
}

/// One strategy per worker, in worker order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyProfile {
    pub entries: Vec<(WorkerId, Strategy)>,
}

impl StrategyProfile {
    /// Builds a profile, checking each participating strategy against its
    /// worker's range.
    pub fn new(workers: &[WorkerProfile], strategies: Vec<Strategy>) -> Result<Self> {
        if workers.len() != strategies.len() {
            return Err(Error::Config("one strategy per worker required".into()));
        }
        for (w, s) in workers.iter().zip(&strategies) {
            if let Strategy::Participate(d) = s {
                if !w.strategy_range().contains(*d) {
                    return Err(Error::Config(format!(
                        "worker {}: strategy {d} outside [{}, {}]",
                        w.id, w.delta_lo, w.delta_hi
                    )));
                }
            }
        }
        Ok(Self {
            entries: workers.iter().map(|w| w.id).zip(strategies).collect(),
        })
    }

    pub fn participants(&self) -> impl Iterator<Item = (WorkerId, f64)> + '_ {
        self.entries.iter().filter_map(|(id, s)| s.delta().map(|d| (*id, d)))
    }

    pub fn participant_count(&self) -> usize {
        self.participants().count()
    }

    pub fn strategy(&self, id: WorkerId) -> Option<Strategy> {
        self.entries.iter().find(|(w, _)| *w == id).map(|(_, s)| *s)
    }
}

/// Bounds on the cost coefficients known to the platform when it does not
/// observe individual costs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBounds {
    pub c1_lo: f64,
    pub c1_hi: f64,
    pub c2_lo: f64,
    pub c2_hi: f64,
}

impl CostBounds {
    pub fn new(c1_lo: f64, c1_hi: f64, c2_lo: f64, c2_hi: f64) -> Result<Self> {
        if !(0.0 < c1_lo && c1_lo <= c1_hi && 0.0 < c2_lo && c2_lo <= c2_hi) {
            return Err(Error::Config(format!(
                "cost bounds need 0 < c1_lo <= c1_hi and 0 < c2_lo <= c2_hi, got [{c1_lo}, {c1_hi}], [{c2_lo}, {c2_hi}]"
            )));
        }
        Ok(Self {
            c1_lo,
            c1_hi,
            c2_lo,
            c2_hi,
        })
    }

    /// Whether a worker's actual coefficients fall within the bounds.
    pub fn covers(&self, w: &WorkerProfile) -> bool {
        (self.c1_lo..=self.c1_hi).contains(&w.cost_slope) && (self.c2_lo..=self.c2_hi).contains(&w.cost_intercept)
    }
}

/// Samples `count` workers with ids `0..count`.
///
/// `delta_lo` comes from `dist`, `delta_hi` uniformly from `delta_hi_range`,
/// cost coefficients uniformly from `bounds`; the intercept is then raised to
/// `slope * delta_hi` where needed so that sensing cost stays non-negative.
pub fn sample_population(
    count: usize,
    dist: &dyn QualityDistribution,
    delta_hi_range: Interval,
    bounds: CostBounds,
    seed: u64,
) -> Result<Vec<WorkerProfile>> {
    if count == 0 {
        return Err(Error::Config("population needs at least one worker".into()));
    }
    if delta_hi_range.lo() <= dist.support_hi() {
        return Err(Error::Config(format!(
            "delta_hi range [{}, {}] overlaps the quality support [{}, {}]",
            delta_hi_range.lo(),
            delta_hi_range.hi(),
            dist.support_lo(),
            dist.support_hi()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let delta_lo = dist.sample(&mut rng);
            let delta_hi = delta_hi_range.lerp(rng.random());
            let cost_slope = bounds.c1_lo + rng.random::<f64>() * (bounds.c1_hi - bounds.c1_lo);
            let cost_intercept = bounds.c2_lo + rng.random::<f64>() * (bounds.c2_hi - bounds.c2_lo);
            let cost_intercept = cost_intercept.max(cost_slope * delta_hi);
            WorkerProfile::new(WorkerId(i as u32), delta_lo, delta_hi, cost_slope, cost_intercept)
        })
        .collect()
}

/// Gaussian readings `x_m^s = truth_m + N(0, delta_s^2)` for every
/// participating worker; tasks are numbered `0..truths.len()`.
pub fn generate_data(profile: &StrategyProfile, truths: &[f64], seed: u64) -> Result<DataMatrix> {
    let participants: Vec<(WorkerId, f64)> = profile.participants().collect();
    if participants.is_empty() {
        return Err(Error::Generation("every worker dropped out".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let standard = Normal::new(0.0, 1.0).expect("unit normal");
    let mut values = Vec::with_capacity(participants.len() * truths.len());
    for &(_, delta) in &participants {
        for &t in truths {
            values.push(t + delta * standard.sample(&mut rng));
        }
    }
    DataMatrix::new(
        participants.iter().map(|(id, _)| *id).collect(),
        (0..truths.len() as u32).map(TaskId).collect(),
        values,
    )
}

/// Closed-form expected utility of participating at `delta`:
/// `b - a (delta^2 + E[delta_r^2]) + c1 delta - c2`.
pub fn expected_utility(worker: &WorkerProfile, delta: f64, payment: &WorkerPayment, ref_second_moment: f64) -> f64 {
    payment.b - payment.a * (delta * delta + ref_second_moment) - worker.cost(delta)
}

/// Utility of a strategy; dropping out is worth zero.
pub fn strategy_utility(
    worker: &WorkerProfile,
    strategy: Strategy,
    payment: &WorkerPayment,
    ref_second_moment: f64,
) -> f64 {
    match strategy {
        Strategy::Participate(d) => expected_utility(worker, d, payment, ref_second_moment),
        Strategy::DropOut => 0.0,
    }
}

/// In-range maximiser of the expected utility: `max(c1 / 2a, delta_lo)`,
/// capped at `delta_hi`.
pub fn best_in_range_delta(worker: &WorkerProfile, payment: &WorkerPayment) -> f64 {
    (worker.cost_slope / (2.0 * payment.a)).clamp(worker.delta_lo, worker.delta_hi)
}

/// Equilibrium when the platform knows every cost: participate at full
/// effort iff `delta_lo <= delta_t`.
pub fn bne_profile_complete(workers: &[WorkerProfile], delta_t: f64) -> StrategyProfile {
    StrategyProfile {
        entries: workers
            .iter()
            .map(|w| {
                let s = if w.delta_lo <= delta_t {
                    Strategy::Participate(w.delta_lo)
                } else {
                    Strategy::DropOut
                };
                (w.id, s)
            })
            .collect(),
    }
}

/// Equilibrium under cost bounds only. Workers at or below `delta_l` take
/// `delta_lo`, workers above `delta_h` drop out, and workers in between
/// participate iff their expected utility at `delta_lo`, with the reference
/// moment `A(delta_h)`, is non-negative.
pub fn bne_profile_incomplete(
    workers: &[WorkerProfile],
    delta_l: f64,
    delta_h: f64,
    payments: &PaymentParams,
    dist: &dyn QualityDistribution,
) -> Result<StrategyProfile> {
    if !(delta_l < delta_h) {
        return Err(Error::Domain(format!(
            "need delta_l < delta_h, got {delta_l} >= {delta_h}"
        )));
    }
    let ref_m2 = dist.truncated_second_moment(delta_h)?;
    let entries = workers
        .iter()
        .map(|w| {
            let s = if w.delta_lo <= delta_l {
                Strategy::Participate(w.delta_lo)
            } else if w.delta_lo > delta_h {
                Strategy::DropOut
            } else {
                let p = payments
                    .get(w.id)
                    .ok_or_else(|| Error::Config(format!("no payment parameters for worker {}", w.id)))?;
                if expected_utility(w, w.delta_lo, p, ref_m2) >= 0.0 {
                    Strategy::Participate(w.delta_lo)
                } else {
                    Strategy::DropOut
                }
            };
            Ok((w.id, s))
        })
        .collect::<Result<_>>()?;
    Ok(StrategyProfile { entries })
}

/// Outcome of checking one worker's strategy against unilateral deviations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviationCheck {
    pub worker_id: WorkerId,
    pub chosen: Strategy,
    pub chosen_utility: f64,
    pub best_alternative: Strategy,
    pub best_alternative_utility: f64,
    /// Best utility among participating strategies on the grid (for drop-outs,
    /// how close they come to wanting in).
    pub best_participating_utility: f64,
}

impl DeviationCheck {
    pub fn gain(&self) -> f64 {
        self.best_alternative_utility - self.chosen_utility
    }
}

/// Evaluates `grid_points` evenly spaced deviations over the worker's range
/// plus dropping out, all by closed form.
pub fn check_deviations(
    worker: &WorkerProfile,
    chosen: Strategy,
    payment: &WorkerPayment,
    ref_second_moment: f64,
    grid_points: usize,
) -> DeviationCheck {
    let chosen_utility = strategy_utility(worker, chosen, payment, ref_second_moment);
    let n = grid_points.max(2);
    let mut best_participating = (Strategy::Participate(worker.delta_lo), f64::NEG_INFINITY);
    for i in 0..n {
        let d = worker.delta_lo + (worker.delta_hi - worker.delta_lo) * i as f64 / (n - 1) as f64;
        let u = expected_utility(worker, d, payment, ref_second_moment);
        if u > best_participating.1 {
            best_participating = (Strategy::Participate(d), u);
        }
    }
    let mut candidates = vec![best_participating, (Strategy::DropOut, 0.0)];
    candidates.retain(|(s, _)| *s != chosen);
    let (best_alternative, best_alternative_utility) =
        candidates
            .into_iter()
            .fold((Strategy::DropOut, f64::NEG_INFINITY), |acc, c| {
                if c.1 > acc.1 {
                    c
                } else {
                    acc
                }
            });
    DeviationCheck {
        worker_id: worker.id,
        chosen,
        chosen_utility,
        best_alternative,
        best_alternative_utility,
        best_participating_utility: best_participating.1,
    }
}

/// Runs [`check_deviations`] for every worker in the profile.
pub fn check_profile(
    workers: &[WorkerProfile],
    profile: &StrategyProfile,
    payments: &PaymentParams,
    ref_second_moment: f64,
    grid_points: usize,
) -> Result<Vec<DeviationCheck>> {
    workers
        .iter()
        .map(|w| {
            let s = profile
                .strategy(w.id)
                .ok_or_else(|| Error::Config(format!("worker {} missing from profile", w.id)))?;
            let p = payments
                .get(w.id)
                .ok_or_else(|| Error::Config(format!("no payment parameters for worker {}", w.id)))?;
            Ok(check_deviations(w, s, p, ref_second_moment, grid_points))
        })
        .collect()
}
