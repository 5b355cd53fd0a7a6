#![allow(dead_code)]

use theseus_core::calibration::{
    approx_upper_bound, draw_thresholds, generate_complete_params, generate_incomplete_params, minimum_budget,
    participation_lower_bound, threshold_window, GuaranteeTargets, ParamOutcome, Scenario, Thresholds,
};
use theseus_core::payment::PaymentParams;
use theseus_core::population::{sample_population, CostBounds, WorkerProfile};
use theseus_core::{Interval, QualityDistribution, Uniform, WorkerId};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn prior() -> Uniform {
    Uniform::new(0.1, 4.0).unwrap()
}

pub fn bounds() -> CostBounds {
    CostBounds::new(0.5, 1.0, 10.0, 12.0).unwrap()
}

pub fn targets() -> GuaranteeTargets {
    GuaranteeTargets::new(0.9, 5.0, 0.1).unwrap()
}

pub fn population(count: usize, seed: u64) -> Vec<WorkerProfile> {
    sample_population(count, &prior(), Interval::new(5.0, 10.0).unwrap(), bounds(), seed).unwrap()
}

/// Thresholds drawn from the window for this population size.
pub fn thresholds(dist: &dyn QualityDistribution, count: usize, scenario: Scenario, seed: u64) -> Thresholds {
    let lower = participation_lower_bound(dist, count, targets().theta).unwrap();
    let upper = approx_upper_bound(dist, count, &targets()).unwrap();
    let window = threshold_window(dist, lower, &upper, scenario).unwrap();
    draw_thresholds(&window, scenario, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

/// Parameters with the budget set to the smallest value the budget cap
/// allows.
pub fn tight_params(
    workers: &[WorkerProfile],
    thresholds: Thresholds,
    dist: &dyn QualityDistribution,
) -> PaymentParams {
    let generate = |budget: f64| match thresholds {
        Thresholds::Complete { delta_t } => generate_complete_params(workers, delta_t, dist, budget).unwrap(),
        Thresholds::Incomplete { delta_l, delta_h } => {
            let ids: Vec<WorkerId> = workers.iter().map(|w| w.id).collect();
            generate_incomplete_params(&ids, &bounds(), delta_l, delta_h, dist, budget).unwrap()
        }
    };
    let loose = match generate(f64::MAX) {
        ParamOutcome::Feasible { params, .. } => params,
        other => panic!("infeasible with unlimited budget: {other:?}"),
    };
    let budget = minimum_budget(&loose.workers, dist.support_lo());
    match generate(budget) {
        ParamOutcome::Feasible { params, .. } => params,
        other => panic!("infeasible at the minimum budget: {other:?}"),
    }
}

pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        for (rank, &i) in idx.iter().enumerate() {
            r[i] = rank as f64;
        }
        r
    }
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = xs.len() as f64;
    let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b).powi(2)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}
