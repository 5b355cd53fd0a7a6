//! Monte-Carlo comparison of the payment mechanism against baselines.
//!
//! A trial samples a worker population, fixes everyone's strategy (the
//! equilibrium under calibrated payments, or a baseline rule), draws ground
//! truths, generates readings, aggregates them with CRH and scores the
//! result. Trials are independent and seeded per [`seeds::stream_seed`], so a
//! batch gives the same numbers at any thread count.

pub mod config;
pub mod output;
pub mod seeds;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{calibrate, CalibrationRequest, ThresholdChoice, Thresholds};
use crate::error::{Error, Result};
use crate::metrics::{
    binomial_standard_error, error_probability_estimate, mae, markov_error_bound, mean_and_std, verify_budget,
    verify_ir, RealizedTotals, TrialReport,
};
use crate::payment::{compute_payments, expected_payment, PaymentOptions};
use crate::population::{
    bne_profile_complete, bne_profile_incomplete, expected_utility, generate_data, sample_population, Strategy,
    StrategyProfile, WorkerProfile,
};
use crate::truth::run_crh;

pub use config::{ConfigOverrides, ExperimentConfig, Mechanism, SettingId, SweepParameter};
use seeds::{stream_seed, Stream};

/// Strategies under a baseline: every worker participates, at `delta_hi`
/// (max std) or at a uniform draw from `[delta_lo, delta_hi]` (random std).
pub fn baseline_profile(mechanism: Mechanism, workers: &[WorkerProfile], seed: u64) -> Result<StrategyProfile> {
    let strategies = match mechanism {
        Mechanism::Theseus => return Err(Error::Config("theseus is not a baseline".into())),
        Mechanism::MaxStd => workers.iter().map(|w| Strategy::Participate(w.delta_hi)).collect(),
        Mechanism::RandomStd => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            workers
                .iter()
                .map(|w| Strategy::Participate(w.strategy_range().lerp(rng.random())))
                .collect()
        }
    };
    StrategyProfile::new(workers, strategies)
}

/// Ground truths drawn uniformly from the configured range.
pub fn draw_truths(config: &ExperimentConfig, tasks: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..tasks).map(|_| config.truth_range.lerp(rng.random())).collect()
}

/// Runs one trial at sweep point `point` (an index into
/// [`ExperimentConfig::sweep_points`]).
pub fn run_trial(config: &ExperimentConfig, point: usize, mechanism: Mechanism, trial: usize) -> Result<TrialReport> {
    let &(_, worker_count, tasks) = config
        .sweep_points()
        .get(point)
        .ok_or_else(|| Error::Config(format!("sweep point {point} out of range")))?;
    let seed = |s| stream_seed(config.seed, point, trial, s);
    let dist = config.quality.build()?;
    let workers = sample_population(
        worker_count,
        dist.as_ref(),
        config.delta_hi_range,
        config.cost_bounds,
        seed(Stream::Population),
    )?;
    let opt = workers.iter().map(|w| w.delta_lo).fold(f64::INFINITY, f64::min);
    let truths = draw_truths(config, tasks, seed(Stream::Truths));

    let mut report = TrialReport {
        mae: None,
        total_payment: None,
        realized_utilities: Vec::new(),
        participant_count: 0,
        app: 0.0,
        opt,
        ir: None,
        budget: None,
        ratio_guarantee_unavailable: false,
        infeasible: false,
    };

    let (profile, calibration) = match mechanism {
        Mechanism::Theseus => {
            let cal = calibrate(&CalibrationRequest {
                scenario: config.scenario,
                workers: &workers,
                dist: dist.as_ref(),
                targets: config.targets,
                budget: config.budget,
                bounds: config.cost_bounds,
                thresholds: ThresholdChoice::Draw {
                    seed: seed(Stream::Thresholds),
                },
            })?;
            report.ratio_guarantee_unavailable = !cal.window.ratio_guarantee;
            let Some(params) = cal.params().filter(|_| cal.feasible) else {
                report.infeasible = true;
                return Ok(report);
            };
            let profile = match cal.thresholds {
                Thresholds::Complete { delta_t } => bne_profile_complete(&workers, delta_t),
                Thresholds::Incomplete { delta_l, delta_h } => {
                    bne_profile_incomplete(&workers, delta_l, delta_h, params, dist.as_ref())?
                }
            };
            (profile, Some(cal))
        }
        _ => (baseline_profile(mechanism, &workers, seed(Stream::Baselines))?, None),
    };

    let participants: Vec<_> = profile.participants().collect();
    report.participant_count = participants.len();
    report.app = participants.iter().map(|(_, d)| d).sum();

    if let Some(cal) = &calibration {
        let params = cal.params().expect("feasible");
        let ref_m2 = cal.reference_second_moment;
        let mut utilities = Vec::with_capacity(participants.len());
        let mut expected_total = 0.0;
        for &(id, d) in &participants {
            let w = &workers[id.0 as usize];
            let p = params.get(id).expect("params for every worker");
            utilities.push(expected_utility(w, d, p, ref_m2));
            expected_total += expected_payment(p.a, p.b, d, ref_m2);
        }
        report.ir = Some(verify_ir(&utilities));
        report.budget = Some(verify_budget(expected_total, config.budget, &[]));
    }

    if participants.is_empty() {
        if calibration.is_some() {
            report.total_payment = Some(0.0);
        }
        return Ok(report);
    }

    let data = generate_data(&profile, &truths, seed(Stream::Noise))?;
    let agg = run_crh(&data)?;
    report.mae = Some(mae(&agg.truths, &truths)?);

    if let Some(cal) = &calibration {
        let params = cal.params().expect("feasible");
        let ids: Vec<_> = workers.iter().map(|w| w.id).collect();
        let record = compute_payments(
            &data,
            &ids,
            params,
            seed(Stream::References),
            PaymentOptions {
                clamp_negative: config.clamp_negative,
            },
        )?;
        report.total_payment = Some(record.total);
        report.realized_utilities = participants
            .iter()
            .map(|&(id, d)| (id, record.payment(id).unwrap_or(0.0) - workers[id.0 as usize].cost(d)))
            .collect();
    }
    Ok(report)
}

/// Empirical error probability at one threshold, with the averaged error
/// bound for comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorPoint {
    pub alpha: f64,
    pub probability: f64,
    pub std_error: f64,
    /// Mean over trials of the capped per-trial bound.
    pub bound_mean: f64,
    /// `probability <= bound_mean + 3 std_error`.
    pub bound_holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub sweep_value: usize,
    pub workers: usize,
    pub tasks: usize,
    pub mechanism: Mechanism,
    pub trials: usize,
    /// Trials without participants; their MAE is left out.
    pub excluded_no_participants: usize,
    /// Trials whose calibration was infeasible.
    pub infeasible: usize,
    /// Trials drawn from the fallback window.
    pub ratio_guarantee_unavailable: usize,
    pub mean_mae: Option<f64>,
    pub std_mae: Option<f64>,
    pub participant_mean: f64,
    pub total_payment_mean: Option<f64>,
    pub total_payment: Option<RealizedTotals>,
    pub ir_pass_rate: Option<f64>,
    pub budget_pass_rate: Option<f64>,
    pub error_curve: Vec<ErrorPoint>,
}

fn pass_rate(verdicts: impl Iterator<Item = bool>) -> Option<f64> {
    let (n, k) = verdicts.fold((0usize, 0usize), |(n, k), v| (n + 1, k + v as usize));
    (n > 0).then(|| k as f64 / n as f64)
}

/// Aggregates trial reports; `reports` must be in trial order.
pub fn summarize(
    config: &ExperimentConfig,
    point: (usize, usize, usize),
    mechanism: Mechanism,
    reports: &[TrialReport],
) -> Result<PointSummary> {
    let maes: Vec<f64> = reports.iter().filter_map(|r| r.mae).collect();
    let ran: Vec<&TrialReport> = reports.iter().filter(|r| !r.infeasible).collect();
    let (mean_mae, std_mae) = match mean_and_std(&maes) {
        Some((m, s)) => (Some(m), s),
        None => (None, None),
    };
    let totals: Vec<f64> = ran.iter().filter_map(|r| r.total_payment).collect();
    let mut error_curve = Vec::with_capacity(config.error_thresholds.len());
    if !maes.is_empty() {
        for &alpha in &config.error_thresholds {
            let probability = error_probability_estimate(&maes, alpha)?;
            let std_error = binomial_standard_error(probability, maes.len());
            let bounds = ran
                .iter()
                .filter(|r| r.mae.is_some())
                .map(|r| markov_error_bound(&[r.app], alpha).map(|b| b.capped))
                .collect::<Result<Vec<_>>>()?;
            let bound_mean = bounds.iter().sum::<f64>() / bounds.len() as f64;
            error_curve.push(ErrorPoint {
                alpha,
                probability,
                std_error,
                bound_mean,
                bound_holds: probability <= bound_mean + 3.0 * std_error,
            });
        }
    }
    Ok(PointSummary {
        sweep_value: point.0,
        workers: point.1,
        tasks: point.2,
        mechanism,
        trials: reports.len(),
        excluded_no_participants: ran.iter().filter(|r| r.mae.is_none()).count(),
        infeasible: reports.len() - ran.len(),
        ratio_guarantee_unavailable: reports.iter().filter(|r| r.ratio_guarantee_unavailable).count(),
        mean_mae,
        std_mae,
        participant_mean: if ran.is_empty() {
            0.0
        } else {
            ran.iter().map(|r| r.participant_count as f64).sum::<f64>() / ran.len() as f64
        },
        total_payment_mean: mean_and_std(&totals).map(|(m, _)| m),
        total_payment: RealizedTotals::from_samples(&totals),
        ir_pass_rate: pass_rate(ran.iter().filter_map(|r| r.ir.map(|v| v.pass))),
        budget_pass_rate: pass_rate(ran.iter().filter_map(|r| r.budget.map(|v| v.pass))),
        error_curve,
    })
}

/// Runs every trial for one sweep point and mechanism, in trial order.
pub fn run_point(config: &ExperimentConfig, point: usize, mechanism: Mechanism) -> Result<Vec<TrialReport>> {
    (0..config.trials)
        .into_par_iter()
        .map(|t| run_trial(config, point, mechanism, t))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingSummary {
    pub points: Vec<PointSummary>,
}

impl SettingSummary {
    pub fn find(&self, sweep_value: usize, mechanism: Mechanism) -> Option<&PointSummary> {
        self.points
            .iter()
            .find(|p| p.sweep_value == sweep_value && p.mechanism == mechanism)
    }
}

/// Runs all sweep points and mechanisms. Uses `config.threads` workers when
/// set, otherwise the global pool.
pub fn run_setting(config: &ExperimentConfig) -> Result<SettingSummary> {
    config.validate()?;
    let go = || -> Result<SettingSummary> {
        let mut points = Vec::new();
        for (i, &point) in config.sweep_points().iter().enumerate() {
            for &m in &config.mechanisms {
                let reports = run_point(config, i, m)?;
                points.push(summarize(config, point, m, &reports)?);
            }
        }
        Ok(SettingSummary { points })
    };
    match config.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(go),
        None => go(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interval::Interval;
    use crate::population::CostBounds;
    use crate::quality::Uniform;

    fn small(setting: SettingId, trials: usize) -> ExperimentConfig {
        let mut c = ExperimentConfig::preset(setting);
        c.trials = trials;
        c.sweep_values = vec![c.sweep_values[0]];
        c
    }

    fn workers() -> Vec<WorkerProfile> {
        let d = Uniform::new(0.1, 4.0).unwrap();
        sample_population(
            20,
            &d,
            Interval::new(5.0, 10.0).unwrap(),
            CostBounds::new(0.5, 1.0, 10.0, 12.0).unwrap(),
            3,
        )
        .unwrap()
    }

    #[test]
    fn max_std_uses_delta_hi() {
        let ws = workers();
        let p = baseline_profile(Mechanism::MaxStd, &ws, 0).unwrap();
        for (w, (_, s)) in ws.iter().zip(&p.entries) {
            assert_eq!(*s, Strategy::Participate(w.delta_hi));
        }
    }

    #[test]
    fn random_std_stays_in_range() {
        let ws = workers();
        let p = baseline_profile(Mechanism::RandomStd, &ws, 11).unwrap();
        assert_eq!(p.participant_count(), ws.len());
        for (w, (_, s)) in ws.iter().zip(&p.entries) {
            assert!(w.strategy_range().contains(s.delta().unwrap()));
        }
        assert_eq!(p, baseline_profile(Mechanism::RandomStd, &ws, 11).unwrap());
    }

    #[test]
    fn random_std_degenerate_range() {
        let w = WorkerProfile {
            delta_hi: 2.0,
            ..WorkerProfile::new(crate::WorkerId(0), 2.0, 6.0, 1.0, 10.0).unwrap()
        };
        let p = baseline_profile(Mechanism::RandomStd, &[w], 5).unwrap();
        assert_eq!(p.entries[0].1, Strategy::Participate(2.0));
    }

    #[test]
    fn baseline_rejects_theseus() {
        assert!(baseline_profile(Mechanism::Theseus, &workers(), 0).is_err());
    }

    #[test]
    fn trial_is_deterministic() {
        let c = small(SettingId::I, 1);
        for m in Mechanism::ALL {
            assert_eq!(run_trial(&c, 0, m, 7).unwrap(), run_trial(&c, 0, m, 7).unwrap());
        }
    }

    #[test]
    fn theseus_participants_play_full_effort_under_threshold() {
        let c = small(SettingId::I, 1);
        let d = c.quality.build().unwrap();
        for trial in 0..20 {
            let seed = stream_seed(c.seed, 0, trial, Stream::Population);
            let ws = sample_population(120, d.as_ref(), c.delta_hi_range, c.cost_bounds, seed).unwrap();
            let cal = calibrate(&CalibrationRequest {
                scenario: c.scenario,
                workers: &ws,
                dist: d.as_ref(),
                targets: c.targets,
                budget: c.budget,
                bounds: c.cost_bounds,
                thresholds: ThresholdChoice::Draw {
                    seed: stream_seed(c.seed, 0, trial, Stream::Thresholds),
                },
            })
            .unwrap();
            let t = cal.thresholds.participation_cap();
            let r = run_trial(&c, 0, Mechanism::Theseus, trial).unwrap();
            let expected: Vec<_> = ws.iter().filter(|w| w.delta_lo <= t).collect();
            assert_eq!(r.participant_count, expected.len());
            let app: f64 = expected.iter().map(|w| w.delta_lo).sum();
            assert!((r.app - app).abs() < 1e-9);
            assert!(r.ir.unwrap().pass && r.budget.unwrap().pass);
        }
    }

    #[test]
    fn single_trial_std_absent() {
        let c = small(SettingId::II, 1);
        let s = run_setting(&c).unwrap();
        for p in &s.points {
            assert_eq!(p.trials, 1);
            if p.mean_mae.is_some() {
                assert_eq!(p.std_mae, None);
            }
        }
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let mut c = small(SettingId::III, 12);
        c.threads = Some(1);
        let one = run_setting(&c).unwrap();
        c.threads = Some(3);
        assert_eq!(one, run_setting(&c).unwrap());
    }
}
