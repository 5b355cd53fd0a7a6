//! Acceptance suite: one PASS/FAIL line per criterion.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use anyhow::{ensure, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use theseus_core::calibration::{approx_upper_bound, participation_lower_bound, Scenario, Thresholds, UpperBound};
use theseus_core::experiments::{run_setting, ExperimentConfig, Mechanism, SettingId};
use theseus_core::metrics::{binomial_standard_error, error_probability_estimate, mae, verify_budget, verify_ir};
use theseus_core::payment::{compute_payments, expected_payment, PaymentOptions, PaymentParams, WorkerPayment};
use theseus_core::population::{
    bne_profile_complete, bne_profile_incomplete, check_profile, expected_utility, generate_data, Strategy,
    StrategyProfile, WorkerProfile,
};
use theseus_core::quality::{truncated_moment_quadrature, MOMENT_RTOL};
use theseus_core::truth::run_crh;
use theseus_core::{QualityDistribution, Uniform, WorkerId};

use common::{population, prior, targets, thresholds, tight_params};

/// Standard errors allowed for every Monte-Carlo comparison.
const Z: f64 = 3.0;
/// Largest tolerated gain from a unilateral deviation.
const DEVIATION_TOL: f64 = 1e-9;
/// Quadrature against closed form.
const QUADRATURE_TOL: f64 = 1e-8;

type Check = fn() -> Result<(bool, String)>;

fn main() {
    let checks: [(&str, &str, u64, Check); 8] = [
        (
            "AC1",
            "MAE ordering theseus < random_std < max_std, settings I-IV",
            4 * 300,
            ac1_mae_ordering,
        ),
        ("AC2", "error probability under the Markov bound", 60, ac2_error_bound),
        (
            "AC3",
            "complete-information equilibrium best responses",
            60,
            ac3_best_responses,
        ),
        (
            "AC4",
            "individual rationality and budget feasibility",
            120,
            ac4_ir_budget,
        ),
        ("AC5", "participation guarantee", 60, ac5_participation),
        ("AC6", "approximation-ratio guarantee", 60, ac6_ratio),
        (
            "AC7",
            "closed forms against simulation and quadrature",
            120,
            ac7_closed_forms,
        ),
        (
            "AC8",
            "simulate output is byte-identical across runs and thread counts",
            120,
            ac8_determinism,
        ),
    ];
    let mut failed = 0;
    for (id, title, limit, check) in checks {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(limit);
        let (pass, detail) = match outcome {
            Ok((pass, detail)) => (pass && in_time, detail),
            Err(e) => (false, format!("error: {e:#}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "{id} {} [{:.1}s, limit {limit}s] {title}: {detail}",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

fn ac1_mae_ordering() -> Result<(bool, String)> {
    let mut ok = true;
    let mut notes = Vec::new();
    for setting in [SettingId::I, SettingId::II, SettingId::III, SettingId::IV] {
        let mut c = ExperimentConfig::preset(setting);
        c.trials = 500;
        let start = Instant::now();
        let s = run_setting(&c)?;
        let secs = start.elapsed().as_secs_f64();
        let mut worst_gap = f64::INFINITY;
        for &v in &c.sweep_values {
            let m = |mech| s.find(v, mech).and_then(|p| p.mean_mae).unwrap_or(f64::NAN);
            let (t, r, x) = (m(Mechanism::Theseus), m(Mechanism::RandomStd), m(Mechanism::MaxStd));
            let point_ok = t < r && r < x;
            ok &= point_ok;
            worst_gap = worst_gap.min((r - t).min(x - r));
            if !point_ok {
                notes.push(format!("{setting:?}@{v}: {t:.4}/{r:.4}/{x:.4}"));
            }
        }
        ok &= secs <= 300.0;
        notes.push(format!("{setting:?} min gap {worst_gap:.4} in {secs:.1}s"));
    }
    Ok((ok, notes.join("; ")))
}

fn ac2_error_bound() -> Result<(bool, String)> {
    let dist = prior();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let workers: Vec<WorkerProfile> = (0..10)
        .map(|i| WorkerProfile::new(WorkerId(i), dist.sample(&mut rng), 6.0, 1.0, 10.0).unwrap())
        .collect();
    let profile = StrategyProfile::new(
        &workers,
        workers.iter().map(|w| Strategy::Participate(w.delta_lo)).collect(),
    )?;
    let sum_delta: f64 = workers.iter().map(|w| w.delta_lo).sum();
    let trials = 10_000;
    let tasks = 30;
    let mut maes = Vec::with_capacity(trials);
    for t in 0..trials as u64 {
        let truths: Vec<f64> = (0..tasks).map(|_| rng.random_range(0.0..10.0)).collect();
        let data = generate_data(&profile, &truths, t)?;
        maes.push(mae(&run_crh(&data)?.truths, &truths)?);
    }
    let scale = sum_delta * (2.0 / std::f64::consts::PI).sqrt();
    let mut ok = true;
    let mut notes = Vec::new();
    for k in [0.5, 1.0, 2.0, 5.0] {
        let alpha = k * scale;
        let p = error_probability_estimate(&maes, alpha)?;
        let bound = theseus_core::metrics::markov_error_bound(&[sum_delta], alpha)?.capped;
        ok &= p <= bound + Z * binomial_standard_error(p, trials);
        notes.push(format!("alpha={alpha:.3}: {p:.4} <= {bound:.3}"));
    }
    Ok((ok, notes.join(", ")))
}

fn ac3_best_responses() -> Result<(bool, String)> {
    let dist = prior();
    let mut max_gain = f64::NEG_INFINITY;
    let mut excluded_best = f64::NEG_INFINITY;
    let mut participants = 0;
    for i in 0..100u64 {
        let count = 5 + (i as usize * 37) % 146;
        let workers = population(count, 1000 + i);
        let th = thresholds(&dist, count, Scenario::Complete, 2000 + i);
        let Thresholds::Complete { delta_t } = th else {
            unreachable!()
        };
        let params = tight_params(&workers, th, &dist);
        let profile = bne_profile_complete(&workers, delta_t);
        let ref_m2 = dist.truncated_second_moment(delta_t)?;
        for c in check_profile(&workers, &profile, &params, ref_m2, 100)? {
            match c.chosen {
                Strategy::Participate(_) => {
                    participants += 1;
                    max_gain = max_gain.max(c.gain());
                }
                Strategy::DropOut => excluded_best = excluded_best.max(c.best_participating_utility),
            }
        }
    }
    let ok = max_gain <= DEVIATION_TOL && excluded_best < 0.0;
    Ok((
        ok,
        format!("{participants} participants, max gain {max_gain:.3e}, best excluded utility {excluded_best:.3e}"),
    ))
}

fn ac4_ir_budget() -> Result<(bool, String)> {
    let dist = prior();
    let mut notes = Vec::new();
    let mut ok = true;
    for scenario in [Scenario::Complete, Scenario::Incomplete] {
        let (mut ir_fail, mut budget_fail) = (0, 0);
        let mut excess = Vec::with_capacity(1000);
        for i in 0..1000u64 {
            let count = 2 + (i as usize * 53) % 149;
            let workers = population(count, 10_000 + i);
            let th = thresholds(&dist, count, scenario, 20_000 + i);
            let params = tight_params(&workers, th, &dist);
            let profile = match th {
                Thresholds::Complete { delta_t } => bne_profile_complete(&workers, delta_t),
                Thresholds::Incomplete { delta_l, delta_h } => {
                    bne_profile_incomplete(&workers, delta_l, delta_h, &params, &dist)?
                }
            };
            let ref_m2 = dist.truncated_second_moment(th.reference_cap())?;
            let mut utilities = Vec::new();
            let mut expected_total = 0.0;
            for (id, d) in profile.participants() {
                let p = params.get(id).unwrap();
                utilities.push(expected_utility(&workers[id.0 as usize], d, p, ref_m2));
                expected_total += expected_payment(p.a, p.b, d, ref_m2);
            }
            ir_fail += usize::from(!verify_ir(&utilities).pass);
            budget_fail += usize::from(!verify_budget(expected_total, params.budget, &[]).pass);
            let realized = if profile.participant_count() == 0 {
                0.0
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(30_000 + i);
                let truths: Vec<f64> = (0..10).map(|_| rng.random_range(0.0..10.0)).collect();
                let data = generate_data(&profile, &truths, 40_000 + i)?;
                let ids: Vec<_> = workers.iter().map(|w| w.id).collect();
                compute_payments(&data, &ids, &params, 50_000 + i, PaymentOptions::default())?.total
            };
            excess.push(realized - params.budget);
        }
        let n = excess.len() as f64;
        let mean = excess.iter().sum::<f64>() / n;
        let se = (excess.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() / n.sqrt();
        let realized_ok = mean <= Z * se;
        ok &= ir_fail == 0 && budget_fail == 0 && realized_ok;
        notes.push(format!(
            "{scenario:?}: IR failures {ir_fail}, budget failures {budget_fail}, realized minus budget {mean:.2} (se {se:.2})"
        ));
    }
    Ok((ok, notes.join("; ")))
}

fn ac5_participation() -> Result<(bool, String)> {
    let dist = prior();
    let theta = 0.9;
    let populations = 10_000;
    let se = binomial_standard_error(theta, populations);
    let mut ok = true;
    let mut notes = Vec::new();
    for count in [5usize, 50, 130] {
        let lower = participation_lower_bound(&dist, count, theta)?;
        let (mut complete_hits, mut incomplete_hits) = (0, 0);
        for i in 0..populations as u64 {
            let workers = population(count, (count as u64) << 32 | i);
            complete_hits += usize::from(bne_profile_complete(&workers, lower).participant_count() > 0);
            let delta_h = lower + 0.5 * (4.0 - lower);
            let th = Thresholds::Incomplete {
                delta_l: lower,
                delta_h,
            };
            let params = tight_params(&workers, th, &dist);
            let p = bne_profile_incomplete(&workers, lower, delta_h, &params, &dist)?;
            incomplete_hits += usize::from(p.participant_count() > 0);
        }
        let (fc, fi) = (
            complete_hits as f64 / populations as f64,
            incomplete_hits as f64 / populations as f64,
        );
        ok &= fc >= theta - Z * se && fi >= theta - Z * se;
        notes.push(format!("S={count} threshold {lower:.5}: {fc:.4} / {fi:.4}"));
    }
    Ok((ok, notes.join(", ")))
}

fn ac6_ratio() -> Result<(bool, String)> {
    let dist = prior();
    let UpperBound::Root { value: root } = approx_upper_bound(&dist, 3, &targets())? else {
        return Ok((false, "no root for S=3".into()));
    };
    let populations = 10_000;
    let mut exceed = 0;
    let mut nonempty = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..populations {
        let draws: Vec<f64> = (0..3).map(|_| dist.sample(&mut rng)).collect();
        let opt = draws.iter().copied().fold(f64::INFINITY, f64::min);
        let app: f64 = draws.iter().filter(|&&d| d <= root).sum();
        nonempty += usize::from(app > 0.0);
        exceed += usize::from(app / opt >= targets().alpha_ratio);
    }
    let p = exceed as f64 / populations as f64;
    let beta = targets().beta;
    let ratio_ok = p <= beta + Z * binomial_standard_error(beta, populations);
    let large = approx_upper_bound(&dist, 130, &targets())?;
    let large_ok = matches!(large, UpperBound::NoSolution { g_lo, .. } if g_lo > 0.0);
    Ok((
        ratio_ok && large_ok && (root - 0.10421).abs() < 1e-5,
        format!(
            "S=3 root {root:.6}, Pr(ratio >= 5) = {p:.4} ({nonempty} populations with participants); S=130: {large:?}"
        ),
    ))
}

fn ac7_closed_forms() -> Result<(bool, String)> {
    let draws = 100_000;
    let tasks = 5;
    let (a, b) = (2.0, 10.0);
    let deltas = [0.7, 1.3, 0.4];
    let workers: Vec<WorkerProfile> = deltas
        .iter()
        .enumerate()
        .map(|(i, &d)| WorkerProfile::new(WorkerId(i as u32), d, 6.0, 1.0, 10.0).unwrap())
        .collect();
    let params = PaymentParams::new(
        1e9,
        workers
            .iter()
            .map(|w| WorkerPayment { worker_id: w.id, a, b })
            .collect(),
    )?;
    let mut notes = Vec::new();
    let mut ok = true;
    // Pairs have a fixed reference; the triple averages over two.
    for n in [2usize, 3] {
        let ws = &workers[..n];
        let ids: Vec<_> = ws.iter().map(|w| w.id).collect();
        let profile = StrategyProfile::new(ws, ws.iter().map(|w| Strategy::Participate(w.delta_lo)).collect())?;
        let truths = vec![5.0; tasks];
        let mut pays = Vec::with_capacity(draws);
        for i in 0..draws as u64 {
            let data = generate_data(&profile, &truths, i)?;
            pays.push(
                compute_payments(&data, &ids, &params, i ^ 0xfeed, PaymentOptions::default())?.entries[0].payment,
            );
        }
        let mean = pays.iter().sum::<f64>() / draws as f64;
        let sd = (pays.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (draws as f64 - 1.0)).sqrt();
        let ref_m2 = deltas[1..n].iter().map(|d| d * d).sum::<f64>() / (n - 1) as f64;
        let expected = expected_payment(a, b, deltas[0], ref_m2);
        let z = (mean - expected).abs() / (sd / (draws as f64).sqrt());
        ok &= z <= Z;
        notes.push(format!("{n} workers: {mean:.4} vs {expected:.4} (z {z:.2})"));
    }
    let mut worst = 0.0f64;
    for (lo, hi) in [(0.1, 4.0), (0.5, 2.0), (1.0, 10.0)] {
        let u = Uniform::new(lo, hi)?;
        for k in 1..=20 {
            let cap = lo + (hi - lo) * k as f64 / 20.0;
            worst = worst.max((truncated_moment_quadrature(&u, cap, 2)? - u.truncated_second_moment(cap)?).abs());
            worst = worst.max((truncated_moment_quadrature(&u, cap, 1)? - u.truncated_first_moment(cap)?).abs());
        }
    }
    ok &= worst <= QUADRATURE_TOL;
    notes.push(format!("quadrature max error {worst:.2e} at rtol {MOMENT_RTOL:e}"));
    Ok((ok, notes.join(", ")))
}

fn simulate(out: &Path, threads: usize) -> Result<(Vec<u8>, Vec<u8>)> {
    let status = Command::new(env!("CARGO_BIN_EXE_theseus"))
        .args(["simulate", "--setting", "III", "--trials", "40", "--seed", "99"])
        .arg("--threads")
        .arg(threads.to_string())
        .arg("--out-dir")
        .arg(out)
        .stderr(std::process::Stdio::null())
        .status()?;
    ensure!(status.success(), "simulate exited with {status}");
    Ok((
        std::fs::read(out.join("summary.csv"))?,
        std::fs::read(out.join("manifest.json"))?,
    ))
}

fn ac8_determinism() -> Result<(bool, String)> {
    let dir = tempfile::tempdir()?;
    let runs = [(1, "a"), (1, "b"), (4, "c"), (4, "d")]
        .into_iter()
        .map(|(t, name)| simulate(&dir.path().join(name), t))
        .collect::<Result<Vec<_>>>()?;
    let identical = runs.windows(2).all(|w| w[0] == w[1]);
    Ok((
        identical,
        format!(
            "4 runs at 1 and 4 threads, {} CSV bytes, {} JSON bytes",
            runs[0].0.len(),
            runs[0].1.len()
        ),
    ))
}
