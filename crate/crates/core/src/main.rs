use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use theseus_core::calibration::{calibrate, CalibrationReport, CalibrationRequest, ThresholdChoice, Thresholds};
use theseus_core::experiments::output::write_outputs;
use theseus_core::experiments::seeds::{stream_seed, Stream};
use theseus_core::experiments::{run_setting, ConfigOverrides, ExperimentConfig};
use theseus_core::payment::{compute_payments, PaymentOptions, PaymentParams};
use theseus_core::population::{
    bne_profile_complete, bne_profile_incomplete, check_profile, sample_population, WorkerProfile,
};
use theseus_core::truth::{run_truth_discovery, Convergence, Crh, Initialization};
use theseus_core::DataMatrix;

#[derive(Parser)]
#[command(name = "theseus", version)]
#[command(about = "Peer payments, truth discovery and Monte-Carlo experiments for crowd sensing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Calibrate payment parameters for one sampled population and print the report
    Calibrate {
        #[command(flatten)]
        run: RunArgs,

        /// Trial index selecting the population and threshold draws
        #[arg(long, default_value = "0")]
        trial: usize,

        /// Also write calibration.json here
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },

    /// Run a setting and write summary.csv and manifest.json
    Simulate {
        #[command(flatten)]
        run: RunArgs,

        /// Output directory
        #[arg(long, default_value = "results")]
        out_dir: PathBuf,
    },

    /// Run CRH truth discovery on a worker_id,task_id,value CSV
    Aggregate {
        /// Input CSV
        #[arg(long)]
        input: PathBuf,

        /// Stop when no estimate moves more than this
        #[arg(long, default_value = "1e-6")]
        tolerance: f64,

        /// Iteration cap
        #[arg(long, default_value = "100")]
        max_iterations: usize,

        /// Start from random estimates with this seed instead of task means
        #[arg(long)]
        seed: Option<u64>,

        /// Also write truths.csv and weights.csv here
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },

    /// Compute peer payments for a data CSV and a JSON parameter file
    Pay {
        /// Input CSV (worker_id,task_id,value)
        #[arg(long)]
        input: PathBuf,

        /// Payment parameters: {"budget": B, "workers": [{"worker_id", "a", "b"}]}
        #[arg(long)]
        params: PathBuf,

        /// Seed for reference draws
        #[arg(long, default_value = "0")]
        seed: u64,

        /// Clamp negative payments to zero
        #[arg(long)]
        clamp_negative: bool,

        /// Also write payments.csv here
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },

    /// Check a calibrated equilibrium against unilateral deviations
    VerifyBne {
        #[command(flatten)]
        run: RunArgs,

        /// Trial index selecting the population and threshold draws
        #[arg(long, default_value = "0")]
        trial: usize,

        /// Deviation grid size over each worker's noise range
        #[arg(long, default_value = "100")]
        grid: usize,

        /// Largest tolerated utility gain
        #[arg(long, default_value = "1e-9")]
        tolerance: f64,
    },
}

/// Experiment options; flags override the config file.
#[derive(Args)]
struct RunArgs {
    /// Flat TOML config file
    #[arg(long)]
    config: Option<PathBuf>,

    /// Preset: I, II, III or IV
    #[arg(long)]
    setting: Option<String>,

    /// complete or incomplete
    #[arg(long)]
    scenario: Option<String>,

    /// Comma-separated: theseus, max_std, random_std
    #[arg(long, value_delimiter = ',')]
    mechanisms: Option<Vec<String>>,

    /// Base seed
    #[arg(long)]
    seed: Option<u64>,

    /// Trials per sweep point and mechanism
    #[arg(long)]
    trials: Option<usize>,

    /// Worker threads (results do not depend on it)
    #[arg(long)]
    threads: Option<usize>,

    /// Worker count (fixed value, or the population size for calibrate and verify-bne)
    #[arg(long)]
    workers: Option<usize>,

    /// Task count
    #[arg(long)]
    tasks: Option<usize>,

    /// Platform budget
    #[arg(long)]
    budget: Option<f64>,

    /// Clamp negative payments to zero
    #[arg(long)]
    clamp_negative: bool,
}

impl RunArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let file = match &self.config {
            Some(p) => ConfigOverrides::from_file(p)?,
            None => ConfigOverrides::default(),
        };
        let flags = ConfigOverrides {
            setting: self.setting.clone(),
            scenario: self.scenario.clone(),
            mechanisms: self.mechanisms.clone(),
            seed: self.seed,
            trials: self.trials,
            threads: self.threads,
            workers: self.workers,
            tasks: self.tasks,
            budget: self.budget,
            clamp_negative: self.clamp_negative.then_some(true),
            ..Default::default()
        };
        Ok(ExperimentConfig::resolve(&file.merge(flags))?)
    }

    /// Population size for single-population commands.
    fn population_size(&self, config: &ExperimentConfig) -> usize {
        self.workers.unwrap_or_else(|| config.sweep_points()[0].1)
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Calibrate { run, trial, out_dir } => cmd_calibrate(&run, trial, out_dir.as_deref()),
        Command::Simulate { run, out_dir } => cmd_simulate(&run, &out_dir),
        Command::Aggregate {
            input,
            tolerance,
            max_iterations,
            seed,
            out_dir,
        } => cmd_aggregate(
            &input,
            Convergence {
                tolerance,
                max_iterations,
            },
            seed,
            out_dir.as_deref(),
        ),
        Command::Pay {
            input,
            params,
            seed,
            clamp_negative,
            out_dir,
        } => cmd_pay(&input, &params, seed, clamp_negative, out_dir.as_deref()),
        Command::VerifyBne {
            run,
            trial,
            grid,
            tolerance,
        } => cmd_verify_bne(&run, trial, grid, tolerance),
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn sampled_calibration(
    run: &RunArgs,
    trial: usize,
) -> Result<(ExperimentConfig, Vec<WorkerProfile>, CalibrationReport)> {
    let config = run.resolve()?;
    let dist = config.quality.build()?;
    let workers = sample_population(
        run.population_size(&config),
        dist.as_ref(),
        config.delta_hi_range,
        config.cost_bounds,
        stream_seed(config.seed, 0, trial, Stream::Population),
    )?;
    let report = calibrate(&CalibrationRequest {
        scenario: config.scenario,
        workers: &workers,
        dist: dist.as_ref(),
        targets: config.targets,
        budget: config.budget,
        bounds: config.cost_bounds,
        thresholds: ThresholdChoice::Draw {
            seed: stream_seed(config.seed, 0, trial, Stream::Thresholds),
        },
    })?;
    Ok((config, workers, report))
}

fn cmd_calibrate(run: &RunArgs, trial: usize, out_dir: Option<&Path>) -> Result<()> {
    let (_, _, report) = sampled_calibration(run, trial)?;
    print_json(&report)?;
    let w = report.window;
    eprintln!(
        "threshold window [{}, {}], ratio guarantee {}, feasible {}",
        w.window.lo(),
        w.window.hi(),
        if w.ratio_guarantee { "available" } else { "unavailable" },
        report.feasible
    );
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        let path = dir.join("calibration.json");
        serde_json::to_writer_pretty(File::create(&path)?, &report)?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_simulate(run: &RunArgs, out_dir: &Path) -> Result<()> {
    let config = run.resolve()?;
    let summary = run_setting(&config)?;
    let (csv, json) = write_outputs(out_dir, &config, &summary)?;
    for p in &summary.points {
        eprintln!(
            "{:>4} {:<10} mean_mae={} participants={:.1}",
            p.sweep_value,
            p.mechanism,
            p.mean_mae.map_or("-".to_string(), |m| format!("{m:.4}")),
            p.participant_mean
        );
    }
    eprintln!("wrote {} and {}", csv.display(), json.display());
    Ok(())
}

fn read_data(path: &Path) -> Result<DataMatrix> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    DataMatrix::read_csv(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
}

fn cmd_aggregate(input: &Path, convergence: Convergence, seed: Option<u64>, out_dir: Option<&Path>) -> Result<()> {
    let data = read_data(input)?;
    let init = seed.map_or(Initialization::Mean, |seed| Initialization::Random { seed });
    let result = run_truth_discovery(&data, &Crh::default(), convergence, init)?;
    let truths: Vec<_> = data.tasks().iter().zip(&result.truths).collect();
    let weights: Vec<_> = data.participants().iter().zip(&result.weights).collect();
    print_json(&json!({
        "iterations": result.iterations,
        "converged": result.converged,
        "equal_weight_fallback": result.trace.iter().any(|t| t.equal_weight_fallback),
        "truths": truths.iter().map(|(t, x)| json!({"task_id": t, "estimate": x})).collect::<Vec<_>>(),
        "weights": weights.iter().map(|(w, x)| json!({"worker_id": w, "weight": x})).collect::<Vec<_>>(),
    }))?;
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join("truths.csv"))?;
        w.write_record(["task_id", "estimate"])?;
        for (t, x) in &truths {
            w.write_record([t.to_string(), x.to_string()])?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(dir.join("weights.csv"))?;
        w.write_record(["worker_id", "weight"])?;
        for (id, x) in &weights {
            w.write_record([id.to_string(), x.to_string()])?;
        }
        w.flush()?;
    }
    if !result.converged {
        eprintln!(
            "warning: stopped after {} iterations without converging",
            result.iterations
        );
    }
    Ok(())
}

fn cmd_pay(input: &Path, params: &Path, seed: u64, clamp_negative: bool, out_dir: Option<&Path>) -> Result<()> {
    let data = read_data(input)?;
    let f = File::open(params).with_context(|| format!("opening {}", params.display()))?;
    let params: PaymentParams = serde_json::from_reader(BufReader::new(f)).context("parsing payment parameters")?;
    params.validate()?;
    let record = compute_payments(
        &data,
        &params.worker_ids(),
        &params,
        seed,
        PaymentOptions { clamp_negative },
    )?;
    print_json(&record.summary())?;
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        record.write_csv(File::create(dir.join("payments.csv"))?)?;
    }
    Ok(())
}

fn cmd_verify_bne(run: &RunArgs, trial: usize, grid: usize, tolerance: f64) -> Result<()> {
    let (config, workers, report) = sampled_calibration(run, trial)?;
    let Some(params) = report.params().filter(|_| report.feasible) else {
        bail!("calibration is infeasible; nothing to verify");
    };
    let dist = config.quality.build()?;
    let profile = match report.thresholds {
        Thresholds::Complete { delta_t } => bne_profile_complete(&workers, delta_t),
        Thresholds::Incomplete { delta_l, delta_h } => {
            bne_profile_incomplete(&workers, delta_l, delta_h, params, dist.as_ref())?
        }
    };
    let checks = check_profile(&workers, &profile, params, report.reference_second_moment, grid)?;
    let max_gain = checks.iter().map(|c| c.gain()).fold(f64::NEG_INFINITY, f64::max);
    let violations: Vec<_> = checks.iter().filter(|c| c.gain() > tolerance).collect();
    print_json(&json!({
        "thresholds": report.thresholds,
        "participants": profile.participant_count(),
        "workers": workers.len(),
        "max_gain": max_gain,
        "tolerance": tolerance,
        "violations": violations,
        "pass": violations.is_empty(),
    }))?;
    if !violations.is_empty() {
        bail!("{} workers gain more than {tolerance} by deviating", violations.len());
    }
    Ok(())
}
