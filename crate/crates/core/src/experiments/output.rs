//! CSV and JSON output for a finished batch.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::ExperimentConfig;
use super::{Mechanism, PointSummary, SettingSummary};
use crate::error::Result;

#[derive(Debug, Serialize)]
struct SummaryRow {
    sweep_value: usize,
    mechanism: Mechanism,
    mean_mae: Option<f64>,
    std_mae: Option<f64>,
    participant_mean: f64,
    total_payment_mean: Option<f64>,
    ir_pass_rate: Option<f64>,
    budget_pass_rate: Option<f64>,
}

impl From<&PointSummary> for SummaryRow {
    fn from(p: &PointSummary) -> Self {
        Self {
            sweep_value: p.sweep_value,
            mechanism: p.mechanism,
            mean_mae: p.mean_mae,
            std_mae: p.std_mae,
            participant_mean: p.participant_mean,
            total_payment_mean: p.total_payment_mean,
            ir_pass_rate: p.ir_pass_rate,
            budget_pass_rate: p.budget_pass_rate,
        }
    }
}

/// One row per sweep point and mechanism; absent values are empty cells.
pub fn write_summary_csv<W: Write>(summary: &SettingSummary, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for p in &summary.points {
        w.serialize(SummaryRow::from(p))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct RunManifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub seed: u64,
    pub config: &'a ExperimentConfig,
    pub flags: ManifestFlags,
    pub points: &'a [PointSummary],
}

#[derive(Debug, Serialize)]
pub struct ManifestFlags {
    pub clamp_negative: bool,
    /// Trials without participants, summed over the run.
    pub excluded_no_participants: usize,
    pub infeasible: usize,
    pub ratio_guarantee_unavailable: usize,
}

pub fn manifest<'a>(config: &'a ExperimentConfig, summary: &'a SettingSummary) -> RunManifest<'a> {
    let sum = |f: fn(&PointSummary) -> usize| summary.points.iter().map(f).sum();
    RunManifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        seed: config.seed,
        config,
        flags: ManifestFlags {
            clamp_negative: config.clamp_negative,
            excluded_no_participants: sum(|p| p.excluded_no_participants),
            infeasible: sum(|p| p.infeasible),
            ratio_guarantee_unavailable: sum(|p| p.ratio_guarantee_unavailable),
        },
        points: &summary.points,
    }
}

pub const SUMMARY_FILE: &str = "summary.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Writes `summary.csv` and `manifest.json` into `dir`, creating it if
/// needed.
pub fn write_outputs(dir: &Path, config: &ExperimentConfig, summary: &SettingSummary) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let csv_path = dir.join(SUMMARY_FILE);
    write_summary_csv(summary, File::create(&csv_path)?)?;
    let json_path = dir.join(MANIFEST_FILE);
    let mut f = File::create(&json_path)?;
    serde_json::to_writer_pretty(&mut f, &manifest(config, summary))?;
    writeln!(f)?;
    Ok((csv_path, json_path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::ErrorPoint;

    fn point(mechanism: Mechanism, mae: Option<f64>) -> PointSummary {
        PointSummary {
            sweep_value: 120,
            workers: 120,
            tasks: 30,
            mechanism,
            trials: 1,
            excluded_no_participants: usize::from(mae.is_none()),
            infeasible: 0,
            ratio_guarantee_unavailable: 1,
            mean_mae: mae,
            std_mae: None,
            participant_mean: 3.0,
            total_payment_mean: None,
            total_payment: None,
            ir_pass_rate: None,
            budget_pass_rate: None,
            error_curve: vec![ErrorPoint {
                alpha: 1.0,
                probability: 0.0,
                std_error: 0.0,
                bound_mean: 1.0,
                bound_holds: true,
            }],
        }
    }

    #[test]
    fn csv_layout() {
        let s = SettingSummary {
            points: vec![point(Mechanism::Theseus, Some(0.25)), point(Mechanism::MaxStd, None)],
        };
        let mut buf = Vec::new();
        write_summary_csv(&s, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(
            lines[0],
            "sweep_value,mechanism,mean_mae,std_mae,participant_mean,total_payment_mean,ir_pass_rate,budget_pass_rate"
        );
        assert_eq!(lines[1], "120,theseus,0.25,,3.0,,,");
        assert_eq!(lines[2], "120,max_std,,,3.0,,,");
    }

    #[test]
    fn manifest_counts_and_omits_threads() {
        let c = ExperimentConfig {
            threads: Some(8),
            ..Default::default()
        };
        let s = SettingSummary {
            points: vec![point(Mechanism::Theseus, None), point(Mechanism::MaxStd, Some(1.0))],
        };
        let json = serde_json::to_value(manifest(&c, &s)).unwrap();
        assert_eq!(json["flags"]["excluded_no_participants"], 1);
        assert_eq!(json["flags"]["ratio_guarantee_unavailable"], 2);
        assert_eq!(json["seed"], c.seed);
        assert!(json["config"].get("threads").is_none());
    }
}
