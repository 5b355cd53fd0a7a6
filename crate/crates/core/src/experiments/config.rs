//! Experiment configuration: presets, config files and overrides.
//!
//! Config files are flat TOML. Every key is optional and mirrors a field of
//! [`ConfigOverrides`]:
//!
//! ```toml
//! setting = "III"          # preset to start from: I, II, III or IV
//! scenario = "incomplete"  # complete | incomplete
//! mechanisms = ["theseus", "random_std", "max_std"]
//! sweep = "workers"        # workers | tasks
//! sweep_values = [120, 130, 140, 150]
//! workers = 130            # fixed worker count when sweeping tasks
//! tasks = 30               # fixed task count when sweeping workers
//! quality_lo = 0.1         # delta_lo ~ U[quality_lo, quality_hi]
//! quality_hi = 4.0
//! delta_hi_lo = 5.0        # delta_hi ~ U[delta_hi_lo, delta_hi_hi]
//! delta_hi_hi = 10.0
//! truth_lo = 0.0           # ground truths ~ U[truth_lo, truth_hi]
//! truth_hi = 10.0
//! theta = 0.9
//! alpha_ratio = 5.0
//! beta = 0.1
//! budget = 50000.0
//! c1_lo = 0.5
//! c1_hi = 1.0
//! c2_lo = 10.0
//! c2_hi = 12.0
//! trials = 1000
//! seed = 20240601
//! error_thresholds = [0.1, 0.25, 0.5, 1.0, 2.0]
//! clamp_negative = false
//! threads = 4
//! ```

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::calibration::{GuaranteeTargets, Scenario};
use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::population::CostBounds;
use crate::quality::DistributionSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    Theseus,
    MaxStd,
    RandomStd,
}

impl Mechanism {
    pub const ALL: [Mechanism; 3] = [Mechanism::Theseus, Mechanism::RandomStd, Mechanism::MaxStd];

    pub fn name(self) -> &'static str {
        match self {
            Mechanism::Theseus => "theseus",
            Mechanism::MaxStd => "max_std",
            Mechanism::RandomStd => "random_std",
        }
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mechanism {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "theseus" => Ok(Mechanism::Theseus),
            "max_std" => Ok(Mechanism::MaxStd),
            "random_std" => Ok(Mechanism::RandomStd),
            _ => Err(Error::Config(format!(
                "unknown mechanism '{s}' (theseus, max_std, random_std)"
            ))),
        }
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "complete" => Ok(Scenario::Complete),
            "incomplete" => Ok(Scenario::Incomplete),
            _ => Err(Error::Config(format!("unknown scenario '{s}' (complete, incomplete)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SettingId {
    I,
    II,
    III,
    IV,
}

impl FromStr for SettingId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "I" | "1" => Ok(SettingId::I),
            "II" | "2" => Ok(SettingId::II),
            "III" | "3" => Ok(SettingId::III),
            "IV" | "4" => Ok(SettingId::IV),
            _ => Err(Error::Config(format!("unknown setting '{s}' (I, II, III, IV)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Workers,
    Tasks,
}

impl FromStr for SweepParameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "workers" => Ok(SweepParameter::Workers),
            "tasks" => Ok(SweepParameter::Tasks),
            _ => Err(Error::Config(format!("unknown sweep parameter '{s}' (workers, tasks)"))),
        }
    }
}

pub const DEFAULT_TRIALS: usize = 1000;
pub const DEFAULT_SEED: u64 = 20240601;
pub const DEFAULT_BUDGET: f64 = 50_000.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub setting: Option<SettingId>,
    pub scenario: Scenario,
    pub mechanisms: Vec<Mechanism>,
    pub sweep: SweepParameter,
    pub sweep_values: Vec<usize>,
    pub workers: usize,
    pub tasks: usize,
    pub quality: DistributionSpec,
    pub delta_hi_range: Interval,
    pub truth_range: Interval,
    pub targets: GuaranteeTargets,
    pub budget: f64,
    pub cost_bounds: CostBounds,
    pub trials: usize,
    pub seed: u64,
    pub error_thresholds: Vec<f64>,
    pub clamp_negative: bool,
    /// Worker threads; `None` uses every core. Never affects results.
    #[serde(skip)]
    pub threads: Option<usize>,
}

impl ExperimentConfig {
    pub fn preset(setting: SettingId) -> Self {
        let (scenario, sweep, sweep_values) = match setting {
            SettingId::I => (Scenario::Complete, SweepParameter::Workers, vec![120, 130, 140, 150]),
            SettingId::II => (Scenario::Complete, SweepParameter::Tasks, vec![10, 20, 30, 40]),
            SettingId::III => (Scenario::Incomplete, SweepParameter::Workers, vec![120, 130, 140, 150]),
            SettingId::IV => (Scenario::Incomplete, SweepParameter::Tasks, vec![10, 20, 30, 40]),
        };
        Self {
            setting: Some(setting),
            scenario,
            mechanisms: Mechanism::ALL.to_vec(),
            sweep,
            sweep_values,
            workers: 130,
            tasks: 30,
            quality: DistributionSpec::Uniform { lo: 0.1, hi: 4.0 },
            delta_hi_range: Interval::new(5.0, 10.0).expect("ordered"),
            truth_range: Interval::new(0.0, 10.0).expect("ordered"),
            targets: GuaranteeTargets {
                theta: 0.9,
                alpha_ratio: 5.0,
                beta: 0.1,
            },
            budget: DEFAULT_BUDGET,
            cost_bounds: CostBounds {
                c1_lo: 0.5,
                c1_hi: 1.0,
                c2_lo: 10.0,
                c2_hi: 12.0,
            },
            trials: DEFAULT_TRIALS,
            seed: DEFAULT_SEED,
            error_thresholds: vec![0.1, 0.25, 0.5, 1.0, 2.0],
            clamp_negative: false,
            threads: None,
        }
    }

    /// Starts from the requested preset (setting I if none) and applies the
    /// overrides.
    pub fn resolve(o: &ConfigOverrides) -> Result<Self> {
        let setting = o.setting.as_deref().map(SettingId::from_str).transpose()?;
        let mut c = Self::preset(setting.unwrap_or(SettingId::I));
        c.setting = setting;
        if let Some(s) = &o.scenario {
            c.scenario = s.parse()?;
        }
        if let Some(ms) = &o.mechanisms {
            c.mechanisms = ms.iter().map(|m| m.parse()).collect::<Result<_>>()?;
        }
        if let Some(s) = &o.sweep {
            c.sweep = s.parse()?;
        }
        if let Some(v) = &o.sweep_values {
            c.sweep_values = v.clone();
        }
        c.workers = o.workers.unwrap_or(c.workers);
        c.tasks = o.tasks.unwrap_or(c.tasks);
        let DistributionSpec::Uniform { lo, hi } = c.quality;
        c.quality = DistributionSpec::Uniform {
            lo: o.quality_lo.unwrap_or(lo),
            hi: o.quality_hi.unwrap_or(hi),
        };
        c.delta_hi_range = Interval::new(
            o.delta_hi_lo.unwrap_or(c.delta_hi_range.lo()),
            o.delta_hi_hi.unwrap_or(c.delta_hi_range.hi()),
        )?;
        c.truth_range = Interval::new(
            o.truth_lo.unwrap_or(c.truth_range.lo()),
            o.truth_hi.unwrap_or(c.truth_range.hi()),
        )?;
        c.targets = GuaranteeTargets::new(
            o.theta.unwrap_or(c.targets.theta),
            o.alpha_ratio.unwrap_or(c.targets.alpha_ratio),
            o.beta.unwrap_or(c.targets.beta),
        )?;
        c.budget = o.budget.unwrap_or(c.budget);
        let b = c.cost_bounds;
        c.cost_bounds = CostBounds::new(
            o.c1_lo.unwrap_or(b.c1_lo),
            o.c1_hi.unwrap_or(b.c1_hi),
            o.c2_lo.unwrap_or(b.c2_lo),
            o.c2_hi.unwrap_or(b.c2_hi),
        )?;
        c.trials = o.trials.unwrap_or(c.trials);
        c.seed = o.seed.unwrap_or(c.seed);
        if let Some(e) = &o.error_thresholds {
            c.error_thresholds = e.clone();
        }
        c.clamp_negative = o.clamp_negative.unwrap_or(c.clamp_negative);
        c.threads = o.threads.or(c.threads);
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.trials == 0 {
            return fail("trial count must be at least 1".into());
        }
        if self.sweep_values.is_empty() || self.sweep_values.contains(&0) {
            return fail(format!(
                "sweep values must be non-empty and positive, got {:?}",
                self.sweep_values
            ));
        }
        if self.workers == 0 || self.tasks == 0 {
            return fail("worker and task counts must be positive".into());
        }
        if self.mechanisms.is_empty() {
            return fail("at least one mechanism is required".into());
        }
        let mut ms = self.mechanisms.clone();
        ms.sort();
        ms.dedup();
        if ms.len() != self.mechanisms.len() {
            return fail(format!("duplicate mechanisms in {:?}", self.mechanisms));
        }
        GuaranteeTargets::new(self.targets.theta, self.targets.alpha_ratio, self.targets.beta)?;
        let dist = self.quality.build()?;
        if self.delta_hi_range.lo() <= dist.support_hi() {
            return fail("delta_hi range must lie strictly above the quality support".into());
        }
        if !(self.budget > 0.0 && self.budget.is_finite()) {
            return fail(format!("budget must be positive, got {}", self.budget));
        }
        if self.error_thresholds.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
            return fail("error thresholds must be positive".into());
        }
        if self.threads == Some(0) {
            return fail("thread count must be at least 1".into());
        }
        Ok(())
    }

    /// `(sweep value, workers, tasks)` for each sweep point.
    pub fn sweep_points(&self) -> Vec<(usize, usize, usize)> {
        self.sweep_values
            .iter()
            .map(|&v| match self.sweep {
                SweepParameter::Workers => (v, v, self.tasks),
                SweepParameter::Tasks => (v, self.workers, v),
            })
            .collect()
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::preset(SettingId::I)
    }
}

/// Optional values from a config file or the command line.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    pub setting: Option<String>,
    pub scenario: Option<String>,
    pub mechanisms: Option<Vec<String>>,
    pub sweep: Option<String>,
    pub sweep_values: Option<Vec<usize>>,
    pub workers: Option<usize>,
    pub tasks: Option<usize>,
    pub quality_lo: Option<f64>,
    pub quality_hi: Option<f64>,
    pub delta_hi_lo: Option<f64>,
    pub delta_hi_hi: Option<f64>,
    pub truth_lo: Option<f64>,
    pub truth_hi: Option<f64>,
    pub theta: Option<f64>,
    pub alpha_ratio: Option<f64>,
    pub beta: Option<f64>,
    pub budget: Option<f64>,
    pub c1_lo: Option<f64>,
    pub c1_hi: Option<f64>,
    pub c2_lo: Option<f64>,
    pub c2_hi: Option<f64>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub error_thresholds: Option<Vec<f64>>,
    pub clamp_negative: Option<bool>,
    pub threads: Option<usize>,
}

impl ConfigOverrides {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(format!("invalid config: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Field-wise merge; values in `over` win.
    pub fn merge(self, over: ConfigOverrides) -> ConfigOverrides {
        ConfigOverrides {
            setting: over.setting.or(self.setting),
            scenario: over.scenario.or(self.scenario),
            mechanisms: over.mechanisms.or(self.mechanisms),
            sweep: over.sweep.or(self.sweep),
            sweep_values: over.sweep_values.or(self.sweep_values),
            workers: over.workers.or(self.workers),
            tasks: over.tasks.or(self.tasks),
            quality_lo: over.quality_lo.or(self.quality_lo),
            quality_hi: over.quality_hi.or(self.quality_hi),
            delta_hi_lo: over.delta_hi_lo.or(self.delta_hi_lo),
            delta_hi_hi: over.delta_hi_hi.or(self.delta_hi_hi),
            truth_lo: over.truth_lo.or(self.truth_lo),
            truth_hi: over.truth_hi.or(self.truth_hi),
            theta: over.theta.or(self.theta),
            alpha_ratio: over.alpha_ratio.or(self.alpha_ratio),
            beta: over.beta.or(self.beta),
            budget: over.budget.or(self.budget),
            c1_lo: over.c1_lo.or(self.c1_lo),
            c1_hi: over.c1_hi.or(self.c1_hi),
            c2_lo: over.c2_lo.or(self.c2_lo),
            c2_hi: over.c2_hi.or(self.c2_hi),
            trials: over.trials.or(self.trials),
            seed: over.seed.or(self.seed),
            error_thresholds: over.error_thresholds.or(self.error_thresholds),
            clamp_negative: over.clamp_negative.or(self.clamp_negative),
            threads: over.threads.or(self.threads),
        }
    }
}
