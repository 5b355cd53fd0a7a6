//! Effort-eliciting peer payments for crowd sensing.
//!
//! Workers report noisy readings on a set of tasks. The platform aggregates
//! them with truth discovery ([`truth`]) and pays each participant according
//! to how closely they agree with a randomly chosen peer ([`payment`]). The
//! [`calibration`] module picks payment parameters so that full effort is an
//! equilibrium, [`population`] computes and checks those equilibria, and
//! [`experiments`] runs Monte-Carlo comparisons against simple baselines.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod data;
pub mod error;
pub mod experiments;
pub mod interval;
pub mod metrics;
pub mod payment;
pub mod population;
pub mod quality;
pub mod truth;

pub use data::{DataMatrix, TaskId, WorkerId};
pub use error::{Error, Result};
pub use interval::Interval;
pub use quality::{DistributionSpec, QualityDistribution, Uniform};
