//! The peer-prediction payment rule and its bookkeeping.
//!
//! Each participant `s` is scored against one other participant `r` drawn
//! uniformly at random:
//!
//! ```text
//! p_s = b_s - a_s * (1/M) * sum_m (x_m^s - x_m^r)^2
//! ```
//!
//! Drop-outs are paid nothing. Payments depend only on submitted data, never
//! on ground truth.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{DataMatrix, WorkerId};
use crate::error::{Error, Result};

/// Payment coefficients for one worker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkerPayment {
    pub worker_id: WorkerId,
    /// Penalty per unit of mean squared disagreement with the reference.
    pub a: f64,
    /// Base payment.
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaymentParams {
    pub budget: f64,
    pub workers: Vec<WorkerPayment>,
}

impl PaymentParams {
    pub fn new(budget: f64, workers: Vec<WorkerPayment>) -> Result<Self> {
        let p = Self { budget, workers };
        p.validate()?;
        Ok(p)
    }

    /// Checks strict positivity of `a`, `b` and the budget.
    pub fn validate(&self) -> Result<()> {
        if !(self.budget > 0.0 && self.budget.is_finite()) {
            return Err(Error::Config(format!("budget must be positive, got {}", self.budget)));
        }
        for w in &self.workers {
            if !(w.a > 0.0 && w.b > 0.0 && w.a.is_finite() && w.b.is_finite()) {
                return Err(Error::Config(format!(
                    "worker {}: payment parameters must be positive (a={}, b={})",
                    w.worker_id, w.a, w.b
                )));
            }
        }
        Ok(())
    }

    pub fn get(&self, id: WorkerId) -> Option<&WorkerPayment> {
        self.workers.iter().find(|w| w.worker_id == id)
    }

    pub fn worker_ids(&self) -> Vec<WorkerId> {
        self.workers.iter().map(|w| w.worker_id).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PaymentEntry {
    pub worker_id: WorkerId,
    pub reference_id: Option<WorkerId>,
    pub payment: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaymentRecord {
    pub entries: Vec<PaymentEntry>,
    pub total: f64,
    pub negative_count: usize,
    /// Exactly one participant: paid `b_s` with no peer term.
    pub no_peer: bool,
    /// Negative payments were clamped to zero (not the analysed mechanism).
    pub clamped: bool,
}

#[derive(Debug, Serialize)]
pub struct PaymentSummary {
    pub total: f64,
    pub negative_count: usize,
    pub no_peer: bool,
    pub clamped: bool,
}

impl PaymentRecord {
    pub fn payment(&self, id: WorkerId) -> Option<f64> {
        self.entries.iter().find(|e| e.worker_id == id).map(|e| e.payment)
    }

    pub fn summary(&self) -> PaymentSummary {
        PaymentSummary {
            total: self.total,
            negative_count: self.negative_count,
            no_peer: self.no_peer,
            clamped: self.clamped,
        }
    }

    /// Writes `worker_id,reference_id,payment`; drop-outs have an empty
    /// reference.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["worker_id", "reference_id", "payment"])?;
        for e in &self.entries {
            w.write_record([
                e.worker_id.to_string(),
                e.reference_id.map(|r| r.to_string()).unwrap_or_default(),
                format!("{}", e.payment),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PaymentOptions {
    /// Clamp negative payments at zero. Off by default: the equilibrium
    /// analysis relies on the raw, linear-in-deviation payment.
    pub clamp_negative: bool,
}

/// Mean squared difference between two equally long reading rows.
pub fn mean_squared_disagreement(own: &[f64], reference: &[f64]) -> f64 {
    let m = own.len() as f64;
    own.iter().zip(reference).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / m
}

/// Pays every worker in `all_workers`. References are drawn from a
/// dedicated RNG seeded with `seed`, in `all_workers` order.
pub fn compute_payments(
    data: &DataMatrix,
    all_workers: &[WorkerId],
    params: &PaymentParams,
    seed: u64,
    options: PaymentOptions,
) -> Result<PaymentRecord> {
    for p in data.participants() {
        if !all_workers.contains(p) {
            return Err(Error::Data(format!("participant {p} is not in the worker set")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = data.participant_count();
    let no_peer = n == 1;
    let mut entries = Vec::with_capacity(all_workers.len());
    for &id in all_workers {
        let coeff = params
            .get(id)
            .ok_or_else(|| Error::Config(format!("no payment parameters for worker {id}")))?;
        let entry = match data.position(id) {
            None => PaymentEntry {
                worker_id: id,
                reference_id: None,
                payment: 0.0,
            },
            Some(_) if no_peer => PaymentEntry {
                worker_id: id,
                reference_id: None,
                payment: coeff.b,
            },
            Some(own) => {
                let mut r = rng.random_range(0..n - 1);
                if r >= own {
                    r += 1;
                }
                let msd = mean_squared_disagreement(data.row(own), data.row(r));
                PaymentEntry {
                    worker_id: id,
                    reference_id: Some(data.participants()[r]),
                    payment: coeff.b - coeff.a * msd,
                }
            }
        };
        entries.push(entry);
    }
    let negative_count = entries.iter().filter(|e| e.payment < 0.0).count();
    if options.clamp_negative {
        entries.iter_mut().for_each(|e| e.payment = e.payment.max(0.0));
    }
    let total = entries.iter().map(|e| e.payment).sum();
    Ok(PaymentRecord {
        entries,
        total,
        negative_count,
        no_peer,
        clamped: options.clamp_negative,
    })
}

/// `E[p_s] = b - a (delta_own^2 + E[delta_r^2])` under Gaussian noise.
pub fn expected_payment(a: f64, b: f64, delta_own: f64, ref_second_moment: f64) -> f64 {
    debug_assert!(delta_own > 0.0);
    b - a * (delta_own * delta_own + ref_second_moment)
}
