//! Prior over workers' best-achievable noise levels.
//!
//! Every worker's lower bound on noise std is an i.i.d. draw from a bounded
//! density `f` on `[support_lo, support_hi]`. Calibration needs the quantile
//! function and the truncated moments
//!
//! ```text
//! R(cap) = E[d | d <= cap]      A(cap) = E[d^2 | d <= cap]
//! ```
//!
//! The [`QualityDistribution`] trait computes both moments by adaptive
//! Simpson quadrature; families with closed forms (currently [`Uniform`])
//! override them.

use std::fmt::Debug;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance of the generic truncated-moment quadrature.
pub const MOMENT_RTOL: f64 = 1e-10;

pub trait QualityDistribution: Debug + Send + Sync {
    /// Short family name, e.g. `"uniform"`.
    fn kind(&self) -> &'static str;

    fn support_lo(&self) -> f64;

    fn support_hi(&self) -> f64;

    /// Density; zero outside the support, boundaries included.
    fn pdf(&self, x: f64) -> f64;

    fn cdf(&self, x: f64) -> f64;

    /// Inverse CDF. The default inverts [`cdf`](Self::cdf) by bisection.
    fn quantile(&self, p: f64) -> Result<f64> {
        check_probability(p)?;
        let (mut lo, mut hi) = (self.support_lo(), self.support_hi());
        if p == 0.0 {
            return Ok(lo);
        }
        if p == 1.0 {
            return Ok(hi);
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi.abs().max(1.0) {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// `A(cap)`: second moment conditioned on `d <= cap`.
    fn truncated_second_moment(&self, cap: f64) -> Result<f64> {
        truncated_moment_quadrature(self, cap, 2)
    }

    /// `R(cap)`: first moment conditioned on `d <= cap`.
    fn truncated_first_moment(&self, cap: f64) -> Result<f64> {
        truncated_moment_quadrature(self, cap, 1)
    }

    /// Inverse-transform draw.
    fn sample(&self, rng: &mut dyn rand::RngCore) -> f64 {
        let u: f64 = rng.random();
        self.quantile(u).expect("uniform draw lies in [0, 1)")
    }
}

fn check_probability(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Domain(format!("probability {p} outside [0, 1]")))
    }
}

fn check_cap<D: QualityDistribution + ?Sized>(dist: &D, cap: f64) -> Result<f64> {
    let (lo, hi) = (dist.support_lo(), dist.support_hi());
    if !cap.is_finite() || cap <= lo {
        return Err(Error::Domain(format!(
            "truncation cap {cap} must exceed support_lo {lo}; the conditioning event has zero mass"
        )));
    }
    Ok(cap.min(hi))
}

/// `E[d^k | d <= cap]` by adaptive Simpson quadrature of `u^k f(u)` over
/// `[support_lo, cap]`, normalised by the quadrature of `f` on the same
/// interval. Works for any family; used directly to cross-check closed forms.
pub fn truncated_moment_quadrature<D: QualityDistribution + ?Sized>(dist: &D, cap: f64, order: i32) -> Result<f64> {
    let cap = check_cap(dist, cap)?;
    let lo = dist.support_lo();
    let mass = adaptive_simpson(|u| dist.pdf(u), lo, cap, MOMENT_RTOL);
    if mass <= 0.0 {
        return Err(Error::Domain(format!("no probability mass on [{lo}, {cap}]")));
    }
    let moment = adaptive_simpson(|u| u.powi(order) * dist.pdf(u), lo, cap, MOMENT_RTOL);
    Ok(moment / mass)
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` to relative tolerance
/// `rtol` (measured against the coarse whole-interval estimate).
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rtol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let tol = (rtol * whole.abs()).max(f64::MIN_POSITIVE);
    simpson_step(&f, a, b, fa, fm, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Uniform prior on `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Uniform {
    lo: f64,
    hi: f64,
}

impl Uniform {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo <= 0.0 || hi <= lo {
            return Err(Error::Distribution(format!(
                "uniform quality prior needs 0 < lo < hi, got [{lo}, {hi}]"
            )));
        }
        Ok(Self { lo, hi })
    }

    fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

impl QualityDistribution for Uniform {
    fn kind(&self) -> &'static str {
        "uniform"
    }

    fn support_lo(&self) -> f64 {
        self.lo
    }

    fn support_hi(&self) -> f64 {
        self.hi
    }

    fn pdf(&self, x: f64) -> f64 {
        if (self.lo..=self.hi).contains(&x) {
            1.0 / self.width()
        } else {
            0.0
        }
    }

    fn cdf(&self, x: f64) -> f64 {
        ((x - self.lo) / self.width()).clamp(0.0, 1.0)
    }

    fn quantile(&self, p: f64) -> Result<f64> {
        check_probability(p)?;
        Ok((self.lo + p * self.width()).min(self.hi))
    }

    // (cap^2 + cap*lo + lo^2) / 3
    fn truncated_second_moment(&self, cap: f64) -> Result<f64> {
        let cap = check_cap(self, cap)?;
        Ok((cap * cap + cap * self.lo + self.lo * self.lo) / 3.0)
    }

    fn truncated_first_moment(&self, cap: f64) -> Result<f64> {
        let cap = check_cap(self, cap)?;
        Ok(0.5 * (cap + self.lo))
    }
}

/// Serializable description of a quality prior, as used in configs and
/// reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistributionSpec {
    Uniform { lo: f64, hi: f64 },
}

impl DistributionSpec {
    pub fn build(&self) -> Result<Box<dyn QualityDistribution>> {
        match *self {
            DistributionSpec::Uniform { lo, hi } => Ok(Box::new(Uniform::new(lo, hi)?)),
        }
    }
}

/// Draws `count` i.i.d. lower bounds.
pub fn sample_lower_bounds<R: Rng>(dist: &dyn QualityDistribution, count: usize, rng: &mut R) -> Vec<f64> {
    (0..count).map(|_| dist.sample(rng)).collect()
}
