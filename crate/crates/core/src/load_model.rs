//! The stochastic load law.
//!
//! Given the load `d0` observed some slots ago, the load after a gap of
//! `delta` slots is Gaussian with mean `d0` and variance `theta * delta`,
//! truncated to `[0, d_max]`. The linear variance growth mirrors a Brownian
//! drift: uncertainty accumulates with the age of the information.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::{Error, Result};

/// Draw cap for the rejection sampler.
const REJECTION_CAP: u64 = 1_000_000;

/// Standard normal CDF via the complementary error function, accurate to
/// well under 1e-12 absolute.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Truncated-Gaussian load law with variance growth rate `theta` (MW²/slot)
/// on the load domain `[0, d_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadLaw {
    theta: f64,
    d_max: f64,
}

impl LoadLaw {
    pub fn new(theta: f64, d_max: f64) -> Result<Self> {
        if theta <= 0.0 || !theta.is_finite() {
            return Err(Error::invalid("theta", format!("{theta} must be > 0")));
        }
        if d_max <= 0.0 || !d_max.is_finite() {
            return Err(Error::invalid("d_max", format!("{d_max} must be > 0")));
        }
        Ok(LoadLaw { theta, d_max })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn d_max(&self) -> f64 {
        self.d_max
    }

    /// `P(D_delta <= d | D_0 = d0)` for the Gaussian with mean `d0` and
    /// variance `theta * delta` truncated to `[0, d_max]`.
    pub fn conditional_cdf(&self, d0: f64, delta: u32, d: f64) -> Result<f64> {
        if !(0.0..=self.d_max).contains(&d0) {
            return Err(Error::invalid(
                "d0",
                format!("{d0} outside [0, {}]", self.d_max),
            ));
        }
        if delta < 1 {
            return Err(Error::invalid("delta", "gap must be >= 1 slot"));
        }
        if !(0.0..=self.d_max).contains(&d) {
            return Err(Error::invalid(
                "d",
                format!("{d} outside [0, {}]", self.d_max),
            ));
        }
        Ok(self.conditional(d0, delta).cdf(d))
    }

    /// The conditional law for a fixed `(d0, delta)`, with the truncation
    /// normalizer precomputed.
    pub(crate) fn conditional(&self, d0: f64, delta: u32) -> Conditional {
        let s = (self.theta * delta as f64).sqrt();
        let lo_tail = std_normal_cdf((0.0 - d0) / s);
        let z = std_normal_cdf((self.d_max - d0) / s) - lo_tail;
        Conditional {
            d0,
            s,
            lo_tail,
            inv_z: 1.0 / z,
        }
    }

    /// One slot of latent dynamics: a draw from `Normal(d0, theta)` restricted
    /// to `[0, d_max]` by rejection. After `delta` untruncated steps the
    /// variance would be `theta * delta`, matching the conditional law.
    pub fn sample_step<R: Rng + ?Sized>(&self, d0: f64, rng: &mut R) -> Result<f64> {
        if !(0.0..=self.d_max).contains(&d0) {
            return Err(Error::invalid(
                "d0",
                format!("{d0} outside [0, {}]", self.d_max),
            ));
        }
        let normal = Normal::new(d0, self.theta.sqrt())
            .map_err(|e| Error::invalid("theta", e.to_string()))?;
        for _ in 0..REJECTION_CAP {
            let draw = normal.sample(rng);
            if (0.0..=self.d_max).contains(&draw) {
                return Ok(draw);
            }
        }
        Err(Error::SamplerStalled(REJECTION_CAP))
    }
}

/// Conditional CDF of the load a fixed gap after observing `d0`.
pub(crate) struct Conditional {
    d0: f64,
    s: f64,
    lo_tail: f64,
    inv_z: f64,
}

impl Conditional {
    pub(crate) fn cdf(&self, d: f64) -> f64 {
        (std_normal_cdf((d - self.d0) / self.s) - self.lo_tail) * self.inv_z
    }

    /// Probability mass of `[lo, hi]`.
    pub(crate) fn mass(&self, lo: f64, hi: f64) -> f64 {
        self.cdf(hi) - self.cdf(lo)
    }
}
