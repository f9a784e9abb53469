use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};

use super::special::{gamma_p, gamma_q, lgamma};
use super::check_positive;
use crate::error::{domain, Result};

/// Gamma law in shape/rate form, `Gam(shape, rate)`, with mean `shape / rate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaParams {
    pub shape: f64,
    pub rate: f64,
}

impl GammaParams {
    pub fn new(shape: f64, rate: f64) -> Result<Self> {
        check_positive(shape, "gamma shape")?;
        check_positive(rate, "gamma rate")?;
        Ok(Self { shape, rate })
    }

    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }

    pub fn variance(&self) -> f64 {
        self.shape / (self.rate * self.rate)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        if x == 0.0 {
            return match self.shape.partial_cmp(&1.0) {
                Some(std::cmp::Ordering::Less) => f64::INFINITY,
                Some(std::cmp::Ordering::Equal) => self.rate,
                _ => 0.0,
            };
        }
        (self.shape * self.rate.ln() + (self.shape - 1.0) * x.ln() - self.rate * x - lgamma(self.shape)).exp()
    }

    /// `P(X <= x)`.
    pub fn cdf(&self, x: f64) -> Result<f64> {
        if x < 0.0 || x.is_nan() {
            return domain(format!("gamma cdf requires x >= 0, got {x}"));
        }
        Ok(gamma_p(self.shape, self.rate * x))
    }

    /// `P(X > x)`, evaluated directly rather than as `1 - cdf`.
    pub fn sf(&self, x: f64) -> Result<f64> {
        if x < 0.0 || x.is_nan() {
            return domain(format!("gamma sf requires x >= 0, got {x}"));
        }
        Ok(gamma_q(self.shape, self.rate * x))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        sample_gamma(self, rng)
    }
}

/// Draws from `Gam(shape, rate)` using the supplied stream.
pub fn sample_gamma<R: Rng + ?Sized>(params: &GammaParams, rng: &mut R) -> f64 {
    // rand_distr takes a scale parameter.
    Gamma::new(params.shape, 1.0 / params.rate)
        .expect("validated gamma parameters")
        .sample(rng)
}

/// Draws from `Po(mean)`; a zero mean yields zero without touching the stream.
pub fn sample_poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    assert!(mean >= 0.0 && mean.is_finite(), "poisson mean must be finite and >= 0, got {mean}");
    if mean == 0.0 {
        return 0;
    }
    let draw: f64 = Poisson::new(mean).expect("validated poisson mean").sample(rng);
    draw as u64
}

/// `P(N <= k)` for `N ~ Po(mean)`, as the upper incomplete gamma ratio `Q(k + 1, mean)`.
pub fn poisson_cdf(k: u64, mean: f64) -> Result<f64> {
    if !(mean >= 0.0) || !mean.is_finite() {
        return domain(format!("poisson mean must be finite and >= 0, got {mean}"));
    }
    if mean == 0.0 {
        return Ok(1.0);
    }
    Ok(gamma_q(k as f64 + 1.0, mean))
}

/// `P(N = k)` for `N ~ Po(mean)`.
pub fn poisson_pmf(k: u64, mean: f64) -> f64 {
    if mean == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    let k = k as f64;
    (k * mean.ln() - mean - lgamma(k + 1.0)).exp()
}
