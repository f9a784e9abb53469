//! Predictive laws for future recruitment and the quantile adjustment that
//! restores coverage when `(α, β)` are estimated.

use serde::{Deserialize, Serialize};

use crate::distributions::{normal_cdf, normal_quantile, NegBinParams, Pearson6Params};
use crate::error::{domain, Error, Result};
use crate::model::{posterior_rate_moments, ModelFit, TrialData, EQUAL_EXPOSURE_RTOL};

/// `λ•` approximated by a single gamma, written as pseudo-data `(n*, t*)`.
///
/// The law is `Gam(C α̂ + n*, β̂ + t*)`, matching the posterior mean and
/// variance of the sum of centre rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PooledPosterior {
    pub n_star: f64,
    pub t_star: f64,
    pub shape: f64,
    pub rate: f64,
    pub alpha_hat: f64,
    pub beta_hat: f64,
    pub num_centres: usize,
}

/// Moment-matches the posterior of `λ•` to one gamma law.
pub fn pool_centres(data: &TrialData, fit: &ModelFit) -> Result<PooledPosterior> {
    let (m, v) = posterior_rate_moments(data, fit)?;
    let (a, b) = (fit.alpha_hat, fit.beta_hat);
    let c = data.num_centres() as f64;

    let first = data.centres()[0].exposure;
    let equal = first > 0.0
        && data.centres().iter().all(|r| (r.exposure - first).abs() <= EQUAL_EXPOSURE_RTOL * first);
    let (n_star, t_star) = if equal {
        (data.total_count() as f64, first)
    } else {
        ((m * m / v - c * a).max(0.0), (m / v - b).max(0.0))
    };
    Ok(PooledPosterior {
        n_star,
        t_star,
        shape: c * a + n_star,
        rate: b + t_star,
        alpha_hat: a,
        beta_hat: b,
        num_centres: data.num_centres(),
    })
}

/// Recruits over a further time `t_plus`: `NB(Cα̂ + n*, t+ / (β̂ + t* + t+))`.
pub fn predictive_count_law(pool: &PooledPosterior, t_plus: f64) -> Result<NegBinParams> {
    if !(t_plus > 0.0) || !t_plus.is_finite() {
        return domain(format!("horizon must be finite and > 0, got {t_plus}"));
    }
    NegBinParams::new(pool.shape, t_plus / (pool.rate + t_plus))
}

/// Time to `n_plus` further recruits: Pearson VI with shapes `(n+, Cα̂ + n*)`
/// and scale `β̂ + t*`.
pub fn predictive_time_law(pool: &PooledPosterior, n_plus: u64) -> Result<Pearson6Params> {
    if n_plus == 0 {
        return domain("recruitment target must be at least 1");
    }
    Pearson6Params::new(n_plus as f64, pool.shape, pool.rate)
}

fn check_level(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        domain(format!("probability must lie in (0, 1), got {p}"))
    }
}

fn check_pos(x: f64, what: &str) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        domain(format!("{what} must be finite and > 0, got {x}"))
    }
}

/// Quantile level to invert in place of `p` for the count objective.
///
/// `p* = Φ(√[(β̂ + t)(t + t+) / (t (β̂ + t + t+))] Φ⁻¹(p))`, with `t` the
/// (pooled) exposure. `beta_hat = 0` gives `p* = p`.
pub fn adjust_probability_count(p: f64, beta_hat: f64, t_eff: f64, t_plus: f64) -> Result<f64> {
    check_level(p)?;
    if !(beta_hat >= 0.0) || !beta_hat.is_finite() {
        return domain(format!("beta_hat must be finite and >= 0, got {beta_hat}"));
    }
    check_pos(t_eff, "exposure")?;
    check_pos(t_plus, "horizon")?;
    if beta_hat == 0.0 {
        return Ok(p);
    }
    // (β+t)(t+t+) / (t(β+t+t+)) = 1 + β t+ / (t (β + t + t+))
    let factor = (1.0 + beta_hat * t_plus / (t_eff * (beta_hat + t_eff + t_plus))).sqrt();
    Ok(normal_cdf(factor * normal_quantile(p)?))
}

/// Quantile level to invert in place of `p` for the time objective, with
/// `a = n+ / C`.
///
/// `p* = Φ(√[(1 + a β̂/(α̂ t)) / (1 + (a/α̂)/(1 + t/β̂))] Φ⁻¹(p))`.
pub fn adjust_probability_time(p: f64, alpha_hat: f64, beta_hat: f64, t_eff: f64, a: f64) -> Result<f64> {
    check_level(p)?;
    check_pos(alpha_hat, "alpha_hat")?;
    check_pos(beta_hat, "beta_hat")?;
    check_pos(t_eff, "exposure")?;
    check_pos(a, "target per centre")?;
    let c2 = a * beta_hat / (alpha_hat * t_eff);
    let s2 = 1.0 + (a / alpha_hat) / (1.0 + t_eff / beta_hat);
    Ok(normal_cdf(((1.0 + c2) / s2).sqrt() * normal_quantile(p)?))
}

/// What to predict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "objective", rename_all = "lowercase")]
pub enum Objective {
    /// Recruits over a further time `t_plus`.
    Count { t_plus: f64 },
    /// Time until `n_plus` further recruits.
    Time { n_plus: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionRequest {
    pub objective: Objective,
    pub level: f64,
    pub adjusted: bool,
}

impl PredictionRequest {
    pub fn validate(&self) -> Result<()> {
        check_level(self.level)?;
        match self.objective {
            Objective::Count { t_plus } => check_pos(t_plus, "horizon"),
            Objective::Time { n_plus } if n_plus == 0 => domain("recruitment target must be at least 1"),
            Objective::Time { .. } => Ok(()),
        }
    }
}

/// An equal-tailed prediction interval and the quantile levels that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionInterval {
    pub lower: f64,
    pub upper: f64,
    pub nominal_level: f64,
    pub probs_used: (f64, f64),
}

impl PredictionInterval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Quantile levels `(p_lo, p_hi)` for a request, adjusted if asked.
pub fn interval_probs(pool: &PooledPosterior, request: &PredictionRequest) -> Result<(f64, f64)> {
    request.validate()?;
    let lo = 0.5 * (1.0 - request.level);
    let hi = 0.5 * (1.0 + request.level);
    if !request.adjusted {
        return Ok((lo, hi));
    }
    if !(pool.t_star > 0.0) {
        return Err(Error::Unsupported("adjustment needs a positive pooled exposure".into()));
    }
    let adjust = |p: f64| match request.objective {
        Objective::Count { t_plus } => adjust_probability_count(p, pool.beta_hat, pool.t_star, t_plus),
        Objective::Time { n_plus } => {
            let a = n_plus as f64 / pool.num_centres as f64;
            adjust_probability_time(p, pool.alpha_hat, pool.beta_hat, pool.t_star, a)
        }
    };
    Ok((adjust(lo)?, adjust(hi)?))
}

/// Inverts the predictive law at the given levels.
pub fn interval_from_pool(pool: &PooledPosterior, request: &PredictionRequest) -> Result<PredictionInterval> {
    let probs = interval_probs(pool, request)?;
    let (lower, upper) = match request.objective {
        Objective::Count { t_plus } => {
            let law = predictive_count_law(pool, t_plus)?;
            (law.quantile(probs.0)? as f64, law.quantile(probs.1)? as f64)
        }
        Objective::Time { n_plus } => {
            let law = predictive_time_law(pool, n_plus)?;
            (law.quantile(probs.0)?, law.quantile(probs.1)?)
        }
    };
    Ok(PredictionInterval { lower, upper, nominal_level: request.level, probs_used: probs })
}

/// Plug-in (optionally adjusted) prediction interval from a fitted model.
pub fn prediction_interval(data: &TrialData, fit: &ModelFit, request: &PredictionRequest) -> Result<PredictionInterval> {
    let pool = pool_centres(data, fit)?;
    interval_from_pool(&pool, request)
}
