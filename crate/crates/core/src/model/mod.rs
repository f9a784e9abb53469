//! Trial data, the marginal Poisson-Gamma likelihood and its maximisation.

mod mle;

pub use mle::{fit_mle, FitOptions, ModelFit};

use serde::Serialize;

use crate::distributions::special::{digamma, lgamma, trigamma};
use crate::error::{domain, Error, Result};

/// Relative tolerance under which positive exposures count as equal.
pub const EQUAL_EXPOSURE_RTOL: f64 = 1e-12;

/// One centre's sufficient statistics at the census.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CentreRecord {
    pub centre_id: String,
    /// Time the centre has been open before the census.
    pub exposure: f64,
    /// Recruits observed up to the census.
    pub count: u64,
}

impl CentreRecord {
    pub fn new(centre_id: impl Into<String>, exposure: f64, count: u64) -> Result<Self> {
        let centre_id = centre_id.into();
        if !(exposure >= 0.0) || !exposure.is_finite() {
            return Err(Error::InvalidData(format!(
                "centre {centre_id}: exposure must be finite and >= 0, got {exposure}"
            )));
        }
        if exposure == 0.0 && count > 0 {
            return Err(Error::InvalidData(format!(
                "centre {centre_id}: {count} recruits with zero exposure"
            )));
        }
        Ok(Self { centre_id, exposure, count })
    }
}

/// Per-centre exposures and counts observed at a common census time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialData {
    census_time: f64,
    centres: Vec<CentreRecord>,
    total_count: u64,
}

impl TrialData {
    pub fn new(census_time: f64, centres: Vec<CentreRecord>) -> Result<Self> {
        if !(census_time > 0.0) || !census_time.is_finite() {
            return Err(Error::InvalidData(format!("census time must be finite and > 0, got {census_time}")));
        }
        if centres.is_empty() {
            return Err(Error::InvalidData("at least one centre is required".into()));
        }
        let tol = census_time * EQUAL_EXPOSURE_RTOL;
        for c in &centres {
            // Re-run the record checks: fields are public.
            CentreRecord::new(c.centre_id.clone(), c.exposure, c.count)?;
            if c.exposure > census_time + tol {
                return Err(Error::InvalidData(format!(
                    "centre {}: exposure {} exceeds census time {census_time}",
                    c.centre_id, c.exposure
                )));
            }
        }
        let total_count = centres.iter().map(|c| c.count).sum();
        Ok(Self { census_time, centres, total_count })
    }

    /// All centres open for the whole period `[0, census_time]`.
    pub fn simultaneous(census_time: f64, counts: &[u64]) -> Result<Self> {
        let centres = counts
            .iter()
            .enumerate()
            .map(|(i, &n)| CentreRecord::new((i + 1).to_string(), census_time, n))
            .collect::<Result<Vec<_>>>()?;
        Self::new(census_time, centres)
    }

    /// Centres with the given exposures and counts, identified by position.
    pub fn from_pairs(census_time: f64, exposures: &[f64], counts: &[u64]) -> Result<Self> {
        if exposures.len() != counts.len() {
            return Err(Error::InvalidData(format!(
                "{} exposures but {} counts",
                exposures.len(),
                counts.len()
            )));
        }
        let centres = exposures
            .iter()
            .zip(counts)
            .enumerate()
            .map(|(i, (&t, &n))| CentreRecord::new((i + 1).to_string(), t, n))
            .collect::<Result<Vec<_>>>()?;
        Self::new(census_time, centres)
    }

    pub fn census_time(&self) -> f64 {
        self.census_time
    }

    pub fn centres(&self) -> &[CentreRecord] {
        &self.centres
    }

    pub fn num_centres(&self) -> usize {
        self.centres.len()
    }

    pub fn total_count(&self) -> u64 {
        self.total_count
    }

    pub fn total_exposure(&self) -> f64 {
        self.centres.iter().map(|c| c.exposure).sum()
    }

    /// Centres that have been open for a positive time.
    pub(crate) fn exposed(&self) -> impl Iterator<Item = &CentreRecord> + '_ {
        self.centres.iter().filter(|c| c.exposure > 0.0)
    }

    /// The shared exposure when every positive exposure agrees to
    /// [`EQUAL_EXPOSURE_RTOL`], with the number of such centres.
    pub fn common_exposure(&self) -> Option<(f64, usize)> {
        let mut it = self.exposed();
        let first = it.next()?.exposure;
        let mut k = 1;
        for c in it {
            if (c.exposure - first).abs() > EQUAL_EXPOSURE_RTOL * first {
                return None;
            }
            k += 1;
        }
        Some((first, k))
    }
}

/// Marginal log-likelihood of `(alpha, beta)`, up to an additive constant.
///
/// `C α ln β − Σ (α + n_c) ln(β + t_c) − C ln Γ(α) + Σ ln Γ(α + n_c)`.
/// Centres with zero exposure contribute nothing.
pub fn log_likelihood(alpha: f64, beta: f64, data: &TrialData) -> Result<f64> {
    if !(alpha > 0.0) || !alpha.is_finite() || !(beta > 0.0) || !beta.is_finite() {
        return domain(format!("log-likelihood needs alpha, beta > 0, got ({alpha}, {beta})"));
    }
    Ok(ll(alpha, beta, data))
}

pub(crate) fn ll(alpha: f64, beta: f64, data: &TrialData) -> f64 {
    let lga = lgamma(alpha);
    data.exposed()
        .map(|c| {
            let n = c.count as f64;
            -alpha * (c.exposure / beta).ln_1p() - n * (beta + c.exposure).ln() + lgamma(alpha + n) - lga
        })
        .sum()
}

/// `ψ(a + n) − ψ(a)`.
pub(crate) fn digamma_shift(a: f64, n: u64) -> f64 {
    if n <= 32 {
        (0..n).map(|j| 1.0 / (a + j as f64)).sum()
    } else {
        digamma(a + n as f64) - digamma(a)
    }
}

/// `ψ'(a + n) − ψ'(a)`.
fn trigamma_shift(a: f64, n: u64) -> f64 {
    if n <= 32 {
        -(0..n).map(|j| (a + j as f64).powi(-2)).sum::<f64>()
    } else {
        trigamma(a + n as f64) - trigamma(a)
    }
}

/// Gradient of the log-likelihood with respect to `(ln α, ln β)`.
pub fn log_scale_gradient(alpha: f64, beta: f64, data: &TrialData) -> [f64; 2] {
    let (mut ga, mut gb) = (0.0, 0.0);
    for c in data.exposed() {
        let n = c.count as f64;
        let t = c.exposure;
        ga += -(t / beta).ln_1p() + digamma_shift(alpha, c.count);
        gb += (alpha * t - beta * n) / (beta + t);
    }
    [alpha * ga, gb]
}

/// Hessian of the log-likelihood with respect to `(ln α, ln β)`.
pub(crate) fn log_scale_hessian(alpha: f64, beta: f64, data: &TrialData) -> [[f64; 2]; 2] {
    let g = log_scale_gradient(alpha, beta, data);
    let (mut tri, mut cross, mut bb) = (0.0, 0.0, 0.0);
    for c in data.exposed() {
        let n = c.count as f64;
        let t = c.exposure;
        tri += trigamma_shift(alpha, c.count);
        cross += t / (beta + t);
        bb += t * (alpha + n) / (beta + t).powi(2);
    }
    let haa = g[0] + alpha * alpha * tri;
    let hab = alpha * cross;
    let hbb = -beta * bb;
    [[haa, hab], [hab, hbb]]
}

/// Mean and variance of the total rate `λ•` given the data and a fit.
///
/// Each centre's rate is a posteriori `Gam(α̂ + n_c, β̂ + t_c)`, independently.
pub fn posterior_rate_moments(data: &TrialData, fit: &ModelFit) -> Result<(f64, f64)> {
    if !(fit.alpha_hat > 0.0 && fit.beta_hat > 0.0) {
        return domain(format!("fit has non-positive parameters ({}, {})", fit.alpha_hat, fit.beta_hat));
    }
    let (a, b) = (fit.alpha_hat, fit.beta_hat);
    let mut mean = 0.0;
    let mut var = 0.0;
    for c in data.centres() {
        let r = 1.0 / (b + c.exposure);
        let m = (a + c.count as f64) * r;
        mean += m;
        var += m * r;
    }
    Ok((mean, var))
}
