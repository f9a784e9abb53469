//! Distribution kernels for the recruitment model.
//!
//! Five families are covered: gamma (centre rates and time-to-target given the
//! total rate), Poisson (counts given rates), negative binomial with real size
//! (predicted counts), Pearson VI (predicted time-to-target) and the standard
//! normal used by the quantile adjustment.

mod gamma;
mod negbin;
mod pearson6;
pub mod special;

pub use gamma::{poisson_cdf, poisson_pmf, sample_gamma, sample_poisson, GammaParams};
pub use negbin::NegBinParams;
pub use pearson6::Pearson6Params;
pub use special::{digamma, ln_gamma, normal_cdf, normal_pdf, normal_quantile, trigamma};

use crate::error::{domain, Result};

pub(crate) fn check_prob(q: f64, what: &str) -> Result<()> {
    if q > 0.0 && q < 1.0 {
        Ok(())
    } else {
        domain(format!("{what} must lie in (0, 1), got {q}"))
    }
}

pub(crate) fn check_positive(x: f64, what: &str) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        domain(format!("{what} must be finite and > 0, got {x}"))
    }
}
