use serde::{Deserialize, Serialize};

use super::special::{beta_reg, ln_beta};
use super::{check_positive, check_prob};
use crate::error::{domain, Result};

/// Pearson type VI (scaled beta-prime) law.
///
/// `X / scale = B / (1 - B)` with `B ~ Beta(shape_num, shape_den)`. For the
/// time-to-target prediction `shape_num` is the number of further recruits
/// sought, `shape_den` the posterior shape of the total rate and `scale` its
/// posterior rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pearson6Params {
    pub shape_num: f64,
    pub shape_den: f64,
    pub scale: f64,
}

impl Pearson6Params {
    pub fn new(shape_num: f64, shape_den: f64, scale: f64) -> Result<Self> {
        check_positive(shape_num, "Pearson VI shape_num")?;
        check_positive(shape_den, "Pearson VI shape_den")?;
        check_positive(scale, "Pearson VI scale")?;
        Ok(Self { shape_num, shape_den, scale })
    }

    /// Mean; infinite when `shape_den <= 1`.
    pub fn mean(&self) -> f64 {
        if self.shape_den <= 1.0 {
            return f64::INFINITY;
        }
        self.scale * self.shape_num / (self.shape_den - 1.0)
    }

    /// Variance; infinite when `shape_den <= 2`.
    pub fn variance(&self) -> f64 {
        if self.shape_den <= 2.0 {
            return f64::INFINITY;
        }
        let (a, b) = (self.shape_num, self.shape_den);
        self.mean() * self.scale * (a + b - 1.0) / ((b - 1.0) * (b - 2.0))
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        let (a, b, s) = (self.shape_num, self.shape_den, self.scale);
        if x == 0.0 {
            return match a.partial_cmp(&1.0) {
                Some(std::cmp::Ordering::Less) => f64::INFINITY,
                Some(std::cmp::Ordering::Equal) => b / s,
                _ => 0.0,
            };
        }
        let ln = -ln_beta(a, b) + b * s.ln() + (a - 1.0) * x.ln() - (a + b) * (s + x).ln();
        ln.exp()
    }

    /// `P(X <= x) = I_{x / (x + scale)}(shape_num, shape_den)`.
    pub fn cdf(&self, x: f64) -> Result<f64> {
        if x < 0.0 || x.is_nan() {
            return domain(format!("Pearson VI cdf requires x >= 0, got {x}"));
        }
        if x.is_infinite() {
            return Ok(1.0);
        }
        let denom = x + self.scale;
        Ok(beta_reg(self.shape_num, self.shape_den, x / denom, self.scale / denom))
    }

    /// `x` with `cdf(x) = q`.
    ///
    /// Solves for the beta-prime variate `u = b / (1 - b)` on the log scale
    /// with a bracketed Newton iteration and returns `scale * u`.
    pub fn quantile(&self, q: f64) -> Result<f64> {
        check_prob(q, "quantile level")?;
        let (a, b) = (self.shape_num, self.shape_den);
        let cdf = |s: f64| {
            let u = s.exp();
            beta_reg(a, b, u / (1.0 + u), 1.0 / (1.0 + u))
        };
        // d cdf / d ln u
        let lnorm = ln_beta(a, b);
        let dcdf = |s: f64| {
            let ln1pu = if s > 0.0 { s + (-s).exp().ln_1p() } else { s.exp().ln_1p() };
            (a * s - (a + b) * ln1pu - lnorm).exp()
        };

        let mut s = (a / b).ln();
        let (mut lo, mut hi);
        if cdf(s) < q {
            lo = s;
            let mut step = 1.0;
            hi = s + step;
            while cdf(hi) < q {
                lo = hi;
                step *= 2.0;
                hi += step;
                if hi > 745.0 {
                    return domain(format!("Pearson VI quantile {q} too far in the upper tail"));
                }
            }
        } else {
            hi = s;
            let mut step = 1.0;
            lo = s - step;
            while cdf(lo) >= q {
                hi = lo;
                step *= 2.0;
                lo -= step;
                if lo < -745.0 {
                    return Ok(0.0);
                }
            }
        }

        s = 0.5 * (lo + hi);
        for _ in 0..200 {
            let f = cdf(s) - q;
            if f < 0.0 {
                lo = s;
            } else {
                hi = s;
            }
            let deriv = dcdf(s);
            let mut next = if deriv > 0.0 { s - f / deriv } else { f64::NAN };
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            let converged = (next - s).abs() < 1e-14 * (1.0 + s.abs()) || hi - lo < 1e-14 * (1.0 + s.abs());
            s = next;
            if converged {
                break;
            }
        }
        Ok(self.scale * s.exp())
    }
}
