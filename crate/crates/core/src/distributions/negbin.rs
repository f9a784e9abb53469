use serde::{Deserialize, Serialize};

use super::special::{beta_reg, ln_beta};
use super::{check_positive, check_prob};
use crate::error::{domain, Error, Result};

/// Sizes below this use direct pmf summation instead of the incomplete beta.
const SMALL_SIZE: f64 = 1e-3;

/// Negative binomial `NB(size, prob)`: the number of successes before `size`
/// failures when each trial succeeds with probability `prob`.
///
/// `size` may be any positive real. `P(X = j) = Γ(size + j) / (Γ(size) j!) prob^j (1 - prob)^size`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NegBinParams {
    pub size: f64,
    pub prob: f64,
}

impl NegBinParams {
    pub fn new(size: f64, prob: f64) -> Result<Self> {
        check_positive(size, "negative binomial size")?;
        check_prob(prob, "negative binomial prob")?;
        Ok(Self { size, prob })
    }

    pub fn mean(&self) -> f64 {
        self.size * self.prob / (1.0 - self.prob)
    }

    pub fn variance(&self) -> f64 {
        self.mean() / (1.0 - self.prob)
    }

    pub fn ln_pmf(&self, k: u64) -> f64 {
        let j = k as f64;
        // ln Γ(size + j) − ln Γ(size) − ln j! = −ln B(size, j) − ln j for j ≥ 1
        let comb = if k == 0 { 0.0 } else { -ln_beta(self.size, j) - j.ln() };
        comb + j * self.prob.ln()
            + self.size * (-self.prob).ln_1p()
    }

    pub fn pmf(&self, k: u64) -> f64 {
        self.ln_pmf(k).exp()
    }

    /// `P(X <= k) = I_{1 - prob}(size, k + 1)`.
    pub fn cdf(&self, k: u64) -> f64 {
        if self.size < SMALL_SIZE {
            return self.cdf_by_summation(k);
        }
        beta_reg(self.size, k as f64 + 1.0, 1.0 - self.prob, self.prob)
    }

    fn cdf_by_summation(&self, k: u64) -> f64 {
        let mut term = (self.size * (-self.prob).ln_1p()).exp();
        let mut total = term;
        for j in 0..k {
            let j = j as f64;
            term *= (self.size + j) / (j + 1.0) * self.prob;
            total += term;
        }
        total.min(1.0)
    }

    /// Smallest `k` with `cdf(k) >= q`.
    pub fn quantile(&self, q: f64) -> Result<u64> {
        check_prob(q, "quantile level")?;
        let meets = |k: u64| self.cdf(k) >= q;

        let start = self.mean().floor().min(1e15) as u64;
        let step0 = self.variance().sqrt().max(1.0).min(1e15) as u64;

        // Bracket (lo, hi] with cdf(lo) < q <= cdf(hi).
        let (mut lo, mut hi) = if meets(start) {
            let mut hi = start;
            let mut step = step0;
            loop {
                if hi == 0 {
                    return Ok(0);
                }
                let lo = hi.saturating_sub(step);
                if !meets(lo) {
                    break (lo, hi);
                }
                if lo == 0 {
                    return Ok(0);
                }
                hi = lo;
                step = step.saturating_mul(2);
            }
        } else {
            let mut lo = start;
            let mut step = step0;
            loop {
                let hi = lo.checked_add(step).ok_or_else(|| {
                    Error::Domain(format!("negative binomial quantile {q} out of range for {self:?}"))
                })?;
                if meets(hi) {
                    break (lo, hi);
                }
                lo = hi;
                step = step.saturating_mul(2);
                if step > 1 << 60 {
                    return domain(format!("negative binomial quantile {q} did not bracket for {self:?}"));
                }
            }
        };

        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if meets(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    }
}
