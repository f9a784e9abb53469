use argmin::core::{CostFunction, Executor, State};
use argmin::solver::brent::BrentRoot;
use argmin::solver::neldermead::NelderMead;
use serde::{Deserialize, Serialize};

use super::{digamma_shift, ll, log_scale_gradient, log_scale_hessian, TrialData};
use crate::error::{Error, Result};

/// Optimiser settings for [`fit_mle`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Nelder-Mead stops once the simplex costs have this standard deviation.
    pub f_tol: f64,
    pub max_iter: u64,
    /// Target sup-norm of the log-scale gradient at the optimum.
    pub grad_tol: f64,
    /// Upper bound on `ln α`; a likelihood still rising here is degenerate.
    pub log_alpha_max: f64,
    /// Report a degenerate likelihood as a capped fit flagged `degenerate`
    /// instead of an error.
    pub cap_degenerate: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { f_tol: 1e-10, max_iter: 5000, grad_tol: 1e-8, log_alpha_max: 30.0, cap_degenerate: false }
    }
}

/// Maximum-likelihood estimate of `(α, β)` with optimiser diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelFit {
    pub alpha_hat: f64,
    pub beta_hat: f64,
    pub log_lik: f64,
    /// The log-scale gradient met `grad_tol`.
    pub converged: bool,
    pub iterations: u64,
    /// The likelihood increases without bound along `α/β = const`; the
    /// parameters are the capped values at `ln α = log_alpha_max`.
    pub degenerate: bool,
}

/// Fits `(α, β)` by maximum likelihood.
///
/// With a common positive exposure `t` the optimum satisfies
/// `α/β = n• / (C t)` exactly, so the search is one-dimensional in `ln α`.
/// Otherwise Nelder-Mead runs in `(ln α, ln β)`, followed by Newton steps
/// that drive the analytic gradient to `grad_tol`.
pub fn fit_mle(data: &TrialData, opts: &FitOptions) -> Result<ModelFit> {
    let n_total = data.total_count();
    if n_total == 0 {
        return Err(Error::InsufficientData("no recruits observed; the likelihood has no maximum".into()));
    }
    match data.common_exposure() {
        Some((t, k)) => fit_profile(data, t, k, opts),
        None => fit_general(data, opts),
    }
}

fn degenerate(data: &TrialData, ratio: f64, opts: &FitOptions) -> Result<ModelFit> {
    if !opts.cap_degenerate {
        return Err(Error::DegenerateLikelihood { log_alpha: opts.log_alpha_max });
    }
    let alpha = opts.log_alpha_max.exp();
    let beta = alpha / ratio;
    Ok(ModelFit {
        alpha_hat: alpha,
        beta_hat: beta,
        log_lik: ll(alpha, beta, data),
        converged: false,
        iterations: 0,
        degenerate: true,
    })
}

/// Derivative of the profile log-likelihood in `α` under `β = α t k / n•`:
/// `Σ_c [ψ(α + n_c) − ψ(α)] − k ln(1 + m/α)` with `m = n•/k`.
///
/// The two parts agree to leading order in `1/α`, so for large `α` the
/// difference is summed as a power series instead.
struct ProfileSlope {
    counts: Vec<u64>,
    k: f64,
    m: f64,
    series_from: f64,
    /// Coefficients of `α^{-(p+1)}`, `p = 1, 2, …`.
    coeffs: Vec<f64>,
}

const SERIES_TERMS: usize = 24;

impl ProfileSlope {
    fn new(data: &TrialData, k: usize) -> Self {
        let counts: Vec<u64> = data.exposed().map(|c| c.count).collect();
        let kf = k as f64;
        let m = data.total_count() as f64 / kf;
        let max_n = counts.iter().copied().max().unwrap_or(0);

        // above[j] = number of centres with n_c > j
        let mut above = vec![0u64; max_n as usize + 1];
        for &n in &counts {
            for slot in above.iter_mut().take(n as usize) {
                *slot += 1;
            }
        }
        // Σ_c Σ_{j<n_c} 1/(α+j) = Σ_p (−1)^p S_p / α^{p+1},  S_p = Σ_j above[j] j^p
        // k ln(1 + m/α)         = Σ_p (−1)^p k m^{p+1} / ((p+1) α^{p+1})
        // The p = 0 terms cancel exactly (S_0 = n• = k m).
        let coeffs = (1..=SERIES_TERMS)
            .map(|p| {
                let s: f64 = above.iter().enumerate().skip(1).map(|(j, &a)| a as f64 * (j as f64).powi(p as i32)).sum();
                let sign = if p % 2 == 0 { 1.0 } else { -1.0 };
                sign * (s - kf * m.powi(p as i32 + 1) / (p as f64 + 1.0))
            })
            .collect();
        Self { counts, k: kf, m, series_from: 40.0 * (max_n as f64 + m + 1.0), coeffs }
    }

    fn eval(&self, alpha: f64) -> f64 {
        if alpha < self.series_from {
            let psi: f64 = self.counts.iter().map(|&n| digamma_shift(alpha, n)).sum();
            return psi - self.k * (self.m / alpha).ln_1p();
        }
        let inv = 1.0 / alpha;
        let mut pow = inv * inv;
        let mut total = 0.0;
        for c in &self.coeffs {
            total += c * pow;
            pow *= inv;
        }
        total
    }
}

impl CostFunction for ProfileSlope {
    type Param = f64;
    type Output = f64;

    fn cost(&self, s: &f64) -> std::result::Result<f64, argmin::core::Error> {
        Ok(self.eval(s.exp()))
    }
}

fn fit_profile(data: &TrialData, t: f64, k: usize, opts: &FitOptions) -> Result<ModelFit> {
    let n_total = data.total_count() as f64;
    let ratio = n_total / (k as f64 * t);
    let slope = ProfileSlope::new(data, k);

    let top = opts.log_alpha_max;
    if slope.eval(top.exp()) >= 0.0 {
        return degenerate(data, ratio, opts);
    }
    // Walk down to the nearest sign change below the upper bound.
    let mut hi = top;
    let mut lo = top - 1.0;
    while slope.eval(lo.exp()) < 0.0 {
        hi = lo;
        lo -= 1.0;
        if lo < -top - 10.0 {
            return Err(Error::InsufficientData("profile likelihood has no interior maximum".into()));
        }
    }

    let res = Executor::new(slope, BrentRoot::new(lo, hi, 1e-13))
        .configure(|st| st.max_iters(opts.max_iter))
        .run()
        .map_err(|e| Error::Domain(format!("profile root search failed: {e}")))?;
    let mut s = *res.state().get_best_param().expect("brent keeps a best point");
    let mut iterations = res.state().get_iter();
    let slope = res.problem.problem.as_ref().expect("problem is returned");

    // A few Newton steps on α·g(α) in ln α tighten the stationarity residual.
    for _ in 0..5 {
        let a = s.exp();
        let r = a * slope.eval(a);
        let h = 1e-6 * (1.0 + s.abs());
        let dr = ((s + h).exp() * slope.eval((s + h).exp()) - (s - h).exp() * slope.eval((s - h).exp())) / (2.0 * h);
        if !(dr < 0.0) || r.abs() <= 0.01 * opts.grad_tol {
            break;
        }
        let next = s - r / dr;
        if !(next > lo && next < hi) {
            break;
        }
        s = next;
        iterations += 1;
    }

    let alpha = s.exp();
    let beta = alpha / ratio;
    let g = log_scale_gradient(alpha, beta, data);
    Ok(ModelFit {
        alpha_hat: alpha,
        beta_hat: beta,
        log_lik: ll(alpha, beta, data),
        converged: g[0].abs().max(g[1].abs()) <= opts.grad_tol,
        iterations,
        degenerate: false,
    })
}

struct NegLogLik<'a> {
    data: &'a TrialData,
}

impl CostFunction for NegLogLik<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        Ok(-ll(p[0].exp(), p[1].exp(), self.data))
    }
}

fn fit_general(data: &TrialData, opts: &FitOptions) -> Result<ModelFit> {
    let mu = data.total_count() as f64 / data.total_exposure();
    // Second-order sign of the profile likelihood as α → ∞ at fixed α/β:
    // positive overdispersion is needed for an interior maximum.
    let (mut excess, mut t2) = (0.0, 0.0);
    for c in data.exposed() {
        let n = c.count as f64;
        excess += (n - mu * c.exposure).powi(2) - n;
        t2 += c.exposure * c.exposure;
    }
    if excess <= 0.0 {
        return degenerate(data, mu, opts);
    }

    // Moment start: Var(n_c) = μ t_c + μ² t_c² / α.
    let a0 = (mu * mu * t2 / excess).clamp(1e-4, 1e8);
    let x0 = vec![a0.ln(), (a0 / mu).ln()];
    let simplex = vec![x0.clone(), vec![x0[0] + 0.4, x0[1]], vec![x0[0], x0[1] + 0.4]];
    let solver = NelderMead::new(simplex)
        .with_sd_tolerance(opts.f_tol)
        .map_err(|e| Error::Config(format!("optimiser tolerance: {e}")))?;
    let res = Executor::new(NegLogLik { data }, solver)
        .configure(|st| st.max_iters(opts.max_iter))
        .run()
        .map_err(|e| Error::Domain(format!("Nelder-Mead failed: {e}")))?;
    let best = res.state().get_best_param().expect("simplex keeps a best point").clone();
    let mut iterations = res.state().get_iter();

    let (mut la, mut lb) = (best[0], best[1]);
    let mut f = ll(la.exp(), lb.exp(), data);
    for _ in 0..100 {
        let g = log_scale_gradient(la.exp(), lb.exp(), data);
        if g[0].abs().max(g[1].abs()) <= 0.01 * opts.grad_tol {
            break;
        }
        let h = log_scale_hessian(la.exp(), lb.exp(), data);
        let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
        let (da, db) = if h[0][0] < 0.0 && det > 0.0 {
            (-(h[1][1] * g[0] - h[0][1] * g[1]) / det, -(h[0][0] * g[1] - h[1][0] * g[0]) / det)
        } else {
            (1e-3 * g[0].signum(), 1e-3 * g[1].signum())
        };
        // Short Newton steps are taken as is; the objective cannot resolve them.
        let mut step = 1.0;
        let mut moved = false;
        for _ in 0..40 {
            let (na, nb) = (la + step * da, lb + step * db);
            let nf = ll(na.exp(), nb.exp(), data);
            if nf >= f || step * da.abs().max(db.abs()) < 1e-6 {
                la = na;
                lb = nb;
                f = nf;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        iterations += 1;
        if !moved {
            break;
        }
    }

    if la >= opts.log_alpha_max {
        return degenerate(data, mu, opts);
    }
    let (alpha, beta) = (la.exp(), lb.exp());
    let g = log_scale_gradient(alpha, beta, data);
    Ok(ModelFit {
        alpha_hat: alpha,
        beta_hat: beta,
        log_lik: ll(alpha, beta, data),
        converged: g[0].abs().max(g[1].abs()) <= opts.grad_tol,
        iterations,
        degenerate: false,
    })
}
