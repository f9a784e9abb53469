//! Large-trial limit laws of the plug-in quantile probability, and cumulants
//! of sums of independent gamma variables.

use serde::{Deserialize, Serialize};

use crate::distributions::special::lgamma;
use crate::distributions::{normal_cdf, normal_quantile, GammaParams};
use crate::error::{domain, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LimitObjective {
    Count,
    Time,
}

/// Law of `W = Φ(c Z + d)` with `Z` standard normal.
///
/// `W` is the limiting value of `P(X ≤ q̂_p)` for a plug-in quantile `q̂_p` of
/// the future count or time `X`, as the number of centres grows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitLaw {
    pub slope: f64,
    pub shift: f64,
    pub objective: LimitObjective,
}

impl LimitLaw {
    pub fn new(slope: f64, shift: f64, objective: LimitObjective) -> Result<Self> {
        if !(slope > 0.0) || !slope.is_finite() || !shift.is_finite() {
            return domain(format!("limit law needs slope > 0 and finite shift, got ({slope}, {shift})"));
        }
        Ok(Self { slope, shift, objective })
    }

    /// Count objective: `c = √(t+/t)`, `d = Φ⁻¹(p) √(1 + (t+/β)/(1 + t/β))`.
    pub fn count(p: f64, beta: f64, t: f64, t_plus: f64) -> Result<Self> {
        positive(&[(beta, "beta"), (t, "t"), (t_plus, "t_plus")])?;
        let d = normal_quantile(p)? * (1.0 + (t_plus / beta) / (1.0 + t / beta)).sqrt();
        Self::new((t_plus / t).sqrt(), d, LimitObjective::Count)
    }

    /// Time objective with `a = n+ / C`: `c = √(aβ/(αt))`,
    /// `d = Φ⁻¹(p) √(1 + (a/α)/(1 + t/β))`.
    pub fn time(p: f64, alpha: f64, beta: f64, t: f64, a: f64) -> Result<Self> {
        positive(&[(alpha, "alpha"), (beta, "beta"), (t, "t"), (a, "a")])?;
        let d = normal_quantile(p)? * (1.0 + (a / alpha) / (1.0 + t / beta)).sqrt();
        Self::new((a * beta / (alpha * t)).sqrt(), d, LimitObjective::Time)
    }
}

fn positive(args: &[(f64, &str)]) -> Result<()> {
    for &(x, what) in args {
        if !(x > 0.0) || !x.is_finite() {
            return domain(format!("{what} must be finite and > 0, got {x}"));
        }
    }
    Ok(())
}

fn check_unit(w: f64) -> Result<()> {
    if w > 0.0 && w < 1.0 {
        Ok(())
    } else {
        domain(format!("w must lie in (0, 1), got {w}"))
    }
}

/// `P(W ≤ w) = Φ((Φ⁻¹(w) − d) / c)`.
pub fn limit_prob_cdf(w: f64, law: &LimitLaw) -> Result<f64> {
    check_unit(w)?;
    Ok(normal_cdf((normal_quantile(w)? - law.shift) / law.slope))
}

/// Density of `W`: `φ((Φ⁻¹(w) − d)/c) / (c φ(Φ⁻¹(w)))`.
pub fn limit_prob_density(w: f64, law: &LimitLaw) -> Result<f64> {
    check_unit(w)?;
    let z = normal_quantile(w)?;
    let u = (z - law.shift) / law.slope;
    Ok((0.5 * (z * z - u * u)).exp() / law.slope)
}

/// Mass of the limit law at 1 as `t+ → ∞`: `Φ(√(t/(β+t)) Φ⁻¹(p))`.
pub fn limit_tail_mass(p: f64, beta: f64, t: f64) -> Result<f64> {
    if !(beta >= 0.0) || !beta.is_finite() {
        return domain(format!("beta must be finite and >= 0, got {beta}"));
    }
    positive(&[(t, "t")])?;
    Ok(normal_cdf((t / (beta + t)).sqrt() * normal_quantile(p)?))
}

/// Independent gamma variables `X_i ~ Gam(shape_i, rate_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaCollection {
    components: Vec<GammaParams>,
}

impl GammaCollection {
    pub fn new(components: Vec<GammaParams>) -> Result<Self> {
        if components.is_empty() {
            return domain("gamma collection must not be empty");
        }
        for g in &components {
            GammaParams::new(g.shape, g.rate)?;
        }
        Ok(Self { components })
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        let components = pairs.iter().map(|&(a, b)| GammaParams::new(a, b)).collect::<Result<_>>()?;
        Self::new(components)
    }

    pub fn components(&self) -> &[GammaParams] {
        &self.components
    }
}

/// `ln κ_j` for the sum, with `κ_j = (j−1)! Σ shape_i / rate_i^j`.
pub fn ln_sum_gamma_cumulant(j: u32, coll: &GammaCollection) -> Result<f64> {
    if j == 0 {
        return domain("cumulant order must be at least 1");
    }
    let jf = j as f64;
    let terms: Vec<f64> = coll.components.iter().map(|g| g.shape.ln() - jf * g.rate.ln()).collect();
    let top = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = terms.iter().map(|t| (t - top).exp()).sum();
    Ok(lgamma(jf) + top + sum.ln())
}

/// `κ_j = (j−1)! Σ shape_i / rate_i^j`; accumulated in log space past `j = 20`.
pub fn sum_gamma_cumulant(j: u32, coll: &GammaCollection) -> Result<f64> {
    if j == 0 {
        return domain("cumulant order must be at least 1");
    }
    if j > 20 {
        return Ok(ln_sum_gamma_cumulant(j, coll)?.exp());
    }
    let factorial: f64 = (1..j).map(f64::from).product();
    Ok(factorial * coll.components.iter().map(|g| g.shape / g.rate.powi(j as i32)).sum::<f64>())
}

/// The gamma law with the same mean and variance as the sum.
pub fn moment_matched_gamma(coll: &GammaCollection) -> GammaParams {
    let k1: f64 = coll.components.iter().map(|g| g.shape / g.rate).sum();
    let k2: f64 = coll.components.iter().map(|g| g.shape / (g.rate * g.rate)).sum();
    GammaParams { shape: k1 * k1 / k2, rate: k1 / k2 }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CumulantRow {
    pub j: u32,
    pub sum: f64,
    pub matched: f64,
    /// `sum − matched`.
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CumulantReport {
    pub rows: Vec<CumulantRow>,
    pub pass: bool,
}

/// Compares cumulants of orders `3..=j_max` between the sum and its
/// moment-matched gamma; `pass` holds when `0 < κ_j^G ≤ κ_j^S (1 + 1e-9)` throughout.
pub fn verify_cumulant_ordering(coll: &GammaCollection, j_max: u32) -> Result<CumulantReport> {
    if j_max < 3 {
        return domain(format!("j_max must be at least 3, got {j_max}"));
    }
    let matched = GammaCollection::new(vec![moment_matched_gamma(coll)])?;
    let mut rows = Vec::with_capacity(j_max as usize - 2);
    let mut pass = true;
    for j in 3..=j_max {
        let ln_s = ln_sum_gamma_cumulant(j, coll)?;
        let ln_g = ln_sum_gamma_cumulant(j, &matched)?;
        // Compare on the log scale so high orders cannot overflow the check.
        if !(ln_g.is_finite() && ln_g <= ln_s + 1e-9_f64.ln_1p()) {
            pass = false;
        }
        let (s, g) = (ln_s.exp(), ln_g.exp());
        rows.push(CumulantRow { j, sum: s, matched: g, gap: s - g });
    }
    Ok(CumulantReport { rows, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_and_point_mass_cases() {
        let uniform = LimitLaw::new(1.0, 0.0, LimitObjective::Count).unwrap();
        for &w in &[0.01, 0.3, 0.5, 0.99] {
            assert!((limit_prob_cdf(w, &uniform).unwrap() - w).abs() < 1e-14);
            assert!((limit_prob_density(w, &uniform).unwrap() - 1.0).abs() < 1e-12);
        }
        let sharp = LimitLaw::new(1e-6, 0.3, LimitObjective::Count).unwrap();
        let at = normal_cdf(0.3);
        assert!(limit_prob_cdf(at - 1e-3, &sharp).unwrap() < 1e-12);
        assert!(limit_prob_cdf(at + 1e-3, &sharp).unwrap() > 1.0 - 1e-12);
        assert!(limit_prob_cdf(0.0, &uniform).is_err());
        assert!(LimitLaw::new(0.0, 0.0, LimitObjective::Time).is_err());
    }

    #[test]
    fn short_census_law_is_bimodal() {
        // t = 50, t+ = 350: mass piles up near both ends.
        let law = LimitLaw::count(0.5, 150.0, 50.0, 350.0).unwrap();
        let f = |w| limit_prob_density(w, &law).unwrap();
        assert!(f(0.02) > f(0.5) && f(0.98) > f(0.5));
        assert!((limit_prob_cdf(0.5, &law).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn long_census_law_steps_at_p() {
        let law = LimitLaw::count(0.3, 150.0, 1e6, 200.0).unwrap();
        assert!(limit_prob_cdf(0.27, &law).unwrap() < 1e-6);
        assert!(limit_prob_cdf(0.33, &law).unwrap() > 1.0 - 1e-6);
    }

    #[test]
    fn tail_mass_reference_values() {
        assert_eq!(limit_tail_mass(0.5, 150.0, 200.0).unwrap(), 0.5);
        assert!((limit_tail_mass(0.8, 0.0, 200.0).unwrap() - 0.8).abs() < 1e-15);
        let v = limit_tail_mass(0.25, 150.0, 200.0).unwrap();
        assert!((v - 0.305_07).abs() < 5e-6, "{v}");
    }

    #[test]
    fn cumulant_hand_values() {
        let two = GammaCollection::from_pairs(&[(1.0, 1.0), (2.0, 2.0)]).unwrap();
        assert!((sum_gamma_cumulant(3, &two).unwrap() - 2.5).abs() < 1e-15);
        assert!((sum_gamma_cumulant(1, &two).unwrap() - 2.0).abs() < 1e-15);
        let one = GammaCollection::from_pairs(&[(2.5, 0.7)]).unwrap();
        for j in 1..=25u32 {
            let fact: f64 = (1..j).map(f64::from).product();
            let expect = fact * 2.5 / 0.7f64.powi(j as i32);
            assert!((sum_gamma_cumulant(j, &one).unwrap() / expect - 1.0).abs() < 1e-12, "j={j}");
        }
        assert!(sum_gamma_cumulant(0, &one).is_err());
        assert!(GammaCollection::new(vec![]).is_err());
    }

    #[test]
    fn matched_gamma_hand_values() {
        let mix = GammaCollection::from_pairs(&[(1.0, 1.0), (1.0, 3.0)]).unwrap();
        let g = moment_matched_gamma(&mix);
        assert!((g.rate - 1.2).abs() < 1e-14);
        assert!((g.shape - 1.6).abs() < 1e-14);
        let r = verify_cumulant_ordering(&mix, 3).unwrap();
        assert!((r.rows[0].sum - 2.074_074_074_074_074).abs() < 1e-12);
        assert!((r.rows[0].matched - 1.851_851_851_851_852).abs() < 1e-12);
        assert!(r.rows[0].gap > 0.0 && r.pass);

        let common = GammaCollection::from_pairs(&[(0.5, 2.0), (3.0, 2.0), (1.5, 2.0)]).unwrap();
        let g = moment_matched_gamma(&common);
        assert!((g.shape - 5.0).abs() < 1e-13 && (g.rate - 2.0).abs() < 1e-14);
        for row in verify_cumulant_ordering(&common, 10).unwrap().rows {
            assert!(row.gap.abs() <= 1e-12 * row.sum);
        }
    }

    #[test]
    fn high_orders_do_not_overflow() {
        let c = GammaCollection::from_pairs(&[(0.1, 0.1), (10.0, 10.0)]).unwrap();
        let r = verify_cumulant_ordering(&c, 200).unwrap();
        assert!(r.pass);
        assert!(ln_sum_gamma_cumulant(200, &c).unwrap().is_finite());
    }

    fn collection() -> impl Strategy<Value = Vec<(f64, f64)>> {
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..=10)
            .prop_map(|v| v.into_iter().map(|(a, b)| (10f64.powf(a), 10f64.powf(b))).collect())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn matched_gamma_never_exceeds_sum_cumulants(pairs in collection()) {
            let c = GammaCollection::from_pairs(&pairs).unwrap();
            let g = moment_matched_gamma(&c);
            let k1 = sum_gamma_cumulant(1, &c).unwrap();
            let k2 = sum_gamma_cumulant(2, &c).unwrap();
            prop_assert!((g.mean() / k1 - 1.0).abs() < 1e-12);
            prop_assert!((g.variance() / k2 - 1.0).abs() < 1e-12);
            let report = verify_cumulant_ordering(&c, 8).unwrap();
            prop_assert!(report.pass, "{:?}", report.rows);
        }
    }

    proptest! {
        #[test]
        fn density_integrates_to_one(c in 0.2f64..1.0, d in -2.0f64..2.0) {
            let law = LimitLaw::new(c, d, LimitObjective::Time).unwrap();
            // Substitute w = Φ(z): ∫ f(w) dw = ∫ f(Φ(z)) φ(z) dz.
            let (lo, hi, n) = (-12.0, 8.2, 20_000);
            let h = (hi - lo) / n as f64;
            let g = |z: f64| {
                let w = normal_cdf(z);
                if w <= 0.0 || w >= 1.0 { 0.0 } else { limit_prob_density(w, &law).unwrap() * crate::distributions::normal_pdf(z) }
            };
            let mut s = g(lo) + g(hi);
            for i in 1..n {
                s += g(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            prop_assert!((s * h / 3.0 - 1.0).abs() < 1e-8);
        }

        #[test]
        fn density_is_derivative_of_cdf(c in 0.2f64..3.0, d in -2.0f64..2.0, w in 0.02f64..0.98) {
            let law = LimitLaw::new(c, d, LimitObjective::Count).unwrap();
            let h = 1e-5;
            let fd = (limit_prob_cdf(w + h, &law).unwrap() - limit_prob_cdf(w - h, &law).unwrap()) / (2.0 * h);
            let f = limit_prob_density(w, &law).unwrap();
            prop_assert!((fd - f).abs() < 1e-6 * (1.0 + f), "fd {} f {}", fd, f);
        }
    }
}
