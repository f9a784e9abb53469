//! Special functions: log-gamma and its derivatives, the regularized
//! incomplete gamma and beta functions, and the standard normal law.
//!
//! The negative-binomial and Pearson VI laws used for prediction routinely
//! have shape parameters in the hundreds or thousands, so the continued
//! fractions below run without a small fixed iteration cap.

use crate::error::{domain, Result};

const CF_MAX_ITER: usize = 20_000;
const CF_EPS: f64 = 1e-16;
const CF_TINY: f64 = 1e-300;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Arguments are shifted up to this value before the asymptotic series.
const SHIFT_TO: f64 = 12.0;
/// Shape ratio beyond which the incomplete beta uses its gamma limit.
const GAMMA_LIMIT_RATIO: f64 = 1e6;

/// Natural log of the gamma function, `ln Γ(x)`, for `x > 0`.
pub fn ln_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return domain(format!("ln_gamma requires a finite x > 0, got {x}"));
    }
    Ok(lgamma(x))
}

/// Unchecked `ln Γ(x)`; callers guarantee `x > 0`.
///
/// Stirling series after shifting the argument to at least 12 with
/// `Γ(x) = Γ(x + n) / (x (x + 1) ... (x + n - 1))`.
pub(crate) fn lgamma(x: f64) -> f64 {
    if x == 1.0 || x == 2.0 {
        return 0.0;
    }
    let mut z = x;
    let mut prod = 1.0;
    while z < SHIFT_TO {
        prod *= z;
        z += 1.0;
    }
    let series = stirling_correction(z);
    let stirling = (z - 0.5) * z.ln() - z + HALF_LN_2PI + series;
    if prod == 1.0 {
        stirling
    } else {
        stirling - prod.ln()
    }
}

/// `ln Γ(z) - [(z - 1/2) ln z - z + ln √(2π)]` for `z >= 12`.
fn stirling_correction(z: f64) -> f64 {
    let inv = 1.0 / z;
    let inv2 = inv * inv;
    // B_{2k} / (2k (2k - 1) z^{2k - 1}) for k = 1..7
    inv * (1.0 / 12.0
        + inv2
            * (-1.0 / 360.0
                + inv2
                    * (1.0 / 1260.0
                        + inv2
                            * (-1.0 / 1680.0
                                + inv2 * (1.0 / 1188.0 + inv2 * (-691.0 / 360_360.0 + inv2 * (1.0 / 156.0)))))))
}

/// `ln(1 + e) - e`, accurate for small `e`.
fn ln1p_minus(e: f64) -> f64 {
    if e.abs() > 0.25 {
        return e.ln_1p() - e;
    }
    // -e²/2 + e³/3 - ...
    let mut term = -e * e;
    let mut sum = 0.0;
    let mut k = 2.0;
    loop {
        let add = term / k;
        sum += add;
        if add.abs() <= sum.abs() * 1e-17 {
            break;
        }
        term *= -e;
        k += 1.0;
    }
    sum
}

#[inline]
pub(crate) fn ln_beta(a: f64, b: f64) -> f64 {
    let (small, large) = if a < b { (a, b) } else { (b, a) };
    if large < SHIFT_TO {
        return lgamma(a) + lgamma(b) - lgamma(a + b);
    }
    // ln Γ(l) − ln Γ(l + s) from the Stirling form, without forming either term.
    let sum = large + small;
    lgamma(small) - (large - 0.5) * (small / large).ln_1p() - small * sum.ln()
        + small
        + stirling_correction(large)
        - stirling_correction(sum)
}

/// Digamma function ψ(x) = d/dx ln Γ(x), for `x > 0`.
pub fn digamma(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    let mut z = x;
    let mut acc = 0.0;
    while z < SHIFT_TO {
        acc -= 1.0 / z;
        z += 1.0;
    }
    let inv2 = 1.0 / (z * z);
    let series = inv2
        * (1.0 / 12.0
            - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0 - inv2 * (691.0 / 32760.0))))));
    acc + z.ln() - 0.5 / z - series
}

/// Trigamma function ψ'(x) for `x > 0`.
///
/// Shifts the argument up with `ψ'(x) = ψ'(x + 1) + 1/x²` and finishes with
/// the asymptotic expansion, which is accurate to double precision for
/// `x ≥ 20`.
pub fn trigamma(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    let mut x = x;
    let mut acc = 0.0;
    while x < 20.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // Bernoulli-number series: 1/x + 1/(2x²) + Σ B_{2k} / x^{2k+1}
    let series = inv
        + 0.5 * inv2
        + inv
            * inv2
            * (1.0 / 6.0
                + inv2 * (-1.0 / 30.0 + inv2 * (1.0 / 42.0 + inv2 * (-1.0 / 30.0 + inv2 * (5.0 / 66.0)))));
    acc + series
}

/// `x^a e^{-x} / Γ(a)`, the common prefactor of both incomplete gamma ratios.
///
/// For large `a` the exponent is rearranged around `x = a` so that the
/// leading terms cancel analytically rather than in floating point.
fn gamma_front(a: f64, x: f64) -> f64 {
    if a < SHIFT_TO {
        return (a * x.ln() - x - lgamma(a)).exp();
    }
    let e = (x - a) / a;
    (a * ln1p_minus(e) + 0.5 * a.ln() - HALF_LN_2PI - stirling_correction(a)).exp()
}

/// Series for `P(a, x)`, used when `x < a + 1`.
fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut term = 1.0 / a;
    let mut sum = term;
    for _ in 0..CF_MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * CF_EPS {
            break;
        }
    }
    sum * gamma_front(a, x)
}

/// Lentz continued fraction for `Q(a, x)`, used when `x >= a + 1`.
fn gamma_q_cf(a: f64, x: f64) -> f64 {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / CF_TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..=CF_MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = b + an / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() <= CF_EPS {
            break;
        }
    }
    gamma_front(a, x) * h
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub(crate) fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x.is_infinite() {
        1.0
    } else if x < a + 1.0 {
        gamma_p_series(a, x)
    } else {
        1.0 - gamma_q_cf(a, x)
    }
}

/// Regularized upper incomplete gamma `Q(a, x)`.
pub(crate) fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else if x.is_infinite() {
        0.0
    } else if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_cf(a, x)
    }
}

/// Regularized incomplete beta `I_x(a, b)` where the caller supplies both
/// `x` and `y = 1 - x`, so that tails near 0 or 1 keep full precision.
pub(crate) fn beta_reg(a: f64, b: f64, x: f64, y: f64) -> f64 {
    debug_assert!(a > 0.0 && b > 0.0);
    if x <= 0.0 {
        return 0.0;
    }
    if y <= 0.0 {
        return 1.0;
    }
    if a == 1.0 {
        // 1 - y^b
        let yb = y.powf(b);
        return if yb > 0.5 { -(b * (-x).ln_1p()).exp_m1() } else { 1.0 - yb };
    }
    if b == 1.0 {
        let xa = x.powf(a);
        return if xa > 0.5 { 1.0 + (a * (-y).ln_1p()).exp_m1() } else { xa };
    }
    // One shape dwarfing the other: the beta law is a scaled gamma law to
    // O((small / large)^2), beyond double precision past this ratio.
    if a > GAMMA_LIMIT_RATIO * (b + 1.0) {
        return gamma_q(b, (a + 0.5 * (b - 1.0)) * -(-y).ln_1p());
    }
    if b > GAMMA_LIMIT_RATIO * (a + 1.0) {
        return gamma_p(a, (b + 0.5 * (a - 1.0)) * -(-x).ln_1p());
    }
    // The continued fraction converges fast for x < (a + 1) / (a + b + 2);
    // otherwise use I_x(a, b) = 1 - I_y(b, a).
    // With one huge shape the preferred side can need ~sqrt(shape) terms;
    // the other side then still converges quickly.
    if x * (a + b + 2.0) < a + 1.0 {
        beta_cf_scaled(a, b, x, y).unwrap_or_else(|| 1.0 - beta_cf_scaled(b, a, y, x).unwrap_or(f64::NAN))
    } else {
        beta_cf_scaled(b, a, y, x).map_or_else(|| beta_cf_scaled(a, b, x, y).unwrap_or(f64::NAN), |v| 1.0 - v)
    }
}

/// `x^a y^b / (a B(a, b))` times the Lentz-evaluated continued fraction, or
/// `None` if the fraction has not converged after `CF_MAX_ITER` terms.
fn beta_cf_scaled(a: f64, b: f64, x: f64, y: f64) -> Option<f64> {
    // Take the log of the larger of x, y through the smaller, which is exact.
    let (ln_x, ln_y) = if x > 0.5 { ((-y).ln_1p(), y.ln()) } else { (x.ln(), (-x).ln_1p()) };
    let ln_front = a * ln_x + b * ln_y - ln_beta(a, b);
    let front = ln_front.exp() / a;
    if front == 0.0 {
        return Some(0.0);
    }

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < CF_TINY {
        d = CF_TINY;
    }
    d = 1.0 / d;
    let mut h = d;

    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;

        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        h *= d * c;

        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() <= CF_EPS {
            return Some(front * h);
        }
    }
    None
}

/// Standard normal density φ(x).
pub fn normal_pdf(x: f64) -> f64 {
    const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal CDF Φ(x).
///
/// Uses `Φ(-|x|) = Q(1/2, x²/2) / 2` so the lower tail keeps relative accuracy.
pub fn normal_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    let half_x2 = 0.5 * x * x;
    if x < 0.0 {
        0.5 * gamma_q(0.5, half_x2)
    } else {
        0.5 + 0.5 * gamma_p(0.5, half_x2)
    }
}

/// Standard normal quantile Φ⁻¹(p) for `p` in (0, 1).
///
/// Wichura's AS 241 (PPND16), relative accuracy about 1e-16.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return domain(format!("normal quantile requires p in (0, 1), got {p}"));
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = ((((((2509.080_928_730_122_7 * r + 33_430.575_583_588_13) * r + 67265.770_927_008_7) * r
            + 45921.953_931_549_87)
            * r
            + 13_731.693_765_509_46)
            * r
            + 1971.590_950_306_551_3)
            * r
            + 133.141_667_891_784_38)
            * r
            + 3.387_132_872_796_366_5;
        let den = ((((((5226.495_278_852_545 * r + 28729.085_735_721_943) * r + 39307.895_800_092_71) * r
            + 21213.794_301_586_597)
            * r
            + 5394.196_021_424_751)
            * r
            + 687.187_007_492_057_9)
            * r
            + 42.313_330_701_600_91)
            * r
            + 1.0;
        return Ok(q * num / den);
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-tail.ln()).sqrt();
    let z = if r <= 5.0 {
        r -= 1.6;
        let num = ((((((7.745_450_142_783_414e-4 * r + 0.022_723_844_989_269_184) * r + 0.241_780_725_177_450_6) * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_546)
            * r
            + 1.423_437_110_749_683_5;
        let den = ((((((1.050_750_071_644_416_9e-9 * r + 5.475_938_084_995_345e-4) * r + 0.015_198_666_563_616_457)
            * r
            + 0.148_103_976_427_480_08)
            * r
            + 0.689_767_334_985_1)
            * r
            + 1.676_384_830_183_803_8)
            * r
            + 2.053_191_626_637_759)
            * r
            + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = ((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r
            + 0.001_242_660_947_388_078_4)
            * r
            + 0.026_532_189_526_576_124)
            * r
            + 0.296_560_571_828_504_9)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103;
        let den = ((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_446e-7) * r
            + 1.846_318_317_510_054_8e-5)
            * r
            + 7.868_691_311_456_133e-4)
            * r
            + 0.014_875_361_290_850_615)
            * r
            + 0.136_929_880_922_735_8)
            * r
            + 0.599_832_206_555_888)
            * r
            + 1.0;
        num / den
    };
    Ok(if q < 0.0 { -z } else { z })
}
