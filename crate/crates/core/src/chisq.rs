//! Chi-square quantiles through the inverse regularized incomplete gamma
//! function.

use std::f64::consts::PI;

const EPS: f64 = 1e-16;
const MAX_ITER: usize = 500;

/// `ln Gamma(x)` for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (k, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + k as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x < a + 1.0 {
        series(a, x)
    } else {
        1.0 - continued_fraction(a, x)
    }
}

/// Regularized upper incomplete gamma `Q(a, x) = 1 - P(a, x)`.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else if x < a + 1.0 {
        1.0 - series(a, x)
    } else {
        continued_fraction(a, x)
    }
}

fn prefactor(a: f64, x: f64) -> f64 {
    (a * x.ln() - x - ln_gamma(a)).exp()
}

fn series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut term = 1.0 / a;
    let mut sum = term;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * EPS {
            break;
        }
    }
    sum * prefactor(a, x)
}

/// Modified Lentz evaluation of the continued fraction for `Q(a, x)`.
fn continued_fraction(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for k in 1..MAX_ITER {
        let an = -(k as f64) * (k as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    prefactor(a, x) * h
}

/// Standard normal quantile (Acklam's rational approximation, ~1e-9).
fn normal_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    if p < 0.02425 {
        tail((-2.0 * p.ln()).sqrt())
    } else if p > 1.0 - 0.02425 {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

/// Quantile of the chi-square distribution with `df` degrees of freedom:
/// the `q` with `P(df / 2, q / 2) = p`.
///
/// Wilson-Hilferty start, then safeguarded Newton steps on whichever of the
/// lower or upper tail is smaller.
pub fn chisq_quantile(df: usize, p: f64) -> f64 {
    assert!(df >= 1, "chi-square needs df >= 1");
    assert!(p > 0.0 && p < 1.0, "probability must lie in (0, 1), got {p}");
    let k = df as f64;
    let a = 0.5 * k;
    if df == 2 {
        return -2.0 * (-p).ln_1p();
    }

    let z = normal_quantile(p);
    let h = 2.0 / (9.0 * k);
    let mut q = k * (1.0 - h + z * h.sqrt()).powi(3);
    if !(q > 0.0) {
        // lower tail: P(a, x) ~ x^a / Gamma(a + 1)
        q = 2.0 * ((p.ln() + ln_gamma(a + 1.0)) / a).exp();
    }

    let upper = p > 0.5;
    let target = if upper { 1.0 - p } else { p };
    let residual = |q: f64| {
        if upper {
            target - gamma_q(a, 0.5 * q)
        } else {
            gamma_p(a, 0.5 * q) - target
        }
    };
    let (mut lo, mut hi) = (0.0_f64, f64::INFINITY);
    for _ in 0..200 {
        let r = residual(q);
        if r == 0.0 {
            return q;
        }
        if r < 0.0 {
            lo = lo.max(q);
        } else {
            hi = hi.min(q);
        }
        let x = 0.5 * q;
        let density = 0.5 * ((a - 1.0) * x.ln() - x - ln_gamma(a)).exp();
        let mut next = q - r / density;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * q.max(lo) };
        }
        if (next - q).abs() <= 1e-15 * next.abs() {
            return next;
        }
        q = next;
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spot_values() {
        assert!((chisq_quantile(1, 0.95) - 3.841_458_820_694_124).abs() < 1e-9);
        assert!((chisq_quantile(6, 0.95) - 12.591_587_243_743_977).abs() < 1e-9);
    }

    #[test]
    fn df2_closed_form() {
        for &x in &[0.1, 1.0, 5.991_464_547_107_979, 20.0] {
            let p = 1.0 - (-x / 2.0_f64).exp();
            assert!((chisq_quantile(2, p) - x).abs() <= 1e-10 * x);
        }
    }

    #[test]
    fn inverts_gamma_p_across_range() {
        for df in 1..=30 {
            for &p in &[1e-6, 0.01, 0.3, 0.5, 0.9, 0.999, 1.0 - 1e-9] {
                let q = chisq_quantile(df, p);
                let back = gamma_p(df as f64 / 2.0, q / 2.0);
                assert!((back - p).abs() <= 1e-12 + 1e-9 * p.min(1.0 - p), "df {df} p {p}: {back}");
            }
        }
    }

    #[test]
    fn ln_gamma_known_values() {
        assert!((ln_gamma(1.0)).abs() < 1e-14);
        assert!((ln_gamma(0.5) - PI.sqrt().ln()).abs() < 1e-14);
        assert!((ln_gamma(10.0) - 362_880.0_f64.ln()).abs() < 1e-12);
    }
}
