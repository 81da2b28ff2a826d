//! Chi-squared distribution: CDF via the regularized lower incomplete gamma
//! function, and its inverse by safeguarded Newton iteration.

use crate::DetectError;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
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

/// ln Γ(x) for x > 0 (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized lower incomplete gamma P(a, x).
pub fn regularized_gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        gamma_series(a, x)
    } else {
        1.0 - gamma_continued_fraction(a, x)
    }
}

fn gamma_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut term = 1.0 / a;
    let mut sum = term;
    for _ in 0..1000 {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * 1e-17 {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

/// Q(a, x) by the modified Lentz continued fraction.
fn gamma_continued_fraction(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..1000 {
        let an = -(i as f64) * (i as f64 - a);
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
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

pub fn chi2_cdf(dof: usize, x: f64) -> f64 {
    regularized_gamma_p(dof as f64 / 2.0, x / 2.0)
}

pub fn chi2_pdf(dof: usize, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let k = dof as f64 / 2.0;
    ((k - 1.0) * x.ln() - x / 2.0 - k * std::f64::consts::LN_2 - ln_gamma(k)).exp()
}

/// Value q with CDF(q) = p for a chi-squared distribution with `dof` degrees of freedom.
pub fn chi2_quantile(dof: usize, p: f64) -> Result<f64, DetectError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(DetectError::InvalidProbability(p));
    }
    if dof == 0 {
        return Err(DetectError::DimensionMismatch {
            expected: 1,
            got: 0,
        });
    }

    let mut lo = 0.0;
    let mut hi = (dof as f64).max(1.0);
    while chi2_cdf(dof, hi) < p {
        lo = hi;
        hi *= 2.0;
    }

    let mut q = 0.5 * (lo + hi);
    for _ in 0..200 {
        let f = chi2_cdf(dof, q) - p;
        if f == 0.0 {
            return Ok(q);
        }
        if f < 0.0 {
            lo = q;
        } else {
            hi = q;
        }
        let pdf = chi2_pdf(dof, q);
        let newton = q - f / pdf;
        let next = if pdf > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - q).abs() <= 1e-14 * q.max(1.0) {
            return Ok(next);
        }
        q = next;
    }
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_gamma_known_values() {
        assert!((ln_gamma(1.0)).abs() < 1e-13);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-13);
        assert!((ln_gamma(10.0) - 362_880f64.ln()).abs() < 1e-11);
    }

    #[test]
    fn two_dof_closed_form() {
        // CDF for dof = 2 is 1 - exp(-x/2), so q = -2 ln(1 - p).
        for p in [0.01, 0.25, 0.5, 0.9, 0.99, 0.999] {
            let q = chi2_quantile(2, p).unwrap();
            assert!((q + 2.0 * (1.0 - p).ln()).abs() < 1e-9, "p={p} q={q}");
        }
        assert!((chi2_quantile(2, 0.5).unwrap() - 1.386_29).abs() < 1e-5);
    }

    #[test]
    fn worked_quantiles() {
        assert!((chi2_quantile(2, 0.99).unwrap() - 9.210_34).abs() < 1e-5);
        assert!((chi2_quantile(6, 0.99).unwrap() - 16.811_9).abs() < 1e-4);
    }

    #[test]
    fn probability_outside_open_unit_interval_rejected() {
        for p in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(chi2_quantile(3, p).is_err());
        }
    }

    #[test]
    fn cdf_edges() {
        assert_eq!(chi2_cdf(4, 0.0), 0.0);
        assert!(chi2_cdf(4, 1e4) > 1.0 - 1e-12);
    }
}
