//! Paired significance tests and the special functions behind them.
//!
//! Self-contained implementations of the log-gamma function, the
//! regularized incomplete beta (continued fraction), and the regularized
//! incomplete gamma, good to well beyond 1e-6. The test suite checks them
//! against an independent statistics library.

use serde::Serialize;

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TestMethod {
    McNemarExact,
    McNemarChi2,
    PairedT,
}

/// Outcome of a paired significance test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairedTestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub method: TestMethod,
}

/// Natural log of the gamma function (Lanczos approximation).
pub fn ln_gamma(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    const COF: [f64; 6] = [
        76.180_091_729_471_46,
        -86.505_320_329_416_77,
        24.014_098_240_830_91,
        -1.231_739_572_450_155,
        0.120_865_097_386_617_9e-2,
        -0.539_523_938_495_3e-5,
    ];
    let mut y = x;
    let tmp = x + 5.5;
    let tmp = tmp - (x + 0.5) * tmp.ln();
    let mut ser = 1.000_000_000_190_015;
    for c in COF {
        y += 1.0;
        ser += c / y;
    }
    -tmp + (2.506_628_274_631_000_5 * ser / x).ln()
}

/// Continued-fraction kernel for the incomplete beta (modified Lentz).
fn betacf(a: f64, b: f64, x: f64) -> f64 {
    const MAX_IT: usize = 300;
    const EPS: f64 = 3e-15;
    const FPMIN: f64 = 1e-300;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_IT {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta function I_x(a, b).
pub fn betai(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let bt = (ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b)
        + a * x.ln()
        + b * (1.0 - x).ln())
    .exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        bt * betacf(a, b, x) / a
    } else {
        1.0 - bt * betacf(b, a, 1.0 - x) / b
    }
}

/// Two-sided p-value of a t statistic with `df` degrees of freedom.
pub fn student_t_two_sided_p(t: f64, df: f64) -> f64 {
    debug_assert!(df > 0.0);
    betai(df / 2.0, 0.5, df / (df + t * t)).clamp(f64::MIN_POSITIVE, 1.0)
}

/// Series expansion of the regularized lower incomplete gamma P(a, x).
fn gamma_p_series(a: f64, x: f64) -> f64 {
    const MAX_IT: usize = 500;
    const EPS: f64 = 3e-15;
    let mut ap = a;
    let mut sum = 1.0 / a;
    let mut del = sum;
    for _ in 0..MAX_IT {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * EPS {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

/// Continued fraction for the regularized upper incomplete gamma Q(a, x).
fn gamma_q_cf(a: f64, x: f64) -> f64 {
    const MAX_IT: usize = 500;
    const EPS: f64 = 3e-15;
    const FPMIN: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / FPMIN;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..=MAX_IT {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = b + an / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h * (-x + a * x.ln() - ln_gamma(a)).exp()
}

/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x).
pub fn gamma_q(a: f64, x: f64) -> f64 {
    debug_assert!(a > 0.0 && x >= 0.0);
    if x == 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_cf(a, x)
    }
}

fn ln_choose(n: u64, k: u64) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// Exact two-sided McNemar test over discordant-pair counts `b` and `c`:
/// p = min(1, 2 * sum_{k=0}^{min(b,c)} C(b+c, k) / 2^{b+c}).
pub fn mcnemar_exact(b: u64, c: u64) -> Result<PairedTestResult, EvalError> {
    let n = b + c;
    if n == 0 {
        return Err(EvalError::NoDiscordantPairs);
    }
    let m = b.min(c);
    let ln2 = std::f64::consts::LN_2;
    let tail: f64 = (0..=m)
        .map(|k| (ln_choose(n, k) - n as f64 * ln2).exp())
        .sum();
    let p = (2.0 * tail).clamp(f64::MIN_POSITIVE, 1.0);
    Ok(PairedTestResult {
        statistic: m as f64,
        p_value: p,
        method: TestMethod::McNemarExact,
    })
}

/// Chi-square McNemar variant with continuity correction.
pub fn mcnemar_chi2(b: u64, c: u64) -> Result<PairedTestResult, EvalError> {
    let n = b + c;
    if n == 0 {
        return Err(EvalError::NoDiscordantPairs);
    }
    let diff = (b as f64 - c as f64).abs() - 1.0;
    let statistic = (diff.max(0.0)).powi(2) / n as f64;
    let p = gamma_q(0.5, statistic / 2.0).clamp(f64::MIN_POSITIVE, 1.0);
    Ok(PairedTestResult {
        statistic,
        p_value: p,
        method: TestMethod::McNemarChi2,
    })
}

/// Two-sided paired t-test over equal-length samples.
pub fn paired_t(xs: &[f64], ys: &[f64]) -> Result<PairedTestResult, EvalError> {
    if xs.len() != ys.len() {
        return Err(EvalError::LengthMismatch {
            golden: xs.len(),
            predictions: ys.len(),
        });
    }
    let n = xs.len();
    if n < 2 {
        return Err(EvalError::NotEnoughSamples(n));
    }
    let diffs: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let ss: f64 = diffs.iter().map(|d| (d - mean).powi(2)).sum();
    if ss == 0.0 {
        return Err(EvalError::ZeroVariance);
    }
    let sd = (ss / (n as f64 - 1.0)).sqrt();
    let t = mean / (sd / (n as f64).sqrt());
    let p = student_t_two_sided_p(t, n as f64 - 1.0);
    Ok(PairedTestResult {
        statistic: t,
        p_value: p,
        method: TestMethod::PairedT,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use statrs::distribution::{ContinuousCDF, StudentsT};

    #[test]
    fn mcnemar_exact_one_nine() {
        let result = mcnemar_exact(1, 9).unwrap();
        assert_abs_diff_eq!(result.p_value, 22.0 / 1024.0, epsilon = 1e-12);
    }

    #[test]
    fn mcnemar_exact_zero_twenty() {
        let result = mcnemar_exact(0, 20).unwrap();
        assert_abs_diff_eq!(result.p_value, 2.0 * 2f64.powi(-20), epsilon = 1e-15);
    }

    #[test]
    fn mcnemar_exact_symmetric_counts_cap_at_one() {
        for b in [1u64, 3, 10, 50] {
            let result = mcnemar_exact(b, b).unwrap();
            assert_abs_diff_eq!(result.p_value, 1.0);
        }
    }

    #[test]
    fn mcnemar_is_symmetric_in_arguments() {
        for (b, c) in [(0, 5), (2, 9), (7, 3), (15, 40)] {
            let x = mcnemar_exact(b, c).unwrap().p_value;
            let y = mcnemar_exact(c, b).unwrap().p_value;
            assert_abs_diff_eq!(x, y, epsilon = 1e-15);
        }
    }

    #[test]
    fn mcnemar_no_discordant_pairs() {
        assert!(matches!(
            mcnemar_exact(0, 0),
            Err(EvalError::NoDiscordantPairs)
        ));
    }

    #[test]
    fn mcnemar_chi2_reasonable() {
        // (|1-9|-1)^2/10 = 4.9; chi-square(1) upper tail at 4.9.
        let result = mcnemar_chi2(1, 9).unwrap();
        assert_abs_diff_eq!(result.statistic, 4.9, epsilon = 1e-12);
        assert!(result.p_value > 0.02 && result.p_value < 0.03);
    }

    #[test]
    fn paired_t_worked_example() {
        // d = [-1, -1, -2, 0]: t = -2.449, p = 0.0917 (verified against
        // an independent implementation).
        let result = paired_t(&[1.0, 2.0, 3.0, 4.0], &[2.0, 3.0, 5.0, 4.0]).unwrap();
        assert_abs_diff_eq!(result.statistic, -2.449489742783178, epsilon = 1e-9);
        assert_abs_diff_eq!(result.p_value, 0.09172111331157187, epsilon = 1e-6);
    }

    #[test]
    fn paired_t_zero_mean_difference() {
        let result = paired_t(&[1.0, 2.0, 3.0, 4.0], &[2.0, 1.0, 4.0, 3.0]).unwrap();
        assert_abs_diff_eq!(result.statistic, 0.0);
        assert_abs_diff_eq!(result.p_value, 1.0);
    }

    #[test]
    fn paired_t_identical_lists_zero_variance() {
        let xs = [1.0, 2.0, 3.0];
        assert!(matches!(paired_t(&xs, &xs), Err(EvalError::ZeroVariance)));
    }

    #[test]
    fn paired_t_length_mismatch() {
        assert!(matches!(
            paired_t(&[1.0], &[1.0, 2.0]),
            Err(EvalError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn t_cdf_matches_reference_library() {
        let cases: [(f64, f64); 6] = [
            (0.5, 10.0),
            (1.0, 1.0),
            (2.0, 5.0),
            (3.2, 29.0),
            (-2.449489742783178, 3.0),
            (7.5, 2.0),
        ];
        for (t, df) in cases {
            let dist = StudentsT::new(0.0, 1.0, df).unwrap();
            let expected = 2.0 * dist.sf(t.abs());
            assert_abs_diff_eq!(student_t_two_sided_p(t, df), expected, epsilon = 1e-9);
        }
    }

    #[test]
    fn ln_gamma_known_values() {
        assert_abs_diff_eq!(ln_gamma(1.0), 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(ln_gamma(2.0), 0.0, epsilon = 1e-10);
        // ln(4!) for gamma(5)
        assert_abs_diff_eq!(ln_gamma(5.0), 24f64.ln(), epsilon = 1e-10);
        assert_abs_diff_eq!(
            ln_gamma(0.5),
            std::f64::consts::PI.sqrt().ln(),
            epsilon = 1e-10
        );
    }

    #[test]
    fn gamma_q_complements_chi_square() {
        // Q(1/2, 0) = 1, monotone decreasing.
        assert_abs_diff_eq!(gamma_q(0.5, 0.0), 1.0);
        let a = gamma_q(0.5, 1.0);
        let b = gamma_q(0.5, 3.0);
        assert!(a > b && b > 0.0);
        // chi2 sf(3.841, df=1) is about 0.05.
        assert_abs_diff_eq!(gamma_q(0.5, 3.841458820694124 / 2.0), 0.05, epsilon = 1e-6);
    }
}
