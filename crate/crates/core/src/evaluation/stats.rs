//! Paired t-test with a Student-t tail from the regularized incomplete beta
//! function.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7, 9 terms).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
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
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + G + 0.5;
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 500;
    const EPS: f64 = 1e-15;
    const TINY: f64 = 1e-300;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;

        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;

        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
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

/// Regularized incomplete beta `I_x(a, b)` for `a, b > 0`, `0 <= x <= 1`.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    assert!(a > 0.0 && b > 0.0, "shape parameters must be positive");
    assert!((0.0..=1.0).contains(&x), "x must lie in [0, 1]");
    if x == 0.0 {
        return 0.0;
    }
    if x == 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// `P(T <= t)` for Student's t with `df` degrees of freedom.
pub fn student_t_cdf(t: f64, df: f64) -> f64 {
    assert!(df > 0.0, "degrees of freedom must be positive");
    if t.is_infinite() {
        return if t > 0.0 { 1.0 } else { 0.0 };
    }
    let tail = 0.5 * regularized_incomplete_beta(df / (df + t * t), 0.5 * df, 0.5);
    if t > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// `P(|T| >= |t|)`.
pub fn student_t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    regularized_incomplete_beta(df / (df + t * t), 0.5 * df, 0.5).clamp(0.0, 1.0)
}

/// Aligned per-prompt values of one metric under two methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedSamples {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl PairedSamples {
    pub fn new(a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::usage(format!(
                "paired samples differ in length ({} vs {})",
                a.len(),
                b.len()
            )));
        }
        if a.len() < 2 {
            return Err(Error::usage("a paired t-test needs at least 2 pairs"));
        }
        if a.iter().chain(&b).any(|v| !v.is_finite()) {
            return Err(Error::Validation("paired samples contain a non-finite value".into()));
        }
        Ok(Self { a, b })
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t_statistic: f64,
    pub p_two_sided: f64,
    pub df: usize,
    pub mean_difference: f64,
    pub sd_difference: f64,
}

/// Two-sided paired t-test on `a - b`.
pub fn paired_t_test(samples: &PairedSamples) -> Result<TTestResult> {
    let n = samples.len();
    if n < 2 || samples.b.len() != n {
        return Err(Error::usage("a paired t-test needs at least 2 aligned pairs"));
    }
    let d: Vec<f64> = samples.a.iter().zip(&samples.b).map(|(x, y)| x - y).collect();
    if d.iter().all(|&v| v == d[0]) {
        return Err(Error::DegenerateSample(
            "all paired differences are identical (zero variance)".into(),
        ));
    }
    let nf = n as f64;
    let mean = d.iter().sum::<f64>() / nf;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let sd = var.sqrt();
    if sd == 0.0 {
        return Err(Error::DegenerateSample("paired differences have zero variance".into()));
    }
    let t = mean / (sd / nf.sqrt());
    let df = n - 1;
    Ok(TTestResult {
        t_statistic: t,
        p_two_sided: student_t_two_sided_p(t, df as f64),
        df,
        mean_difference: mean,
        sd_difference: sd,
    })
}

/// Report rendering of a p-value: `<0.001` below 1e-3, omitted above 0.15.
pub fn format_p_value(p: f64) -> Option<String> {
    if p < 1e-3 {
        Some("<0.001".to_string())
    } else if p > 0.15 {
        None
    } else {
        Some(format!("{p:.3}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn ln_gamma_known_values() {
        assert_abs_diff_eq!(ln_gamma(1.0), 0.0, epsilon = 1e-13);
        assert_abs_diff_eq!(ln_gamma(5.0), 24f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(ln_gamma(0.5), std::f64::consts::PI.sqrt().ln(), epsilon = 1e-13);
        assert_abs_diff_eq!(ln_gamma(0.1), 2.252_712_651_734_206, epsilon = 1e-12);
    }

    #[test]
    fn incomplete_beta_closed_forms() {
        // I_x(1, 1) = x ; I_x(a, 1) = x^a ; I_x(1, b) = 1 - (1-x)^b
        for &x in &[0.0, 0.1, 0.5, 0.77, 1.0] {
            assert_abs_diff_eq!(regularized_incomplete_beta(x, 1.0, 1.0), x, epsilon = 1e-13);
            assert_abs_diff_eq!(regularized_incomplete_beta(x, 3.0, 1.0), x.powi(3), epsilon = 1e-13);
            assert_abs_diff_eq!(
                regularized_incomplete_beta(x, 1.0, 4.0),
                1.0 - (1.0 - x).powi(4),
                epsilon = 1e-13
            );
        }
    }

    #[test]
    fn t_cdf_one_df_is_cauchy() {
        for &t in &[-3.0, -0.4, 0.0, 1.0, 7.5] {
            let want = 0.5 + f64::atan(t) / std::f64::consts::PI;
            assert_abs_diff_eq!(student_t_cdf(t, 1.0), want, epsilon = 1e-12);
        }
    }

    #[test]
    fn four_differences_example() {
        let s = PairedSamples::new(vec![1.0, -1.0, 2.0, 0.0], vec![0.0; 4]).unwrap();
        let r = paired_t_test(&s).unwrap();
        assert_abs_diff_eq!(r.mean_difference, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(r.sd_difference, 1.290_994_448_735_805_6, epsilon = 1e-12);
        assert_abs_diff_eq!(r.t_statistic, 0.774_596_669_241_483_4, epsilon = 1e-12);
        assert_eq!(r.df, 3);
        assert_abs_diff_eq!(r.p_two_sided, 0.495_025_346_059_711, epsilon = 1e-9);
    }

    #[test]
    fn swapping_sides_negates_t() {
        let a = vec![0.3, 0.5, 0.1, 0.9, 0.4];
        let b = vec![0.2, 0.45, 0.3, 0.6, 0.41];
        let ab = paired_t_test(&PairedSamples::new(a.clone(), b.clone()).unwrap()).unwrap();
        let ba = paired_t_test(&PairedSamples::new(b, a).unwrap()).unwrap();
        assert_eq!(ab.t_statistic, -ba.t_statistic);
        assert_eq!(ab.p_two_sided, ba.p_two_sided);
    }

    #[test]
    fn degenerate_and_bad_inputs() {
        let s = PairedSamples::new(vec![1.1, 2.1, 3.1], vec![1.0, 2.0, 3.0]);
        // differences are 0.1 up to rounding: not bitwise identical, still a valid call
        assert!(s.is_ok());
        let same = PairedSamples::new(vec![1.0, 2.0], vec![0.5, 1.5]).unwrap();
        assert!(matches!(paired_t_test(&same), Err(Error::DegenerateSample(_))));
        assert!(PairedSamples::new(vec![1.0], vec![2.0]).is_err());
        assert!(PairedSamples::new(vec![1.0, 2.0], vec![2.0]).is_err());
        assert!(PairedSamples::new(vec![1.0, f64::NAN], vec![2.0, 1.0]).is_err());
    }

    #[test]
    fn p_value_formatting() {
        assert_eq!(format_p_value(0.0004).as_deref(), Some("<0.001"));
        assert_eq!(format_p_value(0.0123).as_deref(), Some("0.012"));
        assert_eq!(format_p_value(0.15).as_deref(), Some("0.150"));
        assert_eq!(format_p_value(0.4950), None);
    }
}
