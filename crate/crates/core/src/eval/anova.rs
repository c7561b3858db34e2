use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    pub f_statistic: f64,
    pub p_value: f64,
    /// `mean(group2) − mean(group1)`.
    pub mean_difference: f64,
    pub df_between: usize,
    pub df_within: usize,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// One-way ANOVA over two groups.
pub fn anova_one_way(group1: &[f64], group2: &[f64]) -> Result<AnovaResult> {
    if group1.len() < 2 || group2.len() < 2 {
        return Err(invalid("each ANOVA group needs at least two values"));
    }
    if group1.iter().chain(group2).any(|x| !x.is_finite()) {
        return Err(invalid("ANOVA inputs must be finite"));
    }
    let (n1, n2) = (group1.len() as f64, group2.len() as f64);
    let (m1, m2) = (mean(group1), mean(group2));
    let grand = (n1 * m1 + n2 * m2) / (n1 + n2);
    let ssb = n1 * (m1 - grand).powi(2) + n2 * (m2 - grand).powi(2);
    let ssw: f64 = group1.iter().map(|x| (x - m1).powi(2)).sum::<f64>()
        + group2.iter().map(|x| (x - m2).powi(2)).sum::<f64>();
    let df_within = group1.len() + group2.len() - 2;
    let (f_statistic, p_value) = if ssw == 0.0 {
        if m1 == m2 {
            (0.0, 1.0)
        } else {
            (f64::INFINITY, 0.0)
        }
    } else {
        let f = ssb / (ssw / df_within as f64);
        (f, f_survival(f, 1.0, df_within as f64))
    };
    Ok(AnovaResult { f_statistic, p_value, mean_difference: m2 - m1, df_between: 1, df_within })
}

/// `P(X > f)` for `X ~ F(d1, d2)`.
pub fn f_survival(f: f64, d1: f64, d2: f64) -> f64 {
    if f <= 0.0 {
        return 1.0;
    }
    if f.is_infinite() {
        return 0.0;
    }
    regularized_incomplete_beta(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f)).clamp(0.0, 1.0)
}

/// Lanczos approximation (g = 7, n = 9).
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
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// `I_x(a, b)` by the continued fraction, evaluated with the modified Lentz
/// method on whichever side converges fastest.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - ln_front.exp() * beta_continued_fraction(b, a, 1.0 - x) / b
    }
}

fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-15;
    let tiny_guard = |v: f64| if v.abs() < TINY { TINY } else { v };
    let mut c = 1.0;
    let mut d = 1.0 / tiny_guard(1.0 - (a + b) * x / (a + 1.0));
    let mut h = d;
    for m in 1..=500 {
        let m = m as f64;
        let even = m * (b - m) * x / ((a + 2.0 * m - 1.0) * (a + 2.0 * m));
        d = 1.0 / tiny_guard(1.0 + even * d);
        c = tiny_guard(1.0 + even / c);
        h *= d * c;
        let odd = -(a + m) * (a + b + m) * x / ((a + 2.0 * m) * (a + 2.0 * m + 1.0));
        d = 1.0 / tiny_guard(1.0 + odd * d);
        c = tiny_guard(1.0 + odd / c);
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Composite Simpson integration of the F(d1, d2) density over [0, f],
    /// after substituting x = u² to remove the d1 = 1 singularity at zero.
    fn f_cdf_by_integration(f: f64, d1: f64, d2: f64) -> f64 {
        let ln_b = ln_gamma(d1 / 2.0) + ln_gamma(d2 / 2.0) - ln_gamma((d1 + d2) / 2.0);
        let density = |x: f64| {
            ((d1 / 2.0) * (d1 / d2).ln() + (d1 / 2.0 - 1.0) * x.ln()
                - ((d1 + d2) / 2.0) * (1.0 + d1 * x / d2).ln()
                - ln_b)
                .exp()
        };
        let g = |u: f64| if u == 0.0 { 2.0 * (0.5 * (d1 / d2).ln() - ln_b).exp() } else { 2.0 * u * density(u * u) };
        let upper = f.sqrt();
        let steps = 20_000;
        let h = upper / steps as f64;
        let mut acc = g(0.0) + g(upper);
        for i in 1..steps {
            acc += g(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * h / 3.0
    }

    #[test]
    fn identical_groups() {
        let r = anova_one_way(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(r.f_statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r.mean_difference, 0.0);
    }

    #[test]
    fn hand_example() {
        let r = anova_one_way(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert!((r.f_statistic - 13.5).abs() < 1e-12);
        assert_eq!(r.mean_difference, 3.0);
        assert_eq!((r.df_between, r.df_within), (1, 4));
        let oracle = 1.0 - f_cdf_by_integration(13.5, 1.0, 4.0);
        assert!((r.p_value - oracle).abs() < 1e-6, "{} vs {oracle}", r.p_value);
        assert!((r.p_value - 0.0213).abs() < 0.001);
    }

    #[test]
    fn zero_within_variance_conventions() {
        let r = anova_one_way(&[2.0, 2.0], &[3.0, 3.0]).unwrap();
        assert_eq!((r.f_statistic, r.p_value), (f64::INFINITY, 0.0));
        let r = anova_one_way(&[2.0, 2.0], &[2.0, 2.0]).unwrap();
        assert_eq!((r.f_statistic, r.p_value), (0.0, 1.0));
    }

    #[test]
    fn rejects_small_groups() {
        assert!(anova_one_way(&[1.0], &[1.0, 2.0]).is_err());
        assert!(anova_one_way(&[1.0, f64::NAN], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn ln_gamma_known_values() {
        assert!(ln_gamma(1.0).abs() < 1e-13);
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-12);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-12);
    }

    #[test]
    fn incomplete_beta_closed_forms() {
        // I_x(1, b) = 1 − (1 − x)^b and I_x(a, 1) = x^a.
        for &x in &[0.01, 0.3, 0.5, 0.9, 0.999] {
            assert!((regularized_incomplete_beta(1.0, 3.5, x) - (1.0 - (1.0 - x).powf(3.5))).abs() < 1e-12);
            assert!((regularized_incomplete_beta(2.5, 1.0, x) - x.powf(2.5)).abs() < 1e-12);
        }
    }

    #[test]
    fn survival_matches_integration_oracle() {
        for &(f, d2) in &[(0.5, 4.0), (2.0, 10.0), (7.3, 30.0), (1.1, 2.0)] {
            let oracle = 1.0 - f_cdf_by_integration(f, 1.0, d2);
            assert!((f_survival(f, 1.0, d2) - oracle).abs() < 1e-6);
        }
    }

    fn pooled_t(a: &[f64], b: &[f64]) -> f64 {
        let (na, nb) = (a.len() as f64, b.len() as f64);
        let (ma, mb) = (mean(a), mean(b));
        let ss: f64 = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() + b.iter().map(|x| (x - mb).powi(2)).sum::<f64>();
        let sp2 = ss / (na + nb - 2.0);
        (mb - ma) / (sp2 * (1.0 / na + 1.0 / nb)).sqrt()
    }

    proptest! {
        #[test]
        fn f_equals_squared_t(
            a in proptest::collection::vec(-10.0f64..10.0, 2..15),
            b in proptest::collection::vec(-10.0f64..10.0, 2..15),
        ) {
            let r = anova_one_way(&a, &b).unwrap();
            prop_assume!(r.f_statistic.is_finite());
            let t = pooled_t(&a, &b);
            prop_assert!((r.f_statistic - t * t).abs() <= 1e-9 * (1.0 + t * t));
            prop_assert!((0.0..=1.0).contains(&r.p_value));
        }
    }
}
