//! Small statistics helpers for the Monte Carlo experiments.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("{successes} successes out of {trials} trials")]
    RangeError { successes: usize, trials: usize },
}

/// Two-sided standard normal quantile for `confidence`, e.g. 1.96 at 0.95.
pub fn normal_quantile(confidence: f64) -> f64 {
    Normal::standard().inverse_cdf(0.5 + confidence / 2.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Proportion {
    pub successes: usize,
    pub trials: usize,
    pub estimate: f64,
    pub low: f64,
    pub high: f64,
}

/// Wilson score interval for `successes` out of `trials`.
pub fn wilson_interval(successes: usize, trials: usize, confidence: f64) -> Result<Proportion, StatsError> {
    if trials == 0 || successes > trials {
        return Err(StatsError::RangeError { successes, trials });
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z = normal_quantile(confidence);
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    Ok(Proportion {
        successes,
        trials,
        estimate: p,
        low: if successes == 0 { 0.0 } else { (centre - half).max(0.0) },
        high: if successes == trials { 1.0 } else { (centre + half).min(1.0) },
    })
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_a − F_b|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// Asymptotic 1% critical value of the two-sample statistic.
pub fn ks_critical_1pct(n: usize, m: usize) -> f64 {
    let (n, m) = (n as f64, m as f64);
    1.6276 * ((n + m) / (n * m)).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
    pub slope_stderr: f64,
    /// `slope / slope_stderr`; infinite for an exact fit.
    pub t_stat: f64,
}

/// Ordinary least squares of `y` on `x`. Needs at least three points.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    let n = x.len();
    if n < 3 || y.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let e = b - intercept - slope * a;
            e * e
        })
        .sum();
    let slope_stderr = (rss / (nf - 2.0) / sxx).sqrt();
    let t_stat = if slope_stderr > 0.0 {
        slope / slope_stderr
    } else {
        f64::INFINITY.copysign(slope)
    };
    Some(LinearFit {
        intercept,
        slope,
        slope_stderr,
        t_stat,
    })
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// Unbiased sample variance.
pub fn variance(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return f64::NAN;
    }
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn quantile_value() {
        assert!((normal_quantile(0.95) - 1.959_963_984_540_054).abs() < 1e-9);
    }

    #[test]
    fn wilson_edges_and_reference() {
        let w = wilson_interval(0, 100, 0.95).unwrap();
        assert_eq!(w.low, 0.0);
        assert!((w.high - 0.036_993_5).abs() < 1e-6);
        let w = wilson_interval(100, 100, 0.95).unwrap();
        assert_eq!(w.high, 1.0);
        // 1 in 1000, computed separately with z = 1.959964
        let w = wilson_interval(1, 1000, 0.95).unwrap();
        assert!((w.low - 0.000_176_5).abs() < 1e-6, "{w:?}");
        assert!((w.high - 0.005_642_6).abs() < 1e-6, "{w:?}");
        assert!(wilson_interval(0, 0, 0.95).is_err());
        assert!(wilson_interval(5, 4, 0.95).is_err());
    }

    /// Roots of `(p̂ − p)² = z²p(1 − p)/n` in `p`.
    fn wilson_by_quadratic(k: f64, n: f64, z: f64) -> (f64, f64) {
        let ph = k / n;
        let a = 1.0 + z * z / n;
        let b = -(2.0 * ph + z * z / n);
        let c = ph * ph;
        let disc = (b * b - 4.0 * a * c).sqrt();
        ((-b - disc) / (2.0 * a), (-b + disc) / (2.0 * a))
    }

    #[test]
    fn wilson_matches_quadratic_roots() {
        let w = wilson_interval(5, 100, 0.95).unwrap();
        let (lo, hi) = wilson_by_quadratic(5.0, 100.0, 1.959_963_984_540_054);
        assert!((w.low - lo).abs() < 1e-12 && (w.high - hi).abs() < 1e-12);
    }

    #[test]
    fn ks_identical_and_disjoint() {
        let a: Vec<f64> = (0..100).map(f64::from).collect();
        assert_eq!(ks_two_sample(&a, &a), 0.0);
        let b: Vec<f64> = (200..300).map(f64::from).collect();
        assert_eq!(ks_two_sample(&a, &b), 1.0);
        let c: Vec<f64> = (0..100).map(|i| f64::from(i) + 50.0).collect();
        assert!((ks_two_sample(&a, &c) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn fit_exact_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [3.0, 5.0, 7.0, 9.0];
        let f = linear_fit(&x, &y).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12 && (f.intercept - 1.0).abs() < 1e-12);
        assert!(f.t_stat > 1e6);
        assert!(linear_fit(&x[..2], &y[..2]).is_none());
    }

    proptest! {
        #[test]
        fn wilson_contains_estimate(k in 0usize..500, extra in 0usize..500) {
            let n = k + extra + 1;
            let w = wilson_interval(k, n, 0.95).unwrap();
            prop_assert!(0.0 <= w.low && w.low <= w.estimate && w.estimate <= w.high && w.high <= 1.0);
        }

        #[test]
        fn ks_symmetric_in_range(a in prop::collection::vec(-5.0f64..5.0, 1..50), b in prop::collection::vec(-5.0f64..5.0, 1..50)) {
            let d = ks_two_sample(&a, &b);
            prop_assert!((0.0..=1.0).contains(&d));
            prop_assert_eq!(d, ks_two_sample(&b, &a));
        }
    }
}
