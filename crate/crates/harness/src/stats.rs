//! Confidence intervals and summary statistics for Monte Carlo estimates.

use serde::{Deserialize, Serialize};
use sigtrace_core::rng::{GaussianStream, Seed};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::statistics::{Data, OrderStatistics};

/// Closed interval `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Two-sided standard normal quantile for confidence `level`.
pub fn z_value(level: f64) -> f64 {
    Normal::standard().inverse_cdf(0.5 + 0.5 * level)
}

/// Wilson score interval for `k` successes out of `n`.
pub fn wilson(k: u64, n: u64, level: f64) -> Interval {
    if n == 0 {
        return Interval { lo: 0.0, hi: 1.0 };
    }
    let z = z_value(level);
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let k = k as f64;
    Interval {
        lo: if k == 0.0 { 0.0 } else { (center - half).max(0.0) },
        hi: if k == n { 1.0 } else { (center + half).min(1.0) },
    }
}

/// Binomial standard error `√(p(1−p)/n)`.
pub fn proportion_se(k: u64, n: u64) -> f64 {
    if n == 0 {
        return f64::NAN;
    }
    let p = k as f64 / n as f64;
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Sample mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Normal-approximation interval `mean ± z·se`.
pub fn normal_interval(mean: f64, se: f64, level: f64) -> Interval {
    let z = z_value(level);
    Interval {
        lo: mean - z * se,
        hi: mean + z * se,
    }
}

/// Sample quantile at `q ∈ [0, 1]`.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    Data::new(xs.to_vec()).quantile(q)
}

pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}

/// Percentile bootstrap interval for a proportion from `resamples` resamples.
pub fn bootstrap_proportion(k: u64, n: u64, level: f64, resamples: usize, seed: Seed) -> Interval {
    let p = k as f64 / n as f64;
    let mut rng = GaussianStream::new(seed);
    let mut stats: Vec<f64> = (0..resamples)
        .map(|_| {
            let hits = (0..n).filter(|_| rng.next_uniform() < p).count();
            hits as f64 / n as f64
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    let alpha = 0.5 * (1.0 - level);
    Interval {
        lo: quantile(&stats, alpha),
        hi: quantile(&stats, 1.0 - alpha),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn z_values() {
        assert_abs_diff_eq!(z_value(0.95), 1.959963984540054, epsilon = 1e-9);
        assert_abs_diff_eq!(z_value(0.99), 2.5758293035489004, epsilon = 1e-9);
    }

    #[test]
    fn wilson_textbook_values() {
        // 81 of 263 at 95%: (0.2553, 0.3662)
        let iv = wilson(81, 263, 0.95);
        assert_abs_diff_eq!(iv.lo, 0.2553, epsilon = 5e-4);
        assert_abs_diff_eq!(iv.hi, 0.3662, epsilon = 5e-4);
        // zero successes: upper limit z²/(n+z²)
        let iv = wilson(0, 100, 0.95);
        let z2 = z_value(0.95).powi(2);
        assert_eq!(iv.lo, 0.0);
        assert_abs_diff_eq!(iv.hi, z2 / (100.0 + z2), epsilon = 1e-12);
        assert_eq!(wilson(0, 0, 0.95), Interval { lo: 0.0, hi: 1.0 });
    }

    #[test]
    fn wilson_matches_bootstrap() {
        let (k, n) = (140, 400);
        let b = bootstrap_proportion(k, n, 0.95, 4000, Seed::new(5, 0));
        let w = wilson(k, n, 0.95);
        assert!((b.lo - w.lo).abs() < 0.01, "{b:?} vs {w:?}");
        assert!((b.hi - w.hi).abs() < 0.01, "{b:?} vs {w:?}");
    }

    #[test]
    fn wilson_nested_by_level() {
        for k in [0, 3, 50, 97, 100] {
            let a = wilson(k, 100, 0.95);
            let b = wilson(k, 100, 0.99);
            assert!(b.lo <= a.lo && a.hi <= b.hi);
            assert!(a.contains(k as f64 / 100.0));
        }
        for n in 1..500 {
            for k in [0, 1, n / 2, n - 1, n] {
                let (a, b) = (wilson(k, n, 0.95), wilson(k, n, 0.99));
                assert!(b.lo <= a.lo && a.hi <= b.hi, "k={k} n={n}");
            }
        }
    }

    #[test]
    fn mean_and_quantiles() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let (m, se) = mean_se(&xs);
        assert_eq!(m, 2.5);
        assert_abs_diff_eq!(se, (5.0f64 / 3.0 / 4.0).sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(median(&[3.0, 1.0, 2.0]), 2.0, epsilon = 1e-12);
        assert!(median(&[]).is_nan());
    }
}
