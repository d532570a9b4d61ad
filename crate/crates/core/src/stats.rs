//! Small numeric helpers shared across modules.
//!
//! Quantiles use the inclusive linear-interpolation rule (Hyndman & Fan type 7):
//! for sorted values `x[0..n]` and probability `p`, the position is `h = (n - 1) p`
//! and the result interpolates between `x[floor(h)]` and `x[floor(h) + 1]`.

use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

/// Type-7 quantile of an already sorted slice.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    debug_assert!((0.0..=1.0).contains(&p));
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    if lo + 1 >= n {
        return sorted[n - 1];
    }
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
}

/// Sorts a copy of `values` and returns the type-7 quantile.
pub fn quantile(values: &[f64], p: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_sorted(&sorted, p)
}

/// Equal-tailed interval `(Q_{alpha/2}, Q_{1-alpha/2})`. Sorts `values` in place.
pub fn equal_tailed_interval(values: &mut [f64], alpha: f64) -> (f64, f64) {
    values.sort_by(f64::total_cmp);
    (
        quantile_sorted(values, alpha / 2.0),
        quantile_sorted(values, 1.0 - alpha / 2.0),
    )
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation with the `n - 1` denominator; zero for fewer than two values.
pub fn sample_sd(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (n - 1) as f64).sqrt()
}

pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// `log Phi(x)`, accurate in the far lower tail where `Phi(x)` underflows.
pub fn log_std_normal_cdf(x: f64) -> f64 {
    if x > -30.0 {
        return std_normal_cdf(x).ln();
    }
    // Asymptotic Mills-ratio expansion.
    let x2 = x * x;
    let series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
    -0.5 * x2 - (-x).ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() + series.ln()
}

pub fn std_normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Standard error of a chain mean by non-overlapping batch means.
///
/// Uses `floor(sqrt(n))` batches, which is consistent for geometrically
/// ergodic chains.
pub fn batch_means_se(chain: &[f64]) -> f64 {
    let n = chain.len();
    if n < 4 {
        return sample_sd(chain) / (n as f64).sqrt();
    }
    let batch_len = (n as f64).sqrt().floor() as usize;
    let batches = n / batch_len;
    let means: Vec<f64> = (0..batches)
        .map(|b| mean(&chain[b * batch_len..(b + 1) * batch_len]))
        .collect();
    sample_sd(&means) / (batches as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn type7_matches_hand_values() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 1.0), 4.0);
        // h = 3 * 0.5 = 1.5
        assert!((quantile_sorted(&v, 0.5) - 2.5).abs() < 1e-15);
        // h = 3 * 0.25 = 0.75
        assert!((quantile_sorted(&v, 0.25) - 1.75).abs() < 1e-15);
    }

    #[test]
    fn log_cdf_is_continuous_across_the_switch() {
        let a = log_std_normal_cdf(-30.0 + 1e-9);
        let b = log_std_normal_cdf(-30.0 - 1e-9);
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        assert!(log_std_normal_cdf(-100.0).is_finite());
    }

    #[test]
    fn quantile_function_inverts_cdf() {
        for p in [0.025, 0.5, 0.975] {
            assert!((std_normal_cdf(std_normal_quantile(p)) - p).abs() < 1e-9);
        }
        assert!((std_normal_quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-9);
    }
}
