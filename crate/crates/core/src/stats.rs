//! Small statistical helpers shared by the experiment drivers.

use crate::error::{invalid, Result};
use serde::{Deserialize, Serialize};
use statrs::statistics::Statistics;

/// Two-sample Kolmogorov–Smirnov statistic `sup_x |F_a(x) - F_b(x)|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return invalid("ks_two_sample: both samples must be nonempty");
    }
    if a.iter().chain(b).any(|x| x.is_nan()) {
        return invalid("ks_two_sample: NaN in sample");
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    Ok(d)
}

/// Ordinary least-squares line `y = intercept + slope x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope (NaN with two points).
    pub slope_std_error: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() || x.len() < 2 {
        return invalid("linear_fit: need at least two (x, y) pairs of equal length");
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return invalid("linear_fit: non-finite input");
    }
    let mx = x.mean();
    let my = y.mean();
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return invalid("linear_fit: x values are all equal");
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let n = x.len() as f64;
    let slope_std_error = if x.len() > 2 {
        let rss: f64 = x
            .iter()
            .zip(y)
            .map(|(a, b)| (b - intercept - slope * a).powi(2))
            .sum();
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    Ok(LineFit { slope, intercept, slope_std_error })
}

/// Line fit of `ln y` against `ln x`; every value must be positive.
pub fn loglog_fit(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return invalid("loglog_fit: values must be positive");
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    linear_fit(&lx, &ly)
}

/// Unbiased sample variance.
pub fn sample_variance(x: &[f64]) -> Result<f64> {
    if x.len() < 2 {
        return invalid("sample_variance: need at least two values");
    }
    Ok(x.variance())
}

/// Mean of the values.
pub fn mean(x: &[f64]) -> Result<f64> {
    if x.is_empty() {
        return invalid("mean: empty sample");
    }
    Ok(x.mean())
}

/// `true` if every element is strictly smaller than its predecessor.
pub fn strictly_decreasing(x: &[f64]) -> bool {
    x.windows(2).all(|w| w[1] < w[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ks_identical_and_disjoint() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(ks_two_sample(&a, &a).unwrap(), 0.0);
        assert_eq!(ks_two_sample(&a, &[10.0, 11.0]).unwrap(), 1.0);
        assert!((ks_two_sample(&[1.0, 2.0], &[1.5]).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn loglog_recovers_power() {
        let x = [10.0, 100.0, 1000.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-1.0 / 3.0)).collect();
        let fit = loglog_fit(&x, &y).unwrap();
        assert!((fit.slope + 1.0 / 3.0).abs() < 1e-12);
        assert!((fit.intercept - 3.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn variance_and_monotonicity() {
        assert!((sample_variance(&[1.0, 2.0, 3.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!(strictly_decreasing(&[3.0, 2.0, 1.0]));
        assert!(!strictly_decreasing(&[3.0, 3.0]));
    }
}
