//! Small statistical helpers shared by the estimators and the tests.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
}

/// Standard error of the sample variance, from the fourth central moment.
pub fn variance_stderr(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = mean(xs);
    let m2 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    ((m4 - m2 * m2) / n).max(0.0).sqrt()
}

pub fn covariance(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len();
    let (mx, my) = (mean(xs), mean(ys));
    xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / (n - 1) as f64
}

/// Pearson correlation; `NaN` for degenerate inputs.
pub fn correlation(xs: &[f64], ys: &[f64]) -> f64 {
    covariance(xs, ys) / (variance(xs) * variance(ys)).sqrt()
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2)
}

/// `P(|Z| ≤ a)` for standard normal `Z`.
pub fn normal_central_mass(a: f64) -> f64 {
    if a <= 0.0 {
        return 0.0;
    }
    statrs::function::erf::erf(a / std::f64::consts::SQRT_2)
}

pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_a - F_b|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic two-sample critical value `c(α) √((n + m) / (n m))`.
pub fn ks_critical(alpha: f64, n: usize, m: usize) -> f64 {
    let c = (-0.5 * (alpha / 2.0).ln()).sqrt();
    c * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub slope_stderr: f64,
}

/// Weighted least squares `y ≈ a + b x`. The reported `r2` is the weighted
/// coefficient of determination.
pub fn weighted_linear_fit(x: &[f64], y: &[f64], w: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() || x.len() != w.len() {
        return Err(Error::Insufficient("fit inputs differ in length".into()));
    }
    if x.len() < 2 {
        return Err(Error::Insufficient("need at least two points for a line".into()));
    }
    if w.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::Insufficient("fit weights must be positive and finite".into()));
    }
    let sw: f64 = w.iter().sum();
    let mx = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let sxx: f64 = x.iter().zip(w).map(|(a, b)| b * (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).zip(w).map(|((a, c), b)| b * (a - mx) * (c - my)).sum();
    let syy: f64 = y.iter().zip(w).map(|(c, b)| b * (c - my) * (c - my)).sum();
    if sxx <= 0.0 {
        return Err(Error::Insufficient("abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x
        .iter()
        .zip(y)
        .zip(w)
        .map(|((a, c), b)| {
            let r = c - intercept - slope * a;
            b * r * r
        })
        .sum();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    let dof = x.len().saturating_sub(2).max(1) as f64;
    let slope_stderr = (sse / dof / sxx).sqrt();
    Ok(LinearFit { slope, intercept, r2, slope_stderr })
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    weighted_linear_fit(x, y, &vec![1.0; x.len()])
}
