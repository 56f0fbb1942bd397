//! Small statistics helpers shared by the estimators.

use crate::error::{domain, Result};

/// Sample mean and standard error of the mean (zero for a single sample).
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Weighted least-squares line `y = slope·x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_err: f64,
    pub intercept_err: f64,
    /// Coefficient of determination (weighted).
    pub r2: f64,
}

/// Least squares with optional weights. Standard errors use the residual
/// variance when `weights` is `None`, and the weights as inverse variances
/// otherwise.
pub fn linear_fit(x: &[f64], y: &[f64], weights: Option<&[f64]>) -> Result<LineFit> {
    if x.len() != y.len() {
        return Err(domain("x and y differ in length"));
    }
    if let Some(w) = weights {
        if w.len() != x.len() {
            return Err(domain("weights differ in length"));
        }
        if w.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(domain("weights must be finite and positive"));
        }
    }
    let n = x.len();
    if n < 2 {
        return Err(domain("need at least two points to fit a line"));
    }
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);
    let sw: f64 = (0..n).map(w).sum();
    let xm = (0..n).map(|i| w(i) * x[i]).sum::<f64>() / sw;
    let ym = (0..n).map(|i| w(i) * y[i]).sum::<f64>() / sw;
    let sxx: f64 = (0..n).map(|i| w(i) * (x[i] - xm).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(domain("x values are all equal"));
    }
    let sxy: f64 = (0..n).map(|i| w(i) * (x[i] - xm) * (y[i] - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let ss_res: f64 = (0..n).map(|i| w(i) * (y[i] - slope * x[i] - intercept).powi(2)).sum();
    let ss_tot: f64 = (0..n).map(|i| w(i) * (y[i] - ym).powi(2)).sum();
    let scale = match weights {
        None if n > 2 => ss_res / (n - 2) as f64,
        None => 0.0,
        Some(_) => 1.0,
    };
    let slope_err = (scale / sxx).sqrt();
    let intercept_err = (scale * (1.0 / sw + xm * xm / sxx)).sqrt();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(LineFit { slope, intercept, slope_err, intercept_err, r2 })
}

/// Slope of `y[k]` against consecutive integers; allocation-free.
pub(crate) fn uniform_slope(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let xm = (n - 1.0) / 2.0;
    let ym = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (i, v) in y.iter().enumerate() {
        let dx = i as f64 - xm;
        sxy += dx * (v - ym);
        sxx += dx * dx;
    }
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|x| 2.0 * x - 1.0).collect();
        let f = linear_fit(&x, &y, None).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-14 && (f.intercept + 1.0).abs() < 1e-14);
        assert!(f.slope_err < 1e-12 && (f.r2 - 1.0).abs() < 1e-14);
        assert!((uniform_slope(&y) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn textbook_errors() {
        // y = 0, 1, 1, 3 on x = 0..3: slope 0.9, intercept -0.1, s² = 0.35
        let f = linear_fit(&[0.0, 1.0, 2.0, 3.0], &[0.0, 1.0, 1.0, 3.0], None).unwrap();
        assert!((f.slope - 0.9).abs() < 1e-14);
        assert!((f.intercept + 0.1).abs() < 1e-14);
        assert!((f.slope_err - (0.35f64 / 5.0).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn weights_pull_the_fit() {
        let x = [0.0, 1.0, 2.0];
        let y = [0.0, 1.0, 5.0];
        let light = linear_fit(&x, &y, Some(&[1.0, 1.0, 1e-6])).unwrap();
        assert!((light.slope - 1.0).abs() < 1e-4);
        assert!(linear_fit(&x, &y, Some(&[1.0, 0.0, 1.0])).is_err());
    }

    #[test]
    fn mean_stderr_basic() {
        let (m, s) = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_stderr(&[7.0]), (7.0, 0.0));
    }
}
