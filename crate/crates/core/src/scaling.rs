//! Power-law fits of `γ(σ)` and the two-point disorder-scaling experiment.

use std::f64::consts::LN_10;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::disorder::{Distribution, DisorderSpec};
use crate::error::{domain, Result};
use crate::lyapunov::{gamma_from_transmission, Window};
use crate::rng::derive_seed;
use crate::stats::linear_fit;
use crate::waveguide::LayerStack;

/// One `(σ, γ)` sample; `err` is the standard error of `γ` if known.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitPoint {
    pub sigma: f64,
    pub gamma: f64,
    pub err: Option<f64>,
}

/// `lg γ = slope·lg σ + intercept`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    pub slope_err: f64,
    pub intercept_err: f64,
    pub r_squared: f64,
    /// Root-mean-square residual in `lg γ`.
    pub residual_std: f64,
    pub n_points: usize,
    pub weights: Vec<f64>,
}

/// Least squares of `lg γ` on `lg σ`.
///
/// With errors supplied, weights are `1/err_lg²` with `err_lg = err/(γ ln 10)`,
/// the first-order error of `lg γ`. Without them the fit is unweighted.
pub fn loglog_fit(points: &[FitPoint]) -> Result<FitResult> {
    if points.len() < 3 {
        return Err(domain(format!("need at least 3 points, got {}", points.len())));
    }
    if let Some(p) = points.iter().find(|p| !(p.sigma > 0.0 && p.gamma > 0.0)) {
        return Err(domain(format!("log-log fit needs positive sigma and gamma, got ({}, {})", p.sigma, p.gamma)));
    }
    let x: Vec<f64> = points.iter().map(|p| p.sigma.log10()).collect();
    let y: Vec<f64> = points.iter().map(|p| p.gamma.log10()).collect();
    let weights: Vec<f64> = if points.iter().all(|p| p.err.is_some()) {
        points
            .iter()
            .map(|p| {
                let e = p.err.unwrap() / (p.gamma * LN_10);
                if e > 0.0 {
                    Ok(1.0 / (e * e))
                } else {
                    Err(domain("fit errors must be positive"))
                }
            })
            .collect::<Result<_>>()?
    } else {
        vec![1.0; points.len()]
    };
    let fit = linear_fit(&x, &y, Some(&weights))?;
    let unweighted = weights.iter().all(|&w| w == 1.0);
    let (slope_err, intercept_err) = if unweighted {
        let f = linear_fit(&x, &y, None)?;
        (f.slope_err, f.intercept_err)
    } else {
        (fit.slope_err, fit.intercept_err)
    };
    let n = points.len() as f64;
    let rss: f64 = x.iter().zip(&y).map(|(x, y)| (y - fit.slope * x - fit.intercept).powi(2)).sum();
    Ok(FitResult {
        slope: fit.slope,
        intercept: fit.intercept,
        slope_err,
        intercept_err,
        r_squared: fit.r2.clamp(0.0, 1.0),
        residual_std: (rss / n).sqrt(),
        n_points: points.len(),
        weights,
    })
}

/// Slopes of the fits with each point left out in turn.
pub fn leave_one_out_slopes(points: &[FitPoint]) -> Result<Vec<f64>> {
    (0..points.len())
        .map(|i| {
            let rest: Vec<FitPoint> =
                points.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, p)| *p).collect();
            loglog_fit(&rest).map(|f| f.slope)
        })
        .collect()
}

/// Log-spaced grid `10^lo … 10^hi` with `per_decade` points per decade.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaGrid {
    pub lg_lo: f64,
    pub lg_hi: f64,
    pub per_decade: usize,
}

impl SigmaGrid {
    pub fn values(&self) -> Vec<f64> {
        let steps = ((self.lg_hi - self.lg_lo) * self.per_decade as f64).round() as usize;
        (0..=steps)
            .map(|i| 10f64.powf(self.lg_lo + (self.lg_hi - self.lg_lo) * i as f64 / steps.max(1) as f64))
            .collect()
    }
}

/// Reference line and tolerances for one experiment point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub slope: f64,
    pub slope_tol: f64,
    pub intercept: f64,
    pub intercept_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointConfig {
    pub label: String,
    pub omega: f64,
    pub sigma: SigmaGrid,
    pub target: Target,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Figure4Config {
    pub stack: LayerStack,
    pub points: Vec<PointConfig>,
    pub n_periods: usize,
    pub window: Window,
    pub realizations: usize,
    pub distribution: Distribution,
    /// Weight the fits by the realization standard errors.
    pub weighted: bool,
    pub seed: u64,
}

impl Default for Figure4Config {
    fn default() -> Self {
        Self {
            stack: LayerStack::from_pairs(&[(1.0, 1.0), (2.5, 0.1)]).expect("valid stack"),
            points: vec![
                PointConfig {
                    label: "A".into(),
                    omega: 5.6288,
                    sigma: SigmaGrid { lg_lo: -2.5, lg_hi: -0.5, per_decade: 12 },
                    target: Target { slope: 2.0 / 3.0, slope_tol: 0.10, intercept: 0.15, intercept_tol: 0.3 },
                },
                PointConfig {
                    label: "B".into(),
                    omega: 9.0,
                    sigma: SigmaGrid { lg_lo: -3.0, lg_hi: -1.0, per_decade: 12 },
                    target: Target { slope: 2.0, slope_tol: 0.15, intercept: 1.34, intercept_tol: 0.3 },
                },
            ],
            n_periods: 1000,
            window: Window { lo: 500, hi: 1000 },
            realizations: 1000,
            distribution: Distribution::Uniform,
            weighted: false,
            seed: 20_240_601,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Figure4Row {
    pub point: usize,
    pub omega: f64,
    pub sigma: f64,
    pub gamma: f64,
    pub std_err: f64,
}

/// One pass/fail comparison against a target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub target: f64,
    pub tol: f64,
    pub pass: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, value: f64, target: f64, tol: f64) -> Self {
        Self { name: name.into(), value, target, tol, pass: (value - target).abs() <= tol }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}: {} (target {} ± {})",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            short(self.value),
            short(self.target),
            short(self.tol)
        )
    }
}

/// Four significant digits, switching to exponent form outside `[1e-3, 1e5)`.
pub fn short(x: f64) -> String {
    if x == 0.0 || (1e-3..1e5).contains(&x.abs()) {
        format!("{x:.4}")
    } else {
        format!("{x:.3e}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Figure4Result {
    pub rows: Vec<Figure4Row>,
    pub fits: Vec<FitResult>,
    pub checks: Vec<Check>,
}

impl Figure4Result {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn to_csv(&self, config: &Figure4Config) -> String {
        let mut s = String::from("point,omega,sigma,gamma,std_err\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                config.points[r.point].label, r.omega, r.sigma, r.gamma, r.std_err
            ));
        }
        s
    }
}

/// Transmission-window `γ` on each σ grid, then one log-log fit per point.
pub fn figure4_experiment(config: &Figure4Config) -> Result<Figure4Result> {
    if config.points.is_empty() {
        return Err(domain("no experiment points configured"));
    }
    let cells: Vec<(usize, f64, f64)> = config
        .points
        .iter()
        .enumerate()
        .flat_map(|(i, p)| p.sigma.values().into_iter().map(move |s| (i, p.omega, s)))
        .collect();
    let rows: Vec<Figure4Row> = cells
        .par_iter()
        .enumerate()
        .map(|(k, &(point, omega, sigma))| {
            let spec = DisorderSpec::thickness(config.stack.clone(), sigma)?.with_distribution(config.distribution);
            let g = gamma_from_transmission(
                &spec,
                omega,
                config.n_periods,
                config.window,
                config.realizations,
                derive_seed(config.seed, k as u64),
            )?;
            Ok(Figure4Row { point, omega, sigma, gamma: g.gamma, std_err: g.std_err })
        })
        .collect::<Result<_>>()?;
    let mut fits = Vec::new();
    let mut checks = Vec::new();
    for (i, p) in config.points.iter().enumerate() {
        let pts: Vec<FitPoint> = rows
            .iter()
            .filter(|r| r.point == i)
            .map(|r| FitPoint { sigma: r.sigma, gamma: r.gamma, err: config.weighted.then_some(r.std_err) })
            .collect();
        let fit = loglog_fit(&pts)?;
        checks.push(Check::new(format!("point {} slope", p.label), fit.slope, p.target.slope, p.target.slope_tol));
        checks.push(Check::new(
            format!("point {} intercept", p.label),
            fit.intercept,
            p.target.intercept,
            p.target.intercept_tol,
        ));
        fits.push(fit);
    }
    Ok(Figure4Result { rows, fits, checks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn pts(f: impl Fn(f64) -> f64) -> Vec<FitPoint> {
        (0..10)
            .map(|i| {
                let s = 10f64.powf(-3.0 + 0.2 * i as f64);
                FitPoint { sigma: s, gamma: f(s), err: None }
            })
            .collect()
    }

    #[test]
    fn exact_square_law() {
        let f = loglog_fit(&pts(|s| s * s)).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12 && f.intercept.abs() < 1e-11);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exact_edge_law() {
        let f = loglog_fit(&pts(|s| 10f64.powf(0.15) * s.powf(2.0 / 3.0))).unwrap();
        assert!((f.slope - 2.0 / 3.0).abs() < 1e-12);
        assert!((f.intercept - 0.15).abs() < 1e-12);
    }

    #[test]
    fn scale_equivariance() {
        let base = pts(|s| 3.0 * s.powf(1.3) * (1.0 + 0.1 * (s * 40.0).sin()));
        let scaled: Vec<FitPoint> = base.iter().map(|p| FitPoint { gamma: 10.0 * p.gamma, ..*p }).collect();
        let (a, b) = (loglog_fit(&base).unwrap(), loglog_fit(&scaled).unwrap());
        assert!((b.intercept - a.intercept - 1.0).abs() < 1e-12);
        assert!((b.slope - a.slope).abs() < 1e-12);
    }

    #[test]
    fn noisy_slope_recovered() {
        let mut rng = crate::rng::stream(5, 0);
        let mut hits = 0;
        for _ in 0..200 {
            let noise: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut p = pts(|s| s.powf(1.5));
            for (q, e) in p.iter_mut().zip(&noise) {
                q.gamma *= 10f64.powf(0.05 * e);
            }
            let f = loglog_fit(&p).unwrap();
            if (f.slope - 1.5).abs() < 2.0 * f.slope_err {
                hits += 1;
            }
        }
        // ~95% coverage expected.
        assert!(hits >= 180, "{hits}");
    }

    #[test]
    fn rejects_bad_input() {
        let mut p = pts(|s| s);
        assert!(loglog_fit(&p[..2]).is_err());
        p[3].gamma = 0.0;
        assert!(loglog_fit(&p).is_err());
    }

    #[test]
    fn grid_is_twelve_per_decade() {
        let g = SigmaGrid { lg_lo: -3.0, lg_hi: -1.0, per_decade: 12 }.values();
        assert_eq!(g.len(), 25);
        assert!((g[0] - 1e-3).abs() < 1e-18 && (g[24] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn default_config_roundtrips() {
        let c = Figure4Config::default();
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<Figure4Config>(&s).unwrap(), c);
    }
}
