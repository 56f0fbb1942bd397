//! White-noise Schrödinger model `ψ″ = (−ω² + σẇ)ψ`.
//!
//! Prüfer coordinates are `ψ = r sin θ`, `ψ′/ω = r cos θ`, and `z = cot θ`.
//! The phase process has the stationary density
//! `p(z) = C e^{−Φ(z)} ∫_{−∞}^z e^{Φ(t)} dt` with `Φ(z) = λ(z + z³/3)`,
//! `λ = 2ω³/σ²`.
//!
//! Quadratures run in the angle `φ = arctan z`, which maps the real line to
//! `(−π/2, π/2)` without truncation. Writing `p(z) dz = C·Q(φ) dφ`,
//!
//! ```text
//! Q(φ) = ∫₀^∞ exp(−λv[1 − sin φ cos³φ · v + cos⁶φ · v²/3]) dv,
//! ```
//!
//! whose exponent is monotone in `v` and never overflows.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, require_positive, Result};
use crate::lyapunov::{GammaEstimate, Method};
use crate::mat2::Mat2;
use crate::quad::integrate;
use crate::rng::{self, Stream};
use crate::stats::mean_stderr;
use crate::waveguide::constant_potential_transfer;

/// Exponent at which integrands are cut off (`e^{−60} ≈ 1e−26`).
const CUTOFF: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdeParams {
    pub omega: f64,
    pub sigma: f64,
    /// Step `Δ`.
    pub delta: f64,
    /// Path length `L`.
    pub length: f64,
}

impl SdeParams {
    pub fn new(omega: f64, sigma: f64, delta: f64, length: f64) -> Result<Self> {
        let p = Self { omega, sigma, delta, length };
        p.validate()?;
        Ok(p)
    }

    /// A parameter pair with the given `λ`: `ω = 1` for `λ ≥ 1`, otherwise `σ = 1`.
    pub fn for_lambda(lambda: f64, delta: f64, length: f64) -> Result<Self> {
        require_positive("lambda", lambda)?;
        let (omega, sigma) = if lambda >= 1.0 { (1.0, (2.0 / lambda).sqrt()) } else { ((lambda / 2.0).cbrt(), 1.0) };
        Self::new(omega, sigma, delta, length)
    }

    pub fn lambda(&self) -> f64 {
        2.0 * self.omega.powi(3) / (self.sigma * self.sigma)
    }

    pub fn steps(&self) -> usize {
        (self.length / self.delta).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        require_positive("omega", self.omega)?;
        require_positive("sigma", self.sigma)?;
        require_positive("delta", self.delta)?;
        require_positive("length", self.length)?;
        if self.delta > 0.1 / self.omega {
            return Err(domain(format!(
                "step delta = {} exceeds 0.1/omega = {}; the oscillation is not resolved",
                self.delta,
                0.1 / self.omega
            )));
        }
        Ok(())
    }
}

/// Phase and log-amplitude of `(ψ, ψ′/ω)`. `theta` is kept continuous (unwrapped).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PruferState {
    pub theta: f64,
    pub log_r: f64,
}

impl PruferState {
    pub fn new(theta: f64) -> Self {
        Self { theta, log_r: 0.0 }
    }

    /// `z = cot θ`.
    pub fn z(&self) -> f64 {
        1.0 / self.theta.tan()
    }

    /// `θ` reduced to `[0, π)`.
    pub fn theta_mod_pi(&self) -> f64 {
        self.theta.rem_euclid(PI)
    }
}

/// How one `Δ`-cell is propagated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepScheme {
    /// `[[1, ωΔ], [−ωΔ + σξ√Δ/ω, 1]]`; its determinant is `1 + O(Δ)` per step.
    FirstOrder,
    /// Exact transfer matrix of the constant potential `−ω² + σξ/√Δ` on the cell.
    #[default]
    ExactCell,
}

/// Cell matrix acting on `(ψ, ψ′/ω)`.
#[inline]
pub fn cell_matrix(scheme: StepScheme, xi: f64, p: &SdeParams) -> Mat2 {
    let (w, d) = (p.omega, p.delta);
    match scheme {
        StepScheme::FirstOrder => Mat2::new(1.0, w * d, -w * d + p.sigma * xi * d.sqrt() / w, 1.0),
        StepScheme::ExactCell => {
            let m = constant_potential_transfer(-w * w + p.sigma * xi / d.sqrt(), d);
            Mat2::new(m.a, m.b * w, m.c / w, m.d)
        }
    }
}

/// One first-order step of the discrete recursion.
pub fn discrete_step(state: PruferState, xi: f64, params: &SdeParams) -> PruferState {
    step_with(state, xi, params, StepScheme::FirstOrder)
}

pub fn step_with(state: PruferState, xi: f64, params: &SdeParams, scheme: StepScheme) -> PruferState {
    let (s, c) = state.theta.sin_cos();
    let [x, y] = cell_matrix(scheme, xi, params).apply([s, c]);
    let raw = x.atan2(y);
    let turn = (raw - state.theta + PI).rem_euclid(2.0 * PI) - PI;
    PruferState { theta: state.theta + turn, log_r: state.log_r + 0.5 * (x * x + y * y).ln() }
}

/// Knobs for [`simulate_gamma_sde_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdeOptions {
    pub scheme: StepScheme,
    /// Each `ξ` is the normalized sum of this many base normals. Running
    /// `(Δ, 2)` and `(Δ/2, 1)` with one seed couples the two resolutions.
    pub noise_substeps: u32,
}

impl Default for SdeOptions {
    fn default() -> Self {
        Self { scheme: StepScheme::ExactCell, noise_substeps: 1 }
    }
}

fn path_log_r(p: &SdeParams, opts: &SdeOptions, rng: &mut Stream) -> f64 {
    let theta0: f64 = rng.random_range(0.0..PI);
    let (mut u, mut v) = theta0.sin_cos();
    let mut log_r = 0.0;
    let k = opts.noise_substeps.max(1);
    let norm = 1.0 / (k as f64).sqrt();
    for _ in 0..p.steps() {
        let mut xi = 0.0;
        for _ in 0..k {
            xi += rng.sample::<f64, _>(StandardNormal);
        }
        let [x, y] = cell_matrix(opts.scheme, xi * norm, p).apply([u, v]);
        let r = x.hypot(y);
        log_r += r.ln();
        u = x / r;
        v = y / r;
    }
    log_r
}

/// `γ = E ln r(L) / L` per unit length, exact-cell scheme.
pub fn simulate_gamma_sde(params: &SdeParams, realizations: usize, seed: u64) -> Result<GammaEstimate> {
    simulate_gamma_sde_with(params, &SdeOptions::default(), realizations, seed)
}

/// `n_periods` of the result holds the number of steps per path.
pub fn simulate_gamma_sde_with(
    params: &SdeParams,
    opts: &SdeOptions,
    realizations: usize,
    seed: u64,
) -> Result<GammaEstimate> {
    params.validate()?;
    if realizations == 0 {
        return Err(domain("need at least one realization"));
    }
    if params.length * params.omega < 10.0 {
        log::warn!("path length {} is short compared with 1/omega", params.length);
    }
    let samples: Vec<f64> = (0..realizations)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::stream(seed, r as u64);
            path_log_r(params, opts, &mut rng) / params.length
        })
        .collect();
    let (gamma, std_err) = mean_stderr(&samples);
    Ok(GammaEstimate {
        gamma,
        std_err,
        n_periods: params.steps(),
        realizations,
        method: Method::Sde,
        seed: Some(seed),
    })
}

/// Histogram of `z = cot θ` along one long path (after `burn_in` steps).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZHistogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    /// All recorded samples, including those outside `[lo, hi)`.
    pub total: u64,
}

impl ZHistogram {
    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.counts.len() as f64
    }

    pub fn centers(&self) -> Vec<f64> {
        let w = self.bin_width();
        (0..self.counts.len()).map(|i| self.lo + (i as f64 + 0.5) * w).collect()
    }

    /// Empirical density per bin.
    pub fn density(&self) -> Vec<f64> {
        let norm = 1.0 / (self.total as f64 * self.bin_width());
        self.counts.iter().map(|&c| c as f64 * norm).collect()
    }
}

pub fn z_histogram(
    params: &SdeParams,
    scheme: StepScheme,
    steps: usize,
    burn_in: usize,
    range: (f64, f64),
    bins: usize,
    seed: u64,
) -> Result<ZHistogram> {
    params.validate()?;
    if bins == 0 || !(range.1 > range.0) {
        return Err(domain("histogram needs bins > 0 and a nonempty range"));
    }
    let mut rng = rng::stream(seed, 0);
    let (mut u, mut v) = rng.random_range(0.0..PI).sin_cos();
    let mut counts = vec![0u64; bins];
    let scale = bins as f64 / (range.1 - range.0);
    for i in 0..burn_in + steps {
        let xi: f64 = rng.sample(StandardNormal);
        let [x, y] = cell_matrix(scheme, xi, params).apply([u, v]);
        let r = x.hypot(y);
        u = x / r;
        v = y / r;
        if i >= burn_in {
            let pos = (v / u - range.0) * scale;
            if pos >= 0.0 && pos < bins as f64 {
                counts[pos as usize] += 1;
            }
        }
    }
    Ok(ZHistogram { lo: range.0, hi: range.1, counts, total: steps as u64 })
}

/// Smallest `v ≥ 0` with `g(v) ≥ target` for increasing `g`, by bisection on `[0, hi]`.
fn crossing(g: impl Fn(f64) -> f64, target: f64, hi: f64) -> f64 {
    let (mut a, mut b) = (0.0, hi);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if g(m) >= target {
            b = m;
        } else {
            a = m;
        }
        if b - a <= 1e-13 * b {
            break;
        }
    }
    b
}

/// `Q(φ)` and its quadrature error.
fn q_phi(lambda: f64, phi: f64) -> (f64, f64) {
    let (s, c) = phi.sin_cos();
    let c3 = c * c * c;
    let (b1, b2) = (s * c3, c3 * c3 / 3.0);
    let g = |v: f64| lambda * v * (1.0 - b1 * v + b2 * v * v);
    // The bracket is at least 1/4, so g(240/λ) ≥ 60.
    let upper = crossing(g, CUTOFF, 4.0 * CUTOFF / lambda);
    let r = integrate(|v| (-g(v)).exp(), 0.0, upper, 0.0, 1e-13, 16, 400);
    (r.value, r.abs_err)
}

/// Stationary density of `z = cot θ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationaryDensity {
    pub lambda: f64,
    /// Normalizer `C`.
    pub c: f64,
    /// Quadrature error estimate of `C`.
    pub c_err: f64,
}

pub fn stationary_density(lambda: f64) -> Result<StationaryDensity> {
    require_positive("lambda", lambda)?;
    // 1/C = √(2π/λ) ∫₀^∞ e^{−2λ(x + x³/3)} x^{−1/2} dx, with x = s².
    let g = |s: f64| {
        let s2 = s * s;
        2.0 * lambda * (s2 + s2 * s2 * s2 / 3.0)
    };
    let upper = crossing(g, CUTOFF, (CUTOFF / lambda).sqrt() + 1.0);
    let r = integrate(|s| (-g(s)).exp(), 0.0, upper, 0.0, 1e-14, 16, 400);
    let inv = (2.0 * PI / lambda).sqrt() * 2.0 * r.value;
    let c = 1.0 / inv;
    Ok(StationaryDensity { lambda, c, c_err: c * r.abs_err / r.value.max(f64::MIN_POSITIVE) })
}

impl StationaryDensity {
    /// Density of `z`.
    pub fn pdf(&self, z: f64) -> f64 {
        let phi = z.atan();
        self.c * q_phi(self.lambda, phi).0 / (1.0 + z * z)
    }

    /// Density of `φ = arctan z` on `(−π/2, π/2)`.
    pub fn pdf_phi(&self, phi: f64) -> f64 {
        self.c * q_phi(self.lambda, phi).0
    }

    /// Density of `θ` on `[0, π)` (`φ = π/2 − θ`).
    pub fn pdf_theta(&self, theta: f64) -> f64 {
        self.pdf_phi(FRAC_PI_2 - theta.rem_euclid(PI))
    }

    /// `∫ p dz`, evaluated in `φ`.
    pub fn total_mass(&self) -> (f64, f64) {
        let r = integrate(|phi| self.pdf_phi(phi), -FRAC_PI_2, FRAC_PI_2, 0.0, 1e-12, 64, 4000);
        (r.value, r.abs_err)
    }

    /// `(z, p(z))` on a uniform grid.
    pub fn table(&self, lo: f64, hi: f64, points: usize) -> Vec<(f64, f64)> {
        let n = points.max(2);
        (0..n)
            .map(|i| {
                let z = lo + (hi - lo) * i as f64 / (n - 1) as f64;
                (z, self.pdf(z))
            })
            .collect()
    }
}

/// `γ = (σ²/2ω²) ∫ p(z) (1 − z²)/(1 + z²)² dz` per unit length.
pub fn gamma_quadrature(omega: f64, sigma: f64) -> Result<GammaEstimate> {
    require_positive("omega", omega)?;
    require_positive("sigma", sigma)?;
    let lambda = 2.0 * omega.powi(3) / (sigma * sigma);
    let density = stationary_density(lambda)?;
    // p(z) dz = C·Q(φ) dφ and (1 − z²)/(1 + z²)² = cos²φ·cos 2φ.
    let mut inner_rel = 0.0f64;
    let r = integrate(
        |phi| {
            let (q, e) = q_phi(lambda, phi);
            let c = phi.cos();
            inner_rel = inner_rel.max((e / q).abs());
            q * c * c * (2.0 * phi).cos()
        },
        -FRAC_PI_2,
        FRAC_PI_2,
        0.0,
        1e-11,
        64,
        4000,
    );
    let pre = sigma * sigma / (2.0 * omega * omega);
    let gamma = pre * density.c * r.value;
    // C·∫Q dφ = 1, so inner relative errors move γ by at most pre·inner_rel.
    let err = pre * (density.c * r.abs_err + density.c_err * r.value.abs() + inner_rel);
    Ok(GammaEstimate { gamma, std_err: err.abs(), n_periods: 0, realizations: 0, method: Method::Quadrature, seed: None })
}

/// `γ` as a function of `λ` alone, divided by `σ²/(2ω²)`.
pub fn reduced_gamma(lambda: f64) -> Result<f64> {
    // ω = 1, σ² = 2/λ gives pre-factor 1/λ.
    let g = gamma_quadrature(1.0, (2.0 / lambda).sqrt())?;
    Ok(g.gamma * lambda)
}

/// Residual of `p` against the stationary Fokker–Planck equation.
///
/// Two checks are combined: the second-order form `p″/λ + ((1+z²)p)′ = 0`,
/// scaled by `max|((1+z²)p)′|`, and the once-integrated form
/// `p′/λ + (1+z²)p = C/λ` with the normalizer of the exact solution, scaled by
/// `C/λ`. The second catches non-solutions; the first also rejects rescaled ones.
pub fn fokker_planck_residual(p: impl Fn(f64) -> f64, lambda: f64, c: f64, lo: f64, hi: f64, points: usize) -> f64 {
    let h = 1e-2;
    let n = points.max(3);
    let mut flux_prime = Vec::with_capacity(n);
    let mut second = Vec::with_capacity(n);
    let mut first = 0.0f64;
    for i in 0..n {
        let z = lo + (hi - lo) * i as f64 / (n - 1) as f64;
        let f: Vec<f64> = (-2..=2).map(|k| p(z + k as f64 * h)).collect();
        let d1 = (f[0] - 8.0 * f[1] + 8.0 * f[3] - f[4]) / (12.0 * h);
        let d2 = (-f[0] + 16.0 * f[1] - 30.0 * f[2] + 16.0 * f[3] - f[4]) / (12.0 * h * h);
        let fp = 2.0 * z * f[2] + (1.0 + z * z) * d1;
        flux_prime.push(fp);
        second.push(d2 / lambda + fp);
        let once = d1 / lambda + (1.0 + z * z) * f[2] - c / lambda;
        first = first.max(once.abs() / (c / lambda));
    }
    let scale = flux_prime.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let second = second.iter().fold(0.0f64, |m, x| m.max(x.abs())) / scale;
    first.max(second)
}

/// [`fokker_planck_residual`] of [`stationary_density`] on `z ∈ [−5, 5]`.
pub fn density_vs_fokker_planck(lambda: f64) -> Result<f64> {
    let d = stationary_density(lambda)?;
    Ok(fokker_planck_residual(|z| d.pdf(z), lambda, d.c, -5.0, 5.0, 201))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_step_rotates() {
        let p = SdeParams::new(1.0, 0.5, 1e-3, 1.0).unwrap();
        let s0 = PruferState::new(0.4);
        let s1 = discrete_step(s0, 0.0, &p);
        assert!((s1.theta - s0.theta - p.omega * p.delta).abs() < 1e-6);
        assert!(s1.log_r.abs() < 1e-6);
    }

    #[test]
    fn unit_circle_over_unit_length() {
        let p = SdeParams::new(1.0, 0.5, 1e-3, 1.0).unwrap();
        let mut s = PruferState::new(1.0);
        for _ in 0..p.steps() {
            s = discrete_step(s, 0.0, &p);
        }
        // First-order: ln r grows like ω²Δ·L/2.
        assert!(s.log_r.abs() < 2.0 * p.omega * p.omega * p.delta);
        assert!((s.theta - 1.0 - 1.0).abs() < 1e-3);
    }

    #[test]
    fn first_order_cell_error_is_three_halves() {
        let err = |d: f64| {
            let p = SdeParams::new(1.3, 0.7, d, 1.0).unwrap();
            cell_matrix(StepScheme::FirstOrder, 1.0, &p).max_abs_diff(&cell_matrix(StepScheme::ExactCell, 1.0, &p))
        };
        let slope = (err(1e-3).ln() - err(1e-5).ln()) / (1e-3f64.ln() - 1e-5f64.ln());
        assert!(slope > 1.4 && slope < 1.7, "slope {slope}");
    }

    #[test]
    fn rejects_coarse_steps() {
        assert!(SdeParams::new(2.0, 0.5, 0.06, 10.0).is_err());
        assert!(SdeParams::new(2.0, 0.5, 0.05, 10.0).is_ok());
    }

    #[test]
    fn density_normalized() {
        for lambda in [0.01, 1.0, 100.0] {
            let d = stationary_density(lambda).unwrap();
            let (mass, _) = d.total_mass();
            assert!((mass - 1.0).abs() < 1e-6, "lambda {lambda}: {mass}");
        }
    }

    #[test]
    fn density_positive_and_decaying() {
        let d = stationary_density(1.0).unwrap();
        for z in [-50.0, -3.0, 0.0, 0.7, 3.0, 50.0] {
            assert!(d.pdf(z) > 0.0);
        }
        assert!(d.pdf(1e4) < 1e-7 && d.pdf(-1e4) < 1e-7);
    }

    #[test]
    fn large_lambda_limit() {
        // θ becomes uniform: γ → σ²/(8ω²).
        let g = gamma_quadrature(1.0, 1e-3).unwrap();
        assert!((g.gamma / (1e-6 / 8.0) - 1.0).abs() < 1e-3, "{g:?}");
    }

    #[test]
    fn fokker_planck_residuals() {
        assert!(density_vs_fokker_planck(1.0).unwrap() <= 1e-5);
        assert!(density_vs_fokker_planck(100.0).unwrap() <= 1e-4);
        let d = stationary_density(1.0).unwrap();
        let doubled = fokker_planck_residual(|z| 2.0 * d.pdf(z), 1.0, d.c, -5.0, 5.0, 201);
        assert!(doubled > 0.5);
    }

    #[test]
    fn coupled_refinement_is_paired() {
        let p = SdeParams::new(1.0, 1.0, 0.01, 200.0).unwrap();
        let half = SdeParams { delta: 0.005, ..p };
        let coarse = simulate_gamma_sde_with(&p, &SdeOptions { noise_substeps: 2, ..Default::default() }, 16, 9).unwrap();
        let fine = simulate_gamma_sde(&half, 16, 9).unwrap();
        assert!((coarse.gamma - fine.gamma).abs() < coarse.std_err);
    }
}
