//! Lyapunov exponents and transmission of long random products.
//!
//! All exponents here are per period. Products are kept as `e^s·P` with `P`
//! renormalized whenever `‖P‖_HS > 2⁵⁰`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::disorder::{DisorderSpec, GaussianEnsemble, PeriodSampler};
use crate::error::{domain, require_positive, Result};
use crate::mat2::Mat2;
use crate::rng::{self, Stream};
use crate::stats::{mean_stderr, uniform_slope};

const RENORM: f64 = 1_125_899_906_842_624.0; // 2^50

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    McProduct,
    Transmission,
    Sde,
    Quadrature,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::McProduct => "mc_product",
            Method::Transmission => "transmission",
            Method::Sde => "sde",
            Method::Quadrature => "quadrature",
        }
    }
}

/// A Lyapunov-exponent estimate with its realization scatter.
///
/// `std_err` covers realization scatter only, not finite-`N` bias. The
/// estimate itself is not clipped at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaEstimate {
    pub gamma: f64,
    pub std_err: f64,
    pub n_periods: usize,
    pub realizations: usize,
    pub method: Method,
    pub seed: Option<u64>,
}

impl GammaEstimate {
    fn from_samples(samples: &[f64], n_periods: usize, method: Method, seed: u64) -> Self {
        let (gamma, std_err) = mean_stderr(samples);
        Self { gamma, std_err, n_periods, realizations: samples.len(), method, seed: Some(seed) }
    }

    /// `|γ₁ − γ₂| / √(s₁² + s₂²)`.
    pub fn z_score(&self, other: &GammaEstimate) -> f64 {
        (self.gamma - other.gamma).abs() / self.std_err.hypot(other.std_err)
    }
}

/// Transmission through `N` periods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransmissionResult {
    /// `|t_N|²`.
    pub t2: f64,
    /// `ln |t_N|²`, finite even when `t2` underflows.
    pub log_t2: f64,
    pub n_periods: usize,
    /// `−ln|t_N| / N`.
    pub decay: f64,
}

impl TransmissionResult {
    /// Reflectance from flux conservation, `1 − |t_N|²`.
    pub fn r2(&self) -> f64 {
        -self.log_t2.exp_m1()
    }
}

/// The conjugation `T = diag(ν^{−1/2}, ν^{1/2})` that turns in-band free
/// propagation into a rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PruferScaling {
    pub nu: f64,
}

impl PruferScaling {
    pub fn new(nu: f64) -> Result<Self> {
        if !(nu.is_finite() && nu != 0.0) {
            return Err(domain(format!("Prüfer scaling needs nonzero finite ν, got {nu}")));
        }
        Ok(Self { nu })
    }

    pub fn matrix(&self) -> Mat2 {
        let s = self.nu.abs().sqrt();
        Mat2::diag(1.0 / s, s)
    }

    /// `T⁻¹·m·T`.
    pub fn conjugate(&self, m: &Mat2) -> Mat2 {
        let k = self.nu.abs();
        Mat2::new(m.a, m.b * k, m.c / k, m.d)
    }
}

/// Running product `e^{log_scale}·p` of left-multiplied factors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Product {
    pub log_scale: f64,
    pub p: Mat2,
}

impl Default for Product {
    fn default() -> Self {
        Self { log_scale: 0.0, p: Mat2::IDENTITY }
    }
}

impl Product {
    #[inline]
    pub fn push(&mut self, m: &Mat2) {
        self.p = *m * self.p;
        let norm = self.p.hs_norm();
        if norm > RENORM {
            self.p = self.p.scale(1.0 / norm);
            self.log_scale += norm.ln();
        }
    }

    pub fn log_norm(&self) -> f64 {
        self.log_scale + self.p.hs_norm().ln()
    }

    /// `ln|t|²` for the Prüfer-conjugated product, `ln 4 − ln(‖T⁻¹PT‖² + 2)`.
    pub fn log_t2(&self, scaling: &PruferScaling) -> f64 {
        let l = 2.0 * self.log_scale + scaling.conjugate(&self.p).hs_norm_sq().ln();
        4f64.ln() - logaddexp(l, 2f64.ln())
    }
}

fn logaddexp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `ln‖M_N⋯M₁‖_HS` over the first `n` matrices of `source`.
pub fn product_log_norm<I>(source: I, n: usize) -> Result<f64>
where
    I: IntoIterator<Item = Mat2>,
{
    if n == 0 {
        return Err(domain("product needs N >= 1"));
    }
    let mut prod = Product::default();
    let mut taken = 0;
    for m in source.into_iter().take(n) {
        prod.push(&m);
        taken += 1;
    }
    if taken == 0 {
        return Err(domain("empty matrix source"));
    }
    if taken < n {
        return Err(domain(format!("matrix source ended after {taken} of {n} factors")));
    }
    Ok(prod.log_norm())
}

/// Something that draws one random period matrix from a stream.
pub trait MatrixSource: Sync {
    fn draw(&self, rng: &mut Stream) -> Result<Mat2>;
}

impl MatrixSource for PeriodSampler {
    #[inline]
    fn draw(&self, rng: &mut Stream) -> Result<Mat2> {
        self.sample_fast(rng)
    }
}

impl MatrixSource for GaussianEnsemble {
    fn draw(&self, rng: &mut Stream) -> Result<Mat2> {
        Ok(self.sample(rng))
    }
}

/// A fixed matrix repeated; useful for deterministic baselines.
#[derive(Debug, Clone, Copy)]
pub struct Constant(pub Mat2);

impl MatrixSource for Constant {
    fn draw(&self, _: &mut Stream) -> Result<Mat2> {
        Ok(self.0)
    }
}

fn check_counts(n: usize, realizations: usize) -> Result<()> {
    if n < 100 {
        return Err(domain(format!("N must be >= 100, got {n}")));
    }
    if realizations == 0 {
        return Err(domain("need at least one realization"));
    }
    Ok(())
}

/// Per-realization `ln‖M̃_N⋯M̃₁‖/N` for realizations `0..realizations`.
pub fn realization_exponents<S: MatrixSource>(source: &S, n: usize, realizations: usize, seed: u64) -> Result<Vec<f64>> {
    (0..realizations)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::stream(seed, r as u64);
            let mut prod = Product::default();
            for _ in 0..n {
                prod.push(&source.draw(&mut rng)?);
            }
            Ok(prod.log_norm() / n as f64)
        })
        .collect()
}

/// Monte Carlo product estimate from any matrix source.
pub fn lyapunov_mc_source<S: MatrixSource>(source: &S, n: usize, realizations: usize, seed: u64) -> Result<GammaEstimate> {
    check_counts(n, realizations)?;
    let samples = realization_exponents(source, n, realizations, seed)?;
    Ok(GammaEstimate::from_samples(&samples, n, Method::McProduct, seed))
}

/// `γ = lim ln‖M̃_N⋯M̃₁‖/N`, averaged over realizations.
pub fn lyapunov_mc(spec: &DisorderSpec, nu: f64, n: usize, realizations: usize, seed: u64) -> Result<GammaEstimate> {
    let sampler = PeriodSampler::new(spec, nu)?;
    lyapunov_mc_source(&sampler, n, realizations, seed)
}

/// `−ln|t_k|` for `k = 1..=n` along one realization.
pub fn transmission_trajectory<S: MatrixSource>(source: &S, nu: f64, n: usize, rng: &mut Stream) -> Result<Vec<f64>> {
    let scaling = PruferScaling::new(nu)?;
    let mut prod = Product::default();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        prod.push(&source.draw(rng)?);
        out.push(-0.5 * prod.log_t2(&scaling));
    }
    Ok(out)
}

/// Transmission of one realization of `N` perturbed periods (stream 0 of `seed`).
pub fn transmission(spec: &DisorderSpec, nu: f64, n: usize, seed: u64) -> Result<TransmissionResult> {
    let sampler = PeriodSampler::new(spec, nu)?;
    transmission_source(&sampler, nu, n, seed)
}

pub fn transmission_source<S: MatrixSource>(source: &S, nu: f64, n: usize, seed: u64) -> Result<TransmissionResult> {
    if n == 0 {
        return Err(domain("N must be >= 1"));
    }
    let scaling = PruferScaling::new(nu)?;
    let mut rng = rng::stream(seed, 0);
    let mut prod = Product::default();
    for _ in 0..n {
        prod.push(&source.draw(&mut rng)?);
    }
    let log_t2 = prod.log_t2(&scaling).min(0.0);
    Ok(TransmissionResult { t2: log_t2.exp(), log_t2, n_periods: n, decay: -0.5 * log_t2 / n as f64 })
}

/// Inclusive window `[lo, hi]` of period counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub lo: usize,
    pub hi: usize,
}

impl Default for Window {
    fn default() -> Self {
        Self { lo: 500, hi: 1000 }
    }
}

impl Window {
    fn check(&self, n: usize) -> Result<()> {
        if self.lo < 1 || self.hi > n || self.lo > self.hi {
            return Err(domain(format!("window [{}, {}] not within [1, {n}]", self.lo, self.hi)));
        }
        if self.hi - self.lo + 1 < 10 {
            return Err(domain(format!("window [{}, {}] has fewer than 10 points", self.lo, self.hi)));
        }
        Ok(())
    }
}

/// Mean over realizations of the least-squares slope of `−ln|t_k|` on the window.
pub fn gamma_from_transmission_source<S: MatrixSource>(
    source: &S,
    nu: f64,
    n: usize,
    window: Window,
    realizations: usize,
    seed: u64,
) -> Result<GammaEstimate> {
    window.check(n)?;
    if realizations == 0 {
        return Err(domain("need at least one realization"));
    }
    let slopes: Vec<f64> = (0..realizations)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::stream(seed, r as u64);
            let traj = transmission_trajectory(source, nu, window.hi, &mut rng)?;
            Ok(uniform_slope(&traj[window.lo - 1..window.hi]))
        })
        .collect::<Result<_>>()?;
    Ok(GammaEstimate::from_samples(&slopes, n, Method::Transmission, seed))
}

pub fn gamma_from_transmission(
    spec: &DisorderSpec,
    nu: f64,
    n: usize,
    window: Window,
    realizations: usize,
    seed: u64,
) -> Result<GammaEstimate> {
    let sampler = PeriodSampler::new(spec, nu)?;
    gamma_from_transmission_source(&sampler, nu, n, window, realizations, seed)
}

/// Paired estimates from `{M̃_k}` and `{D⁻¹M̃_kD}` on the same draws.
#[derive(Debug, Clone, PartialEq)]
pub struct ConjugationCheck {
    pub plain: GammaEstimate,
    pub conjugated: GammaEstimate,
    /// Largest per-realization difference.
    pub max_paired_diff: f64,
    /// Deterministic bound `ln(‖D‖·‖D⁻¹‖)/N` on every paired difference.
    pub bound: f64,
}

impl ConjugationCheck {
    pub fn within_tolerance(&self) -> bool {
        let diff = (self.plain.gamma - self.conjugated.gamma).abs();
        diff <= 3.0 * self.plain.std_err.hypot(self.conjugated.std_err) + self.bound
    }
}

pub fn conjugation_invariance_source<S: MatrixSource>(
    source: &S,
    d: &Mat2,
    n: usize,
    realizations: usize,
    seed: u64,
) -> Result<ConjugationCheck> {
    check_counts(n, realizations)?;
    let d_inv = d.inverse()?;
    let pairs: Vec<(f64, f64)> = (0..realizations)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::stream(seed, r as u64);
            let mut plain = Product::default();
            let mut conj = Product::default();
            for _ in 0..n {
                let m = source.draw(&mut rng)?;
                plain.push(&m);
                conj.push(&(d_inv * m * *d));
            }
            Ok((plain.log_norm() / n as f64, conj.log_norm() / n as f64))
        })
        .collect::<Result<_>>()?;
    let (a, b): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    let max_paired_diff = pairs.iter().map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    Ok(ConjugationCheck {
        plain: GammaEstimate::from_samples(&a, n, Method::McProduct, seed),
        conjugated: GammaEstimate::from_samples(&b, n, Method::McProduct, seed),
        max_paired_diff,
        bound: (d.hs_norm() * d_inv.hs_norm()).ln() / n as f64,
    })
}

/// Conjugation-invariance check; see [`ConjugationCheck`].
pub fn conjugation_invariance_check(
    spec: &DisorderSpec,
    nu: f64,
    d: &Mat2,
    n: usize,
    realizations: usize,
    seed: u64,
) -> Result<ConjugationCheck> {
    require_positive("frequency", nu)?;
    let sampler = PeriodSampler::new(spec, nu)?;
    conjugation_invariance_source(&sampler, d, n, realizations, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::{bloch_phase, BlochPhase};
    use crate::waveguide::{period_transfer, LayerStack};

    fn fig3() -> LayerStack {
        LayerStack::from_pairs(&[(1.0, 1.0), (2.5, 0.1)]).unwrap()
    }

    #[test]
    fn identity_product() {
        let v = product_log_norm(std::iter::repeat(Mat2::IDENTITY), 50).unwrap();
        assert!((v - 2f64.sqrt().ln()).abs() < 1e-15);
        assert!(product_log_norm(std::iter::empty(), 5).is_err());
        assert!(product_log_norm(std::iter::repeat(Mat2::IDENTITY), 0).is_err());
    }

    #[test]
    fn diagonal_product_against_exact() {
        // diag(2, 1/2)^N has HS norm sqrt(4^N + 4^-N) exactly.
        for n in [1usize, 20, 200, 5000] {
            let v = product_log_norm(std::iter::repeat(Mat2::diag(2.0, 0.5)), n).unwrap();
            let nf = n as f64;
            let exact = nf * 2f64.ln() + 0.5 * (-(4f64.ln()) * 2.0 * nf).exp().ln_1p();
            assert!((v - exact).abs() < 1e-9 * exact.max(1.0), "n={n}: {v} vs {exact}");
        }
    }

    #[test]
    fn no_overflow_long_product() {
        let v = product_log_norm(std::iter::repeat(Mat2::diag(1e3, 1e-3)), 1_000_000).unwrap();
        assert!((v / 1e6 - 1e3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn rotations_stay_bounded() {
        let (s, c) = 0.7f64.sin_cos();
        let r = Mat2::new(c, s, -s, c);
        let v = product_log_norm(std::iter::repeat(r), 100_000).unwrap();
        assert!((v - 2f64.sqrt().ln()).abs() < 1e-9);
    }

    #[test]
    fn free_space_transmission_is_one() {
        let stack = LayerStack::from_pairs(&[(1.0, 0.8)]).unwrap();
        let spec = DisorderSpec::thickness(stack, 0.0).unwrap();
        for n in [1, 37, 1000] {
            let t = transmission(&spec, 3.3, n, 0).unwrap();
            assert!((t.t2 - 1.0).abs() < 1e-12, "{t:?}");
        }
    }

    #[test]
    fn in_gap_exponent_matches_spectral_radius() {
        let nu = 5.0; // inside the gap [4.32, 5.63]
        let kappa = match bloch_phase(&period_transfer(&fig3(), nu).unwrap()) {
            BlochPhase::Gap { kappa, .. } => kappa,
            other => panic!("{other:?}"),
        };
        let spec = DisorderSpec::thickness(fig3(), 0.0).unwrap();
        let g = lyapunov_mc(&spec, nu, 2_000_000, 1, 1).unwrap();
        assert!((g.gamma - kappa).abs() < 1e-6, "{} vs {kappa}", g.gamma);
        let t = gamma_from_transmission(&spec, nu, 1000, Window::default(), 1, 1).unwrap();
        assert!((t.gamma - kappa).abs() < 0.02 * kappa);
    }

    #[test]
    fn in_band_no_growth() {
        let spec = DisorderSpec::thickness(fig3(), 0.0).unwrap();
        let g1 = lyapunov_mc(&spec, 9.0, 1000, 1, 1).unwrap();
        let g2 = lyapunov_mc(&spec, 9.0, 10_000, 1, 1).unwrap();
        assert!(g1.gamma.abs() < 5e-3 && g2.gamma.abs() < 5e-4);
        assert!(g2.gamma.abs() < g1.gamma.abs());
    }

    #[test]
    fn transmission_bounded_by_one() {
        let spec = DisorderSpec::thickness(fig3(), 0.3).unwrap();
        for seed in 0..20 {
            let t = transmission(&spec, 7.0, 300, seed).unwrap();
            assert!(t.t2 > 0.0 && t.t2 <= 1.0);
            assert!((t.r2() + t.t2 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let spec = DisorderSpec::thickness(fig3(), 0.05).unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| lyapunov_mc(&spec, 9.0, 200, 16, 42).unwrap())
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a.gamma.to_bits(), b.gamma.to_bits());
        assert_eq!(a.std_err.to_bits(), b.std_err.to_bits());
    }

    #[test]
    fn window_validation() {
        let spec = DisorderSpec::thickness(fig3(), 0.05).unwrap();
        assert!(gamma_from_transmission(&spec, 9.0, 1000, Window { lo: 995, hi: 1000 }, 2, 1).is_err());
        assert!(gamma_from_transmission(&spec, 9.0, 1000, Window { lo: 500, hi: 1001 }, 2, 1).is_err());
        assert!(gamma_from_transmission(&spec, 9.0, 1000, Window { lo: 0, hi: 100 }, 2, 1).is_err());
    }

    #[test]
    fn identity_conjugation_is_exact() {
        let spec = DisorderSpec::thickness(fig3(), 0.05).unwrap();
        let c = conjugation_invariance_check(&spec, 9.0, &Mat2::IDENTITY, 200, 8, 3).unwrap();
        assert_eq!(c.plain, c.conjugated);
        assert!(conjugation_invariance_check(&spec, 9.0, &Mat2::ZERO, 200, 8, 3).is_err());
    }

    #[test]
    fn prufer_scaling_is_unimodular() {
        let t = PruferScaling::new(2.5).unwrap();
        assert!((t.matrix().det() - 1.0).abs() < 1e-15);
        let m = Mat2::new(1.0, 2.0, 3.0, 7.0);
        let direct = t.matrix().inverse().unwrap() * m * t.matrix();
        assert!(direct.max_abs_diff(&t.conjugate(&m)) < 1e-14);
    }
}
