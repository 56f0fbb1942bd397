//! Random ensembles of perturbed periods and their first-order structure.
//!
//! A perturbed period has transfer matrix `M̃ = M(I + σV + O(σ²))` with `V`
//! traceless. Two disorder types are supported:
//!
//! - **thickness**: every layer length becomes `lᵢ(1 + σξᵢ)`;
//! - **index noise**: `ψ″ = (ν²A + B + σξ_Δ(x)/√Δ)ψ` with `ξ_Δ` constant on
//!   cells of width `Δ` aligned to the period start, i.i.d. across cells.
//!
//! Sampling is always exact (full perturbed transfer matrix); the first-order
//! form is recovered with [`extract_v`].

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, require_positive, Error, Result};
use crate::quad::simpson_uniform;
use crate::rng::{self, Stream};
use crate::waveguide::{
    constant_potential_transfer, fundamental_solutions_with, layer_matrix, period_matrix, CoefficientProfile,
    FundamentalPair, LayerStack, Mat2, Resolution,
};

/// Law of the i.i.d. variables `ξ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    /// Uniform on `(−1, 1)`, variance 1/3.
    Uniform,
    /// Standard normal, variance 1.
    StandardNormal,
}

impl Distribution {
    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Distribution::Uniform => rng.random_range(-1.0..1.0),
            Distribution::StandardNormal => rng.sample(StandardNormal),
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            Distribution::Uniform => 1.0 / 3.0,
            Distribution::StandardNormal => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DisorderKind {
    Thickness,
    IndexNoise { delta: f64 },
}

/// What to do when a thickness draw makes a layer nonpositive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthPolicy {
    #[default]
    Fail,
    /// Redraw the offending variable (biases the ensemble; opt-in only).
    Resample,
}

/// Unperturbed periodic medium.
#[derive(Debug, Clone)]
pub enum BaseModel {
    Stack(LayerStack),
    Profile(CoefficientProfile),
}

impl BaseModel {
    pub fn period_len(&self) -> f64 {
        match self {
            BaseModel::Stack(s) => s.period_len(),
            BaseModel::Profile(p) => p.period_len(),
        }
    }
}

/// An ensemble of perturbed periods.
#[derive(Debug, Clone)]
pub struct DisorderSpec {
    pub kind: DisorderKind,
    pub sigma: f64,
    pub base: BaseModel,
    pub distribution: Distribution,
    pub length_policy: LengthPolicy,
}

impl DisorderSpec {
    /// Layer-thickness disorder with uniform `ξᵢ`.
    pub fn thickness(stack: LayerStack, sigma: f64) -> Result<Self> {
        let spec = Self {
            kind: DisorderKind::Thickness,
            sigma,
            base: BaseModel::Stack(stack),
            distribution: Distribution::Uniform,
            length_policy: LengthPolicy::Fail,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Index noise of correlation length `delta` with standard normal cells.
    pub fn index_noise(base: BaseModel, sigma: f64, delta: f64) -> Result<Self> {
        let spec = Self {
            kind: DisorderKind::IndexNoise { delta },
            sigma,
            base,
            distribution: Distribution::StandardNormal,
            length_policy: LengthPolicy::Fail,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_distribution(mut self, distribution: Distribution) -> Self {
        self.distribution = distribution;
        self
    }

    pub fn with_sigma(&self, sigma: f64) -> Result<Self> {
        let mut s = self.clone();
        s.sigma = sigma;
        s.validate()?;
        Ok(s)
    }

    /// Checks hard constraints; returns advisory warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(domain(format!("sigma must be finite and >= 0, got {}", self.sigma)));
        }
        let mut warnings = Vec::new();
        match self.kind {
            DisorderKind::Thickness => {
                if !matches!(self.base, BaseModel::Stack(_)) {
                    return Err(domain("thickness disorder needs a layer stack"));
                }
                if self.sigma >= 1.0 {
                    return Err(domain(format!("thickness disorder needs sigma < 1, got {}", self.sigma)));
                }
            }
            DisorderKind::IndexNoise { delta } => {
                require_positive("delta", delta)?;
                if self.sigma / delta.sqrt() > 0.3 {
                    warnings.push(format!(
                        "sigma/sqrt(delta) = {:.3} is not small; first-order structure may not hold",
                        self.sigma / delta.sqrt()
                    ));
                }
                if delta > 0.1 * self.base.period_len() {
                    warnings.push(format!("delta = {delta} is not small compared with the period"));
                }
            }
        }
        for w in &warnings {
            log::warn!("{w}");
        }
        Ok(warnings)
    }
}

/// Precomputed sampler of one perturbed period at a fixed frequency.
#[derive(Debug, Clone)]
pub struct PeriodSampler {
    sigma: f64,
    distribution: Distribution,
    policy: LengthPolicy,
    nu: f64,
    unperturbed: Mat2,
    model: SamplerModel,
}

#[derive(Debug, Clone)]
enum SamplerModel {
    Thickness { layers: Vec<(f64, f64)> },
    /// Pieces `(q₀ = −n²ν², length, cell)` of the stack cut at cell boundaries.
    StackNoise { pieces: Vec<(f64, f64, usize)>, cells: usize, amplitude: f64 },
    ProfileNoise { profile: CoefficientProfile, delta: f64, cells: usize, amplitude: f64 },
}

fn cell_count(period_len: f64, delta: f64) -> usize {
    ((period_len / delta) * (1.0 - 1e-12)).ceil().max(1.0) as usize
}

impl PeriodSampler {
    pub fn new(spec: &DisorderSpec, nu: f64) -> Result<Self> {
        require_positive("frequency", nu)?;
        spec.validate()?;
        let (model, unperturbed) = match (&spec.kind, &spec.base) {
            (DisorderKind::Thickness, BaseModel::Stack(stack)) => (
                SamplerModel::Thickness { layers: stack.layers().iter().map(|l| (l.n, l.len)).collect() },
                period_matrix(stack, nu),
            ),
            (DisorderKind::IndexNoise { delta }, BaseModel::Stack(stack)) => {
                let cells = cell_count(stack.period_len(), *delta);
                let mut pieces = Vec::new();
                let mut x = 0.0;
                for l in stack.layers() {
                    let end = x + l.len;
                    let q0 = -l.n * l.n * nu * nu;
                    while x < end {
                        let cell = ((x / delta) * (1.0 + 1e-12)).floor() as usize;
                        let cell = cell.min(cells - 1);
                        let cell_end = ((cell + 1) as f64 * delta).min(stack.period_len());
                        let piece_end = if cell_end < end - 1e-14 * end { cell_end } else { end };
                        pieces.push((q0, piece_end - x, cell));
                        x = piece_end;
                    }
                }
                (
                    SamplerModel::StackNoise { pieces, cells, amplitude: spec.sigma / delta.sqrt() },
                    period_matrix(stack, nu),
                )
            }
            (DisorderKind::IndexNoise { delta }, BaseModel::Profile(profile)) => {
                let cells = cell_count(profile.period_len(), *delta);
                let m = fundamental_solutions_with(profile, nu, &Resolution::default())?.endpoint_matrix();
                (
                    SamplerModel::ProfileNoise {
                        profile: profile.clone(),
                        delta: *delta,
                        cells,
                        amplitude: spec.sigma / delta.sqrt(),
                    },
                    m,
                )
            }
            (DisorderKind::Thickness, BaseModel::Profile(_)) => {
                return Err(domain("thickness disorder needs a layer stack"))
            }
        };
        Ok(Self {
            sigma: spec.sigma,
            distribution: spec.distribution,
            policy: spec.length_policy,
            nu,
            unperturbed,
            model,
        })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Transfer matrix of the unperturbed period.
    pub fn unperturbed(&self) -> Mat2 {
        self.unperturbed
    }

    /// Number of random variables per period.
    pub fn noise_dim(&self) -> usize {
        match &self.model {
            SamplerModel::Thickness { layers } => layers.len(),
            SamplerModel::StackNoise { cells, .. } | SamplerModel::ProfileNoise { cells, .. } => *cells,
        }
    }

    /// Exact perturbed transfer matrix for given noise values.
    pub fn perturbed_with(&self, xis: &[f64]) -> Result<Mat2> {
        if xis.len() != self.noise_dim() {
            return Err(domain(format!("expected {} noise values, got {}", self.noise_dim(), xis.len())));
        }
        match &self.model {
            SamplerModel::Thickness { layers } => {
                let mut m = Mat2::IDENTITY;
                for (i, (&(n, l), &xi)) in layers.iter().zip(xis).enumerate() {
                    let len = l * (1.0 + self.sigma * xi);
                    if len <= 0.0 {
                        return Err(Error::NonpositiveLength { layer: i, length: len });
                    }
                    m = layer_matrix(n, len, self.nu) * m;
                }
                Ok(m)
            }
            SamplerModel::StackNoise { pieces, amplitude, .. } => Ok(pieces
                .iter()
                .map(|&(q0, len, cell)| constant_potential_transfer(q0 + amplitude * xis[cell], len))
                .product()),
            SamplerModel::ProfileNoise { profile, delta, cells, amplitude } => {
                let mut interior: Vec<f64> = profile.breakpoints()[1..profile.breakpoints().len() - 1].to_vec();
                interior.extend((1..*cells).map(|k| k as f64 * delta));
                interior.sort_by(f64::total_cmp);
                let ell = profile.period_len();
                interior.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * ell);
                let base = profile.clone();
                let noise: Vec<f64> = xis.iter().map(|x| amplitude * x).collect();
                let (delta, last) = (*delta, *cells - 1);
                let perturbed = CoefficientProfile::new(ell, &interior, move |x| {
                    let (a, b) = base.eval(x);
                    let cell = ((x / delta).floor() as usize).min(last);
                    (a, b + noise[cell])
                })?;
                Ok(fundamental_solutions_with(&perturbed, self.nu, &Resolution::default())?.endpoint_matrix())
            }
        }
    }

    /// Draws one perturbed period.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Mat2> {
        let mut xis: Vec<f64> = (0..self.noise_dim()).map(|_| self.distribution.sample(rng)).collect();
        if let (SamplerModel::Thickness { .. }, LengthPolicy::Resample) = (&self.model, self.policy) {
            for xi in xis.iter_mut() {
                let mut tries = 0;
                while 1.0 + self.sigma * *xi <= 0.0 {
                    tries += 1;
                    if tries > 1000 {
                        return Err(Error::Numerical("could not draw a positive layer length".into()));
                    }
                    *xi = self.distribution.sample(rng);
                }
            }
        }
        self.perturbed_with(&xis)
    }

    /// Fast path for thickness disorder: no allocation.
    #[inline]
    pub(crate) fn sample_fast<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Mat2> {
        match (&self.model, self.policy) {
            (SamplerModel::Thickness { layers }, LengthPolicy::Fail) => {
                let mut m = Mat2::IDENTITY;
                for (i, &(n, l)) in layers.iter().enumerate() {
                    let len = l * (1.0 + self.sigma * self.distribution.sample(rng));
                    if len <= 0.0 {
                        return Err(Error::NonpositiveLength { layer: i, length: len });
                    }
                    m = layer_matrix(n, len, self.nu) * m;
                }
                Ok(m)
            }
            _ => self.sample(rng),
        }
    }
}

/// Draws one exact perturbed period of `spec` at frequency `nu`.
pub fn sample_period<R: Rng + ?Sized>(spec: &DisorderSpec, nu: f64, rng: &mut R) -> Result<Mat2> {
    PeriodSampler::new(spec, nu)?.sample(rng)
}

/// Traceless first-order perturbation `V = [[ξ, η], [ζ, −ξ]]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PerturbationV {
    pub xi: f64,
    pub eta: f64,
    pub zeta: f64,
    /// `tr V_raw` of the untruncated `(M⁻¹M̃ − I)/σ` (diagnostic, `O(σ)`).
    pub raw_trace: f64,
}

impl PerturbationV {
    pub fn from_matrix(v: &Mat2) -> Self {
        Self { xi: 0.5 * (v.a - v.d), eta: v.b, zeta: v.c, raw_trace: v.trace() }
    }

    pub fn matrix(&self) -> Mat2 {
        Mat2::new(self.xi, self.eta, self.zeta, -self.xi)
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.xi, self.eta, self.zeta]
    }
}

/// `V_raw = (M⁻¹M̃ − I)/σ` reduced to its traceless part.
pub fn extract_v(m: &Mat2, m_tilde: &Mat2, sigma: f64) -> Result<PerturbationV> {
    require_positive("sigma", sigma)?;
    let raw = (m.inverse()? * *m_tilde - Mat2::IDENTITY).scale(1.0 / sigma);
    Ok(PerturbationV::from_matrix(&raw))
}

/// First-order `V` of a thickness-perturbed stack, `Σᵢ Pᵢ⁻¹ Vᵢ Pᵢ` with
/// `Pᵢ = Mᵢ₋₁⋯M₁` and `Vᵢ = lᵢξᵢ[[0, 1], [−nᵢ²ν², 0]]`.
pub fn linearized_thickness_v(stack: &LayerStack, nu: f64, xis: &[f64]) -> Result<PerturbationV> {
    require_positive("frequency", nu)?;
    if xis.len() != stack.len() {
        return Err(domain(format!("expected {} noise values, got {}", stack.len(), xis.len())));
    }
    let mut prefix = Mat2::IDENTITY;
    let mut v = Mat2::ZERO;
    for (l, &xi) in stack.layers().iter().zip(xis) {
        let k2 = l.n * l.n * nu * nu;
        let vi = Mat2::new(0.0, 1.0, -k2, 0.0).scale(l.len * xi);
        v = v + prefix.unimodular_inverse() * vi * prefix;
        prefix = layer_matrix(l.n, l.len, nu) * prefix;
    }
    Ok(PerturbationV::from_matrix(&v))
}

/// Symmetric 3×3 covariance over `(ξ, η, ζ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovMatrix3 {
    pub m: Matrix3<f64>,
    /// Set when the quadrature grid was flagged as too coarse.
    pub coarse: bool,
}

impl CovMatrix3 {
    pub fn new(m: Matrix3<f64>) -> Self {
        Self { m, coarse: false }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[(i, j)]
    }

    pub fn det(&self) -> f64 {
        self.m.determinant()
    }

    pub fn symmetry_defect(&self) -> f64 {
        (self.m - self.m.transpose()).abs().max()
    }

    /// Ascending eigenvalues of the symmetric part.
    pub fn eigenvalues(&self) -> [f64; 3] {
        let sym = 0.5 * (self.m + self.m.transpose());
        let mut e: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
        e.sort_by(f64::total_cmp);
        [e[0], e[1], e[2]]
    }

    pub fn frobenius(&self) -> f64 {
        self.m.norm()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { m: self.m * s, coarse: self.coarse }
    }

    /// Numerical rank: eigenvalues above `rel_tol·λ_max`.
    pub fn rank(&self, rel_tol: f64) -> usize {
        let e = self.eigenvalues();
        let top = e[2].abs();
        e.iter().filter(|x| x.abs() > rel_tol * top).count()
    }

    /// Lower Cholesky factor, if positive definite.
    pub fn cholesky(&self) -> Option<Matrix3<f64>> {
        nalgebra::Cholesky::new(0.5 * (self.m + self.m.transpose())).map(|c| c.l())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("row,xi,eta,zeta\n");
        for (i, name) in ["xi", "eta", "zeta"].iter().enumerate() {
            s.push_str(&format!(
                "{name},{:.16e},{:.16e},{:.16e}\n",
                self.m[(i, 0)],
                self.m[(i, 1)],
                self.m[(i, 2)]
            ));
        }
        s
    }
}

/// Gram integrals of the fundamental solutions assembled into the white-noise
/// limit covariance of `(ξ, η, ζ)` for unit-variance index noise.
pub fn covariance_b(profile: &CoefficientProfile, nu: f64) -> Result<CovMatrix3> {
    let pair = fundamental_solutions_with(profile, nu, &Resolution::default())?;
    covariance_b_from_pair(&pair)
}

/// [`covariance_b`] on a precomputed grid (composite Simpson per segment).
pub fn covariance_b_from_pair(pair: &FundamentalPair) -> Result<CovMatrix3> {
    let integral = |f: &dyn Fn(usize) -> f64| -> f64 {
        pair.segment_bounds
            .windows(2)
            .map(|w| {
                let (s, e) = (w[0], w[1]);
                let h = (pair.grid[e] - pair.grid[s]) / (e - s) as f64;
                let vals: Vec<f64> = (s..=e).map(f).collect();
                simpson_uniform(&vals, h)
            })
            .sum()
    };
    let (p1, p2) = (&pair.psi1, &pair.psi2);
    let i1122 = integral(&|i| (p1[i] * p2[i]).powi(2));
    let i1222 = integral(&|i| p1[i] * p2[i].powi(3));
    let i1112 = integral(&|i| p1[i].powi(3) * p2[i]);
    let i2222 = integral(&|i| p2[i].powi(4));
    let i1111 = integral(&|i| p1[i].powi(4));
    // Gram matrix of (−ψ₁ψ₂, −ψ₂², ψ₁²).
    #[rustfmt::skip]
    let m = Matrix3::new(
        i1122, i1222, -i1112,
        i1222, i2222, -i1122,
        -i1112, -i1122, i1111,
    );
    let cov = CovMatrix3 { m, coarse: pair.coarse_grid };
    if cov.coarse {
        log::warn!("covariance quadrature on a coarse grid; accuracy not guaranteed");
    }
    let det = cov.det();
    if !(det > 0.0) {
        return Err(Error::Numerical(format!("covariance matrix is not positive definite (det = {det:e})")));
    }
    Ok(cov)
}

/// Sample statistics of the extracted `V` over an ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationStats {
    pub samples: usize,
    pub mean: [f64; 3],
    pub std_err: [f64; 3],
    pub covariance: CovMatrix3,
    /// Mean of `|tr V_raw|`.
    pub mean_abs_raw_trace: f64,
}

const CHUNK: usize = 1024;

/// Mean, standard error and covariance of `V` over `samples` periods.
pub fn perturbation_stats(spec: &DisorderSpec, nu: f64, samples: usize, seed: u64) -> Result<PerturbationStats> {
    if samples < 2 {
        return Err(domain("need at least two samples"));
    }
    require_positive("sigma", spec.sigma)?;
    let sampler = PeriodSampler::new(spec, nu)?;
    let m = sampler.unperturbed();
    let chunks = samples.div_ceil(CHUNK);
    let vs: Vec<Vec<PerturbationV>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = rng::stream(seed, c as u64);
            let n = CHUNK.min(samples - c * CHUNK);
            (0..n).map(|_| extract_v(&m, &sampler.sample(&mut rng)?, spec.sigma)).collect()
        })
        .collect::<Result<_>>()?;
    let vs: Vec<PerturbationV> = vs.into_iter().flatten().collect();
    let n = vs.len() as f64;
    let mut mean = Vector3::zeros();
    for v in &vs {
        mean += Vector3::from(v.as_array());
    }
    mean /= n;
    let mut cov = Matrix3::zeros();
    for v in &vs {
        let d = Vector3::from(v.as_array()) - mean;
        cov += d * d.transpose();
    }
    cov /= n - 1.0;
    let std_err = [0, 1, 2].map(|i| (cov[(i, i)] / n).sqrt());
    Ok(PerturbationStats {
        samples: vs.len(),
        mean: [mean[0], mean[1], mean[2]],
        std_err,
        covariance: CovMatrix3::new(cov),
        mean_abs_raw_trace: vs.iter().map(|v| v.raw_trace.abs()).sum::<f64>() / n,
    })
}

/// Sample covariance of `(ξ, η, ζ)` over the ensemble.
pub fn empirical_covariance(spec: &DisorderSpec, nu: f64, samples: usize, seed: u64) -> Result<CovMatrix3> {
    if samples < 1000 {
        return Err(domain(format!("empirical covariance needs >= 1000 samples, got {samples}")));
    }
    Ok(perturbation_stats(spec, nu, samples, seed)?.covariance)
}

/// Unimodular Gaussian ensemble `M₀·exp(σV)`, `(ξ, η, ζ) ~ N(0, B)`.
#[derive(Debug, Clone)]
pub struct GaussianEnsemble {
    m0: Mat2,
    chol: Matrix3<f64>,
    sigma: f64,
}

impl GaussianEnsemble {
    pub fn new(m0: Mat2, cov: &CovMatrix3, sigma: f64) -> Result<Self> {
        let chol = cov.cholesky().ok_or_else(|| domain("covariance must be positive definite"))?;
        Ok(Self { m0, chol, sigma })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Mat2 {
        let z = Vector3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal));
        let w = self.chol * z * self.sigma;
        self.m0 * expm_traceless(&Mat2::new(w[0], w[1], w[2], -w[0]))
    }
}

/// `exp(V)` for traceless `V`, using `V² = −det(V)·I`.
pub fn expm_traceless(v: &Mat2) -> Mat2 {
    let s2 = -v.det();
    let (c, sh) = if s2 > 0.0 {
        let s = s2.sqrt();
        (s.cosh(), s.sinh() / s)
    } else if s2 < 0.0 {
        let s = (-s2).sqrt();
        (s.cos(), s.sin() / s)
    } else {
        (1.0, 1.0)
    };
    Mat2::IDENTITY.scale(c) + v.scale(sh)
}

/// Convenience: random stream for sampling outside an ensemble run.
pub fn sampling_stream(seed: u64) -> Stream {
    rng::stream(seed, u64::MAX)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::waveguide::period_transfer;
    use std::f64::consts::PI;

    fn fig3() -> LayerStack {
        LayerStack::from_pairs(&[(1.0, 1.0), (2.5, 0.1)]).unwrap()
    }

    #[test]
    fn zero_sigma_is_unperturbed() {
        let spec = DisorderSpec::thickness(fig3(), 0.0).unwrap();
        let mut rng = sampling_stream(1);
        let m = sample_period(&spec, 9.0, &mut rng).unwrap();
        assert_eq!(m, period_transfer(&fig3(), 9.0).unwrap());

        let noise = DisorderSpec::index_noise(BaseModel::Stack(fig3()), 0.0, 0.05).unwrap();
        let m = sample_period(&noise, 9.0, &mut rng).unwrap();
        assert!(m.max_abs_diff(&period_transfer(&fig3(), 9.0).unwrap()) < 1e-12);
    }

    #[test]
    fn pinned_thickness_draw() {
        let spec = DisorderSpec::thickness(fig3(), 0.1).unwrap();
        let s = PeriodSampler::new(&spec, 5.0).unwrap();
        let m = s.perturbed_with(&[1.0, 1.0]).unwrap();
        let stretched = fig3().with_lengths(&[1.1, 0.11]).unwrap();
        assert!(m.max_abs_diff(&period_transfer(&stretched, 5.0).unwrap()) < 1e-14);
    }

    #[test]
    fn thickness_guard() {
        assert!(DisorderSpec::thickness(fig3(), 1.0).is_err());
        let spec = DisorderSpec::thickness(fig3(), 0.5).unwrap();
        let s = PeriodSampler::new(&spec, 5.0).unwrap();
        assert!(matches!(s.perturbed_with(&[-2.0, 0.0]), Err(Error::NonpositiveLength { layer: 0, .. })));
    }

    #[test]
    fn normal_thickness_resample_policy() {
        let mut spec = DisorderSpec::thickness(fig3(), 0.9).unwrap().with_distribution(Distribution::StandardNormal);
        spec.length_policy = LengthPolicy::Resample;
        let s = PeriodSampler::new(&spec, 5.0).unwrap();
        let mut rng = sampling_stream(3);
        for _ in 0..2000 {
            assert!(s.sample(&mut rng).is_ok());
        }
    }

    #[test]
    fn extract_v_identities() {
        let m = period_transfer(&fig3(), 7.0).unwrap();
        let v = extract_v(&m, &m, 0.1).unwrap();
        assert_eq!(v.as_array(), [0.0, 0.0, 0.0]);
        let v0 = Mat2::new(0.3, -1.2, 0.7, -0.3);
        let sigma = 1e-3;
        let mt = m * (Mat2::IDENTITY + v0.scale(sigma));
        let v = extract_v(&m, &mt, sigma).unwrap();
        assert!(v.matrix().max_abs_diff(&v0) < 1e-9);
        assert!(extract_v(&Mat2::ZERO, &m, 0.1).is_err());
    }

    #[test]
    fn linearized_matches_exact_to_first_order() {
        let stack = LayerStack::from_pairs(&[(1.0, 0.7), (2.0, 0.3), (1.5, 0.5)]).unwrap();
        let nu = 3.1;
        let xis = [0.4, -0.8, 0.3];
        let lin = linearized_thickness_v(&stack, nu, &xis).unwrap();
        assert!(lin.raw_trace.abs() < 1e-12);
        let spec = DisorderSpec::thickness(stack.clone(), 1e-6).unwrap();
        let s = PeriodSampler::new(&spec, nu).unwrap();
        let exact = extract_v(&s.unperturbed(), &s.perturbed_with(&xis).unwrap(), 1e-6).unwrap();
        for (a, b) in exact.as_array().iter().zip(lin.as_array()) {
            assert!((a - b).abs() < 1e-4 * b.abs().max(1.0), "{exact:?} vs {lin:?}");
        }
    }

    #[test]
    fn free_space_covariance_closed_form() {
        let p = CoefficientProfile::free_space(PI).unwrap();
        let b = covariance_b(&p, 1.0).unwrap();
        let (e, t) = (PI / 8.0, 3.0 * PI / 8.0);
        #[rustfmt::skip]
        let want = Matrix3::new(
            e, 0.0, 0.0,
            0.0, t, -e,
            0.0, -e, t,
        );
        assert!((b.m - want).abs().max() < 1e-9, "{}", b.m);
        assert!(b.det() > 0.0);
        assert!(b.symmetry_defect() == 0.0);
    }

    #[test]
    fn thickness_single_period_rank_two_doubled_rank_three() {
        let spec = DisorderSpec::thickness(fig3(), 1e-6).unwrap();
        let c = empirical_covariance(&spec, 9.0, 4000, 11).unwrap();
        assert_eq!(c.rank(1e-6), 2, "{:?}", c.eigenvalues());
        let doubled = DisorderSpec::thickness(fig3().repeat(2), 1e-6).unwrap();
        let c2 = empirical_covariance(&doubled, 9.0, 4000, 11).unwrap();
        assert_eq!(c2.rank(1e-6), 3, "{:?}", c2.eigenvalues());
    }

    #[test]
    fn empirical_covariance_needs_samples() {
        let spec = DisorderSpec::thickness(fig3(), 0.01).unwrap();
        assert!(empirical_covariance(&spec, 9.0, 10, 1).is_err());
    }

    #[test]
    fn expm_is_unimodular() {
        for v in [Mat2::new(0.2, 0.5, 0.1, -0.2), Mat2::new(0.0, 1.0, -2.0, 0.0), Mat2::ZERO] {
            assert!((expm_traceless(&v).det() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn stack_noise_pieces_cover_period() {
        let spec = DisorderSpec::index_noise(BaseModel::Stack(fig3()), 0.0, 0.3).unwrap();
        let s = PeriodSampler::new(&spec, 2.0).unwrap();
        assert_eq!(s.noise_dim(), 4);
        if let SamplerModel::StackNoise { pieces, .. } = &s.model {
            let total: f64 = pieces.iter().map(|p| p.1).sum();
            assert!((total - 1.1).abs() < 1e-14);
            assert_eq!(pieces.last().unwrap().2, 3);
        } else {
            panic!()
        }
    }
}
