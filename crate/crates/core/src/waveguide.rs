//! Refractive-index profiles, fundamental solutions and one-period transfer matrices.
//!
//! The optical equation `ψ″ + ν²n²(x)ψ = 0` is the special case `A = −n²`, `B = 0`
//! of the general periodic equation `ψ″ = (ν²A(x) + B(x))ψ`. Transfer matrices map
//! `(ψ, ψ′)` at the start of an interval to `(ψ, ψ′)` at its end.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{domain, require_positive, Result};
pub use crate::mat2::Mat2;

/// One homogeneous layer: refractive index `n` and thickness `len`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "(f64, f64)", into = "(f64, f64)")]
pub struct Layer {
    pub n: f64,
    pub len: f64,
}

impl From<(f64, f64)> for Layer {
    fn from((n, len): (f64, f64)) -> Self {
        Layer { n, len }
    }
}

impl From<Layer> for (f64, f64) {
    fn from(l: Layer) -> Self {
        (l.n, l.len)
    }
}

/// One period of a piecewise-constant refractive-index profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Layer>", into = "Vec<Layer>")]
pub struct LayerStack {
    layers: Vec<Layer>,
    period_len: f64,
}

impl LayerStack {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(domain("a layer stack needs at least one layer"));
        }
        for (i, l) in layers.iter().enumerate() {
            require_positive(&format!("n of layer {i}"), l.n)?;
            require_positive(&format!("length of layer {i}"), l.len)?;
        }
        let period_len = layers.iter().map(|l| l.len).sum();
        Ok(Self { layers, period_len })
    }

    /// Builds a stack from `(n, len)` pairs.
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(pairs.iter().copied().map(Layer::from).collect())
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    /// Period length `ℓ = Σ lᵢ`.
    pub fn period_len(&self) -> f64 {
        self.period_len
    }

    pub fn thinnest(&self) -> f64 {
        self.layers.iter().map(|l| l.len).fold(f64::INFINITY, f64::min)
    }

    /// Layers of `self` followed by layers of `other`.
    pub fn concat(&self, other: &LayerStack) -> LayerStack {
        let mut layers = self.layers.clone();
        layers.extend_from_slice(&other.layers);
        LayerStack { period_len: self.period_len + other.period_len, layers }
    }

    /// The stack repeated `times` times (the enlarged period).
    pub fn repeat(&self, times: usize) -> LayerStack {
        let times = times.max(1);
        let layers: Vec<Layer> = (0..times).flat_map(|_| self.layers.iter().copied()).collect();
        LayerStack { period_len: self.period_len * times as f64, layers }
    }

    /// Same indices, new thicknesses.
    pub fn with_lengths(&self, lengths: &[f64]) -> Result<LayerStack> {
        if lengths.len() != self.layers.len() {
            return Err(domain(format!(
                "expected {} lengths, got {}",
                self.layers.len(),
                lengths.len()
            )));
        }
        LayerStack::new(
            self.layers
                .iter()
                .zip(lengths)
                .map(|(l, &len)| Layer { n: l.n, len })
                .collect(),
        )
    }
}

impl TryFrom<Vec<Layer>> for LayerStack {
    type Error = crate::Error;

    fn try_from(layers: Vec<Layer>) -> Result<Self> {
        LayerStack::new(layers)
    }
}

impl From<LayerStack> for Vec<Layer> {
    fn from(s: LayerStack) -> Self {
        s.layers
    }
}

/// Transfer matrix of a homogeneous layer of index `n` and thickness `len`.
///
/// `[[cos φ, sin φ/(nν)], [−nν sin φ, cos φ]]` with `φ = n·len·ν`.
pub fn layer_transfer(n: f64, len: f64, nu: f64) -> Result<Mat2> {
    require_positive("refractive index", n)?;
    require_positive("frequency", nu)?;
    if !(len.is_finite() && len >= 0.0) {
        return Err(domain(format!("layer length must be finite and >= 0, got {len}")));
    }
    Ok(layer_matrix(n, len, nu))
}

/// Unchecked [`layer_transfer`].
#[inline]
pub(crate) fn layer_matrix(n: f64, len: f64, nu: f64) -> Mat2 {
    let k = n * nu;
    let (s, c) = (k * len).sin_cos();
    Mat2::new(c, s / k, -k * s, c)
}

/// Transfer matrix of `ψ″ = qψ` over a length `len` with constant `q`.
///
/// Oscillatory for `q < 0`, hyperbolic for `q > 0`, a shear for `q = 0`.
#[inline]
pub fn constant_potential_transfer(q: f64, len: f64) -> Mat2 {
    if q < 0.0 {
        let k = (-q).sqrt();
        let (s, c) = (k * len).sin_cos();
        Mat2::new(c, s / k, -k * s, c)
    } else if q > 0.0 {
        let k = q.sqrt();
        let x = k * len;
        let (s, c) = (x.sinh(), x.cosh());
        Mat2::new(c, s / k, k * s, c)
    } else {
        Mat2::new(1.0, len, 0.0, 1.0)
    }
}

/// One-period transfer matrix `M = M_m ⋯ M₂ M₁` (first layer applied first).
pub fn period_transfer(stack: &LayerStack, nu: f64) -> Result<Mat2> {
    require_positive("frequency", nu)?;
    Ok(period_matrix(stack, nu))
}

#[inline]
pub(crate) fn period_matrix(stack: &LayerStack, nu: f64) -> Mat2 {
    stack.layers.iter().map(|l| layer_matrix(l.n, l.len, nu)).product()
}

/// Transfer matrix from `0` to `x ∈ [0, ℓ]` inside one period of `stack`.
///
/// Its columns are the closed-form fundamental solutions `(ψ₁, ψ₁′)`, `(ψ₂, ψ₂′)` at `x`.
pub fn partial_transfer(stack: &LayerStack, nu: f64, x: f64) -> Result<Mat2> {
    require_positive("frequency", nu)?;
    if !(0.0..=stack.period_len * (1.0 + 1e-14)).contains(&x) {
        return Err(domain(format!("position {x} outside [0, {}]", stack.period_len)));
    }
    let mut m = Mat2::IDENTITY;
    let mut start = 0.0;
    for l in &stack.layers {
        let end = start + l.len;
        if x <= end {
            return Ok(layer_matrix(l.n, x - start, nu) * m);
        }
        m = layer_matrix(l.n, l.len, nu) * m;
        start = end;
    }
    Ok(m)
}

type CoeffFn = dyn Fn(f64) -> (f64, f64) + Send + Sync;

/// Coefficients `A(x)`, `B(x)` of `ψ″ = (ν²A + B)ψ` on one period `[0, ℓ]`.
///
/// The closure returns `(A(x), B(x))`. Breakpoints mark discontinuities; the
/// integrator never steps across one and evaluates each piece from its interior.
#[derive(Clone)]
pub struct CoefficientProfile {
    period_len: f64,
    /// Strictly increasing, starts at 0 and ends at `period_len`.
    breakpoints: Vec<f64>,
    coeffs: Arc<CoeffFn>,
}

impl fmt::Debug for CoefficientProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientProfile")
            .field("period_len", &self.period_len)
            .field("breakpoints", &self.breakpoints)
            .finish_non_exhaustive()
    }
}

impl CoefficientProfile {
    /// `interior` lists discontinuity positions strictly inside `(0, period_len)`.
    pub fn new<F>(period_len: f64, interior: &[f64], coeffs: F) -> Result<Self>
    where
        F: Fn(f64) -> (f64, f64) + Send + Sync + 'static,
    {
        require_positive("period length", period_len)?;
        let mut breakpoints = Vec::with_capacity(interior.len() + 2);
        breakpoints.push(0.0);
        for &x in interior {
            let last = *breakpoints.last().unwrap();
            if !(x > last && x < period_len) {
                return Err(domain(format!("breakpoint {x} not increasing inside (0, {period_len})")));
            }
            breakpoints.push(x);
        }
        breakpoints.push(period_len);
        Ok(Self { period_len, breakpoints, coeffs: Arc::new(coeffs) })
    }

    /// Free space `A = −1`, `B = 0`.
    pub fn free_space(period_len: f64) -> Result<Self> {
        Self::new(period_len, &[], |_| (-1.0, 0.0))
    }

    /// The optical specialization `A = −n²(x)`, `B = 0` of a layer stack.
    pub fn from_stack(stack: &LayerStack) -> Self {
        let mut ends = Vec::with_capacity(stack.len());
        let mut acc = 0.0;
        for l in stack.layers() {
            acc += l.len;
            ends.push((acc, l.n * l.n));
        }
        let interior: Vec<f64> = ends[..ends.len() - 1].iter().map(|e| e.0).collect();
        let lookup = ends.clone();
        let coeffs = move |x: f64| {
            let i = lookup.partition_point(|e| e.0 < x).min(lookup.len() - 1);
            (-lookup[i].1, 0.0)
        };
        let mut breakpoints = vec![0.0];
        breakpoints.extend_from_slice(&interior);
        breakpoints.push(stack.period_len());
        Self { period_len: stack.period_len(), breakpoints, coeffs: Arc::new(coeffs) }
    }

    pub fn period_len(&self) -> f64 {
        self.period_len
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn segments(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.breakpoints.windows(2).map(|w| (w[0], w[1]))
    }

    pub fn thinnest_segment(&self) -> f64 {
        self.segments().map(|(a, b)| b - a).fold(f64::INFINITY, f64::min)
    }

    /// `(A(x), B(x))`.
    pub fn eval(&self, x: f64) -> (f64, f64) {
        (self.coeffs)(x)
    }

    /// Coefficients seen from inside the segment `[lo, hi]`.
    #[inline]
    fn eval_in(&self, lo: f64, hi: f64, x: f64) -> (f64, f64) {
        let eps = 1e-12 * (hi - lo);
        (self.coeffs)(x.clamp(lo + eps, hi - eps))
    }

    /// Largest local wavenumber `sqrt|ν²A + B|` sampled on a segment.
    fn segment_wavenumber(&self, lo: f64, hi: f64, nu: f64) -> f64 {
        (0..=8)
            .map(|i| {
                let (a, b) = self.eval_in(lo, hi, lo + (hi - lo) * i as f64 / 8.0);
                (nu * nu * a + b).abs().sqrt()
            })
            .fold(0.0, f64::max)
    }
}

/// Step-size policy for the fundamental-solution integrator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resolution {
    /// Minimum number of steps across the thinnest segment.
    pub steps_per_thinnest: usize,
    /// Largest allowed phase advance `k·h` per step.
    pub max_phase_step: f64,
}

impl Default for Resolution {
    fn default() -> Self {
        Self { steps_per_thinnest: 64, max_phase_step: 0.005 }
    }
}

impl Resolution {
    /// Even step counts per segment of `profile` at frequency `nu`.
    pub fn steps_for(&self, profile: &CoefficientProfile, nu: f64) -> Vec<usize> {
        let thinnest = profile.thinnest_segment();
        profile
            .segments()
            .map(|(lo, hi)| {
                let len = hi - lo;
                let by_len = (self.steps_per_thinnest as f64 * len / thinnest).ceil();
                let by_phase = (profile.segment_wavenumber(lo, hi, nu) * len / self.max_phase_step).ceil();
                make_even(by_len.max(by_phase) as usize)
            })
            .collect()
    }
}

fn make_even(n: usize) -> usize {
    let n = n.max(2);
    n + n % 2
}

/// Sampled fundamental solutions `ψ₁`, `ψ₂` with `ψ₁(0)=1, ψ₁′(0)=0, ψ₂(0)=0, ψ₂′(0)=1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FundamentalPair {
    pub grid: Vec<f64>,
    pub psi1: Vec<f64>,
    pub psi1p: Vec<f64>,
    pub psi2: Vec<f64>,
    pub psi2p: Vec<f64>,
    /// Grid indices of the profile breakpoints (first is 0, last is `grid.len() − 1`).
    pub segment_bounds: Vec<usize>,
    /// Set when the nominal step exceeded the thinnest segment.
    pub coarse_grid: bool,
}

impl FundamentalPair {
    /// `[[ψ₁(ℓ), ψ₂(ℓ)], [ψ₁′(ℓ), ψ₂′(ℓ)]]`.
    pub fn endpoint_matrix(&self) -> Mat2 {
        let i = self.grid.len() - 1;
        Mat2::new(self.psi1[i], self.psi2[i], self.psi1p[i], self.psi2p[i])
    }

    pub fn wronskian(&self, i: usize) -> f64 {
        self.psi1[i] * self.psi2p[i] - self.psi1p[i] * self.psi2[i]
    }

    /// `max |W(x) − 1|` over the grid.
    pub fn max_wronskian_drift(&self) -> f64 {
        (0..self.grid.len()).map(|i| (self.wronskian(i) - 1.0).abs()).fold(0.0, f64::max)
    }
}

/// Integrates the fundamental solutions with fixed-step RK4 using about
/// `grid_points` nodes, never stepping across a breakpoint.
pub fn fundamental_solutions(
    profile: &CoefficientProfile,
    nu: f64,
    grid_points: usize,
) -> Result<FundamentalPair> {
    require_positive("frequency", nu)?;
    if grid_points < 2 {
        return Err(domain("grid_points must be >= 2"));
    }
    let total = (grid_points - 1) as f64;
    let ell = profile.period_len();
    let steps: Vec<usize> = profile
        .segments()
        .map(|(lo, hi)| make_even((total * (hi - lo) / ell).round() as usize))
        .collect();
    let coarse = ell / total > profile.thinnest_segment();
    Ok(integrate_segments(profile, nu, &steps, coarse))
}

/// [`fundamental_solutions`] with the step counts chosen by `resolution`.
pub fn fundamental_solutions_with(
    profile: &CoefficientProfile,
    nu: f64,
    resolution: &Resolution,
) -> Result<FundamentalPair> {
    require_positive("frequency", nu)?;
    let steps = resolution.steps_for(profile, nu);
    Ok(integrate_segments(profile, nu, &steps, false))
}

fn integrate_segments(profile: &CoefficientProfile, nu: f64, steps: &[usize], coarse: bool) -> FundamentalPair {
    let n_total: usize = steps.iter().sum::<usize>() + 1;
    let mut out = FundamentalPair {
        grid: Vec::with_capacity(n_total),
        psi1: Vec::with_capacity(n_total),
        psi1p: Vec::with_capacity(n_total),
        psi2: Vec::with_capacity(n_total),
        psi2p: Vec::with_capacity(n_total),
        segment_bounds: vec![0],
        coarse_grid: coarse,
    };
    // y = (ψ₁, ψ₁′, ψ₂, ψ₂′)
    let mut y = [1.0, 0.0, 0.0, 1.0];
    let push = |out: &mut FundamentalPair, x: f64, y: &[f64; 4]| {
        out.grid.push(x);
        out.psi1.push(y[0]);
        out.psi1p.push(y[1]);
        out.psi2.push(y[2]);
        out.psi2p.push(y[3]);
    };
    push(&mut out, 0.0, &y);
    for ((lo, hi), &n) in profile.segments().zip(steps) {
        let h = (hi - lo) / n as f64;
        let q = |x: f64| {
            let (a, b) = profile.eval_in(lo, hi, x);
            nu * nu * a + b
        };
        for i in 0..n {
            let x = lo + h * i as f64;
            y = rk4_step(&q, x, h, &y);
            let x_next = if i + 1 == n { hi } else { lo + h * (i + 1) as f64 };
            push(&mut out, x_next, &y);
        }
        out.segment_bounds.push(out.grid.len() - 1);
    }
    out
}

#[inline]
fn rk4_step<Q: Fn(f64) -> f64>(q: &Q, x: f64, h: f64, y: &[f64; 4]) -> [f64; 4] {
    let deriv = |qx: f64, y: &[f64; 4]| [y[1], qx * y[0], y[3], qx * y[2]];
    let q0 = q(x);
    let qm = q(x + 0.5 * h);
    let q1 = q(x + h);
    let k1 = deriv(q0, y);
    let y2: [f64; 4] = std::array::from_fn(|j| y[j] + 0.5 * h * k1[j]);
    let k2 = deriv(qm, &y2);
    let y3: [f64; 4] = std::array::from_fn(|j| y[j] + 0.5 * h * k2[j]);
    let k3 = deriv(qm, &y3);
    let y4: [f64; 4] = std::array::from_fn(|j| y[j] + h * k3[j]);
    let k4 = deriv(q1, &y4);
    std::array::from_fn(|j| y[j] + h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]))
}

/// One-period transfer matrix of a general profile from its fundamental solutions.
pub fn transfer_from_profile(profile: &CoefficientProfile, nu: f64) -> Result<Mat2> {
    Ok(fundamental_solutions_with(profile, nu, &Resolution::default())?.endpoint_matrix())
}
