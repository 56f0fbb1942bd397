//! Band/gap structure from the discriminant `tr M(ν)`, Bloch phase and the
//! canonical reduction of a transfer matrix near a band edge.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, require_positive, Error, Result};
use crate::waveguide::{period_matrix, LayerStack, Mat2};

/// `tr M(ν)` for one period of `stack`.
pub fn discriminant(stack: &LayerStack, nu: f64) -> Result<f64> {
    require_positive("frequency", nu)?;
    Ok(period_matrix(stack, nu).trace())
}

/// Closed-form discriminant `A cos(aν) − B cos(bν)` of a two-layer period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoLayerTrace {
    pub big_a: f64,
    pub big_b: f64,
    pub a: f64,
    pub b: f64,
}

impl TwoLayerTrace {
    pub fn new(n1: f64, l1: f64, n2: f64, l2: f64) -> Self {
        let r = 0.5 * (n1 / n2 + n2 / n1);
        Self { big_a: r + 1.0, big_b: r - 1.0, a: n1 * l1 + n2 * l2, b: n1 * l1 - n2 * l2 }
    }

    /// From a stack with exactly two layers.
    pub fn from_stack(stack: &LayerStack) -> Result<Self> {
        match stack.layers() {
            [l1, l2] => Ok(Self::new(l1.n, l1.len, l2.n, l2.len)),
            _ => Err(domain("closed-form trace needs exactly two layers")),
        }
    }

    pub fn eval(&self, nu: f64) -> f64 {
        self.big_a * (self.a * nu).cos() - self.big_b * (self.b * nu).cos()
    }

    /// Envelope `A + B = n₁/n₂ + n₂/n₁` of the oscillating discriminant.
    pub fn envelope(&self) -> f64 {
        self.big_a + self.big_b
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Nondegenerate,
    Degenerate,
    ScanBoundary,
}

impl EdgeKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EdgeKind::Nondegenerate => "nondegenerate",
            EdgeKind::Degenerate => "degenerate",
            EdgeKind::ScanBoundary => "scan_boundary",
        }
    }
}

/// A propagation band `|tr M| ≤ 2` on `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
    pub kind_lo: EdgeKind,
    pub kind_hi: EdgeKind,
    /// Sign of `tr M` at the band midpoint.
    pub trace_sign: i8,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    pub lo: f64,
    pub hi: f64,
}

impl Gap {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandStructure {
    pub nu_min: f64,
    pub nu_max: f64,
    pub resolution: usize,
    pub bands: Vec<Band>,
    pub gaps: Vec<Gap>,
}

impl BandStructure {
    /// All interval endpoints in ascending order, bands and gaps interleaved.
    pub fn intervals(&self) -> Vec<(f64, f64, bool)> {
        let mut all: Vec<(f64, f64, bool)> = self
            .bands
            .iter()
            .map(|b| (b.lo, b.hi, true))
            .chain(self.gaps.iter().map(|g| (g.lo, g.hi, false)))
            .collect();
        all.sort_by(|x, y| x.0.total_cmp(&y.0));
        all
    }

    /// Band containing `nu`, if any.
    pub fn band_containing(&self, nu: f64) -> Option<&Band> {
        self.bands.iter().find(|b| b.lo <= nu && nu <= b.hi)
    }

    /// Interior band edges (scan boundaries excluded) with their kinds.
    pub fn edges(&self) -> Vec<(f64, EdgeKind)> {
        let mut e = Vec::new();
        for b in &self.bands {
            if b.kind_lo != EdgeKind::ScanBoundary {
                e.push((b.lo, b.kind_lo));
            }
            if b.kind_hi != EdgeKind::ScanBoundary {
                e.push((b.hi, b.kind_hi));
            }
        }
        e.sort_by(|x, y| x.0.total_cmp(&y.0));
        e
    }

    /// CSV with columns `lo,hi,kind_lo,kind_hi`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("lo,hi,kind_lo,kind_hi\n");
        for b in &self.bands {
            s.push_str(&format!(
                "{:.16e},{:.16e},{},{}\n",
                b.lo,
                b.hi,
                b.kind_lo.as_str(),
                b.kind_hi.as_str()
            ));
        }
        s
    }
}

/// Knobs for [`scan_bands_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanOptions {
    /// Edges with `|d tr M/dν| < deg_threshold·|tr M|/2` are flagged degenerate.
    pub deg_threshold: f64,
    /// Bisection stops once `||tr M| − 2| ≤ edge_tol`.
    pub edge_tol: f64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self { deg_threshold: 1e-3, edge_tol: 1e-10 }
    }
}

/// Scans `[nu_min, nu_max]` on `resolution` equal steps and refines every
/// band edge. Bands or gaps narrower than about three steps may be missed.
pub fn scan_bands(stack: &LayerStack, nu_min: f64, nu_max: f64, resolution: usize) -> Result<BandStructure> {
    scan_bands_with(stack, nu_min, nu_max, resolution, &ScanOptions::default())
}

pub fn scan_bands_with(
    stack: &LayerStack,
    nu_min: f64,
    nu_max: f64,
    resolution: usize,
    opts: &ScanOptions,
) -> Result<BandStructure> {
    require_positive("nu_min", nu_min)?;
    if !(nu_max.is_finite() && nu_max > nu_min) {
        return Err(domain(format!("empty frequency range [{nu_min}, {nu_max}]")));
    }
    if resolution == 0 {
        return Err(domain("resolution must be > 0"));
    }
    let h = (nu_max - nu_min) / resolution as f64;
    let grid = |i: usize| if i == resolution { nu_max } else { nu_min + h * i as f64 };
    let excess = |nu: f64| period_matrix(stack, nu).trace().abs() - 2.0;
    let values: Vec<f64> = (0..=resolution).into_par_iter().map(|i| excess(grid(i))).collect();

    // Refined edges, in order, each toggling band <-> gap.
    let mut edges = Vec::new();
    for i in 0..resolution {
        let (f0, f1) = (values[i], values[i + 1]);
        if (f0 <= 0.0) != (f1 <= 0.0) {
            edges.push(bisect_edge(&excess, grid(i), grid(i + 1), f0, opts.edge_tol));
        }
    }

    let classify = |nu: f64| {
        let dh = 1e-6 * nu.max(1.0);
        let tr = |x: f64| period_matrix(stack, x).trace();
        let slope = (tr(nu + dh) - tr(nu - dh)) / (2.0 * dh);
        if slope.abs() >= opts.deg_threshold * tr(nu).abs() / 2.0 {
            EdgeKind::Nondegenerate
        } else {
            EdgeKind::Degenerate
        }
    };

    let mut bands = Vec::new();
    let mut gaps = Vec::new();
    let mut in_band = values[0] <= 0.0;
    let mut lo = nu_min;
    let mut kind_lo = EdgeKind::ScanBoundary;
    for (k, &edge) in edges.iter().chain(std::iter::once(&nu_max)).enumerate() {
        let is_last = k == edges.len();
        let kind_hi = if is_last { EdgeKind::ScanBoundary } else { classify(edge) };
        if in_band {
            let mid = 0.5 * (lo + edge);
            let trace_sign = if period_matrix(stack, mid).trace() >= 0.0 { 1 } else { -1 };
            bands.push(Band { lo, hi: edge, kind_lo, kind_hi, trace_sign });
        } else {
            gaps.push(Gap { lo, hi: edge });
        }
        in_band = !in_band;
        lo = edge;
        kind_lo = kind_hi;
    }
    Ok(BandStructure { nu_min, nu_max, resolution, bands, gaps })
}

fn bisect_edge<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64, fa: f64, tol: f64) -> f64 {
    let a_in_band = fa <= 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        let fm = f(mid);
        if fm.abs() <= tol || mid <= a || mid >= b {
            return mid;
        }
        if (fm <= 0.0) == a_in_band {
            a = mid;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

/// Bloch phase of a unimodular matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BlochPhase {
    /// `|tr M| ≤ 2`: eigenvalues `e^{±iω}`, `ω ∈ [0, π]`.
    Band { omega: f64 },
    /// `|tr M| > 2`: eigenvalues `±e^{±κ}`; `trace_sign` is the sign of `tr M`.
    Gap { kappa: f64, trace_sign: i8 },
}

impl BlochPhase {
    pub fn is_gap(&self) -> bool {
        matches!(self, BlochPhase::Gap { .. })
    }

    /// `ln ρ(M)`: zero in a band, `κ` in a gap.
    pub fn log_spectral_radius(&self) -> f64 {
        match *self {
            BlochPhase::Band { .. } => 0.0,
            BlochPhase::Gap { kappa, .. } => kappa,
        }
    }
}

pub fn bloch_phase(m: &Mat2) -> BlochPhase {
    let half = 0.5 * m.trace();
    if half.abs() <= 1.0 {
        BlochPhase::Band { omega: half.acos() }
    } else {
        BlochPhase::Gap { kappa: half.abs().acosh(), trace_sign: if half > 0.0 { 1 } else { -1 } }
    }
}

/// `sin ω / ω` with its limit 1 at the origin.
pub fn sinc(omega: f64) -> f64 {
    if omega.abs() < 1e-4 {
        let w2 = omega * omega;
        1.0 - w2 / 6.0 + w2 * w2 / 120.0
    } else {
        omega.sin() / omega
    }
}

fn sinhc(kappa: f64) -> f64 {
    if kappa.abs() < 1e-4 {
        let k2 = kappa * kappa;
        1.0 + k2 / 6.0 + k2 * k2 / 120.0
    } else {
        kappa.sinh() / kappa
    }
}

/// Free-space transfer matrix over unit length, `[[cos ω, sin ω/ω], [−ω sin ω, cos ω]]`.
pub fn canonical_form(omega: f64) -> Mat2 {
    let (s, c) = omega.sin_cos();
    Mat2::new(c, sinc(omega), -omega * s, c)
}

/// Continuation of [`canonical_form`] to `ω = iκ` (gap side of an edge with `tr M > 2`).
pub fn canonical_form_gap(kappa: f64) -> Mat2 {
    let c = kappa.cosh();
    Mat2::new(c, sinhc(kappa), kappa * kappa.sinh(), c)
}

/// Similarity `D` with `D⁻¹ M D` equal to the canonical form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CanonicalReduction {
    pub d: Mat2,
    pub omega: f64,
    /// Hilbert–Schmidt norm of `D⁻¹ M D − M̂`.
    pub residual: f64,
}

/// Reduces `m` to `[[cos ω, sin ω/ω], [−ω sin ω, cos ω]]`.
///
/// Uses `D = [[−b, 0], [a − cos ω, −sin ω/ω]]`. When the upper-right entry
/// is negligible the construction is applied to `Mᵀ` and transported back.
pub fn canonical_reduction(m: &Mat2, omega: f64) -> Result<CanonicalReduction> {
    if !omega.is_finite() {
        return Err(domain("omega must be finite"));
    }
    let target = canonical_form(omega);
    reduce(m, &target, omega)
}

/// [`canonical_reduction`] on the gap side of an edge (`tr M > 2`, `ω = iκ`).
/// The returned `omega` field holds `κ`.
pub fn canonical_reduction_gap(m: &Mat2, kappa: f64) -> Result<CanonicalReduction> {
    if !(kappa.is_finite() && kappa >= 0.0) {
        return Err(domain("kappa must be finite and >= 0"));
    }
    reduce(m, &canonical_form_gap(kappa), kappa)
}

const B_THRESHOLD: f64 = 1e-8;

fn reduce(m: &Mat2, target: &Mat2, omega: f64) -> Result<CanonicalReduction> {
    let cos_w = target.a;
    let mismatch = (0.5 * m.trace() - cos_w).abs();
    if mismatch > 1e-10 * cos_w.abs().max(1.0) {
        return Err(domain(format!("tr M/2 differs from cos ω by {mismatch:e}")));
    }
    let scale = m.hs_norm();
    let sinc_w = target.b;
    let d = if m.b.abs() >= B_THRESHOLD * scale {
        Mat2::new(-m.b, 0.0, m.a - cos_w, -sinc_w)
    } else if m.c.abs() >= B_THRESHOLD * scale {
        // Build D' for Mᵀ, then D = D'^{-T} J with J the coordinate swap.
        let dt = Mat2::new(-m.c, 0.0, m.a - cos_w, -sinc_w);
        let swap = Mat2::new(0.0, 1.0, 1.0, 0.0);
        dt.inverse()?.transpose() * swap
    } else if m.max_abs_diff(target) <= 1e-12 * scale.max(1.0) {
        Mat2::IDENTITY
    } else {
        return Err(Error::Degenerate(format!(
            "off-diagonal entries vanish (b = {:e}, c = {:e}) and M is not already canonical",
            m.b, m.c
        )));
    };
    let reduced = m.conjugate_by(&d)?;
    let residual = (reduced - *target).hs_norm();
    Ok(CanonicalReduction { d, omega, residual })
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
    fn homogeneous_discriminant() {
        let s = LayerStack::from_pairs(&[(1.0, 1.7)]).unwrap();
        for nu in [0.3, 1.0, 4.2] {
            assert!((discriminant(&s, nu).unwrap() - 2.0 * (nu * 1.7).cos()).abs() < 1e-14);
        }
    }

    #[test]
    fn homogeneous_stack_has_no_gaps() {
        let s = LayerStack::from_pairs(&[(1.0, 1.0)]).unwrap();
        let bs = scan_bands(&s, 0.1, 20.0, 4000).unwrap();
        assert!(bs.gaps.is_empty(), "{:?}", bs.gaps);
    }

    #[test]
    fn scan_rejects_bad_range() {
        let s = fig3();
        assert!(scan_bands(&s, 2.0, 1.0, 100).is_err());
        assert!(scan_bands(&s, 1.0, 2.0, 0).is_err());
        assert!(scan_bands(&s, 0.0, 2.0, 10).is_err());
    }

    #[test]
    fn fig3_point_a_edge_and_point_b_band() {
        let bs = scan_bands(&fig3(), 0.5, 12.0, 4000).unwrap();
        let edge = bs
            .edges()
            .into_iter()
            .find(|(nu, _)| (nu - 5.6288).abs() < 5e-4)
            .expect("edge near 5.6288");
        assert_eq!(edge.1, EdgeKind::Nondegenerate);
        let band = bs.band_containing(9.0).unwrap();
        assert!(band.lo < 9.0 && 9.0 < band.hi);
        assert!(discriminant(&fig3(), 9.0).unwrap().abs() < 2.0);
        // The edge is a left band edge.
        assert!(bs.bands.iter().any(|b| (b.lo - edge.0).abs() < 1e-12));
    }

    #[test]
    fn partition_covers_range() {
        let bs = scan_bands(&fig3(), 0.5, 30.0, 3000).unwrap();
        let iv = bs.intervals();
        assert_eq!(iv.first().unwrap().0, 0.5);
        assert_eq!(iv.last().unwrap().1, 30.0);
        for w in iv.windows(2) {
            assert_eq!(w[0].1, w[1].0);
            assert_ne!(w[0].2, w[1].2);
        }
    }

    #[test]
    fn bloch_phase_examples() {
        assert_eq!(bloch_phase(&Mat2::IDENTITY), BlochPhase::Band { omega: 0.0 });
        match bloch_phase(&Mat2::new(0.0, 1.0, -1.0, 0.0)) {
            BlochPhase::Band { omega } => assert!((omega - PI / 2.0).abs() < 1e-15),
            p => panic!("{p:?}"),
        }
        let k: f64 = 0.3;
        match bloch_phase(&Mat2::diag(k.exp(), (-k).exp())) {
            BlochPhase::Gap { kappa, trace_sign } => {
                assert!((kappa - 0.3).abs() < 1e-12);
                assert_eq!(trace_sign, 1);
            }
            p => panic!("{p:?}"),
        }
    }

    #[test]
    fn canonical_matrix_reduces_to_scalar_d() {
        let w = 0.7;
        let r = canonical_reduction(&canonical_form(w), w).unwrap();
        assert!(r.residual < 1e-15);
        assert_eq!(r.d.b, 0.0);
        assert!((r.d.a - r.d.d).abs() < 1e-15 && r.d.c.abs() < 1e-15);
    }

    #[test]
    fn jordan_block_at_zero_phase() {
        let m = Mat2::new(1.0, 2.5, 0.0, 1.0);
        let r = canonical_reduction(&m, 0.0).unwrap();
        let red = m.conjugate_by(&r.d).unwrap();
        assert!(red.max_abs_diff(&Mat2::new(1.0, 1.0, 0.0, 1.0)) < 1e-15);
    }

    #[test]
    fn lower_left_fallback() {
        // b = 0, c ≠ 0 at a band edge: transposed construction.
        let m = Mat2::new(1.0, 0.0, -3.0, 1.0);
        let r = canonical_reduction(&m, 0.0).unwrap();
        assert!(r.residual < 1e-12, "{r:?}");
    }

    #[test]
    fn minus_identity_is_canonical_at_pi() {
        let r = canonical_reduction(&-Mat2::IDENTITY, PI).unwrap();
        assert!(r.residual < 1e-12);
        assert!(matches!(canonical_reduction(&Mat2::IDENTITY, 0.0), Err(Error::Degenerate(_))));
    }

    #[test]
    fn rejects_inconsistent_phase() {
        assert!(canonical_reduction(&canonical_form(0.5), 0.6).is_err());
    }

    #[test]
    fn fig3_reduction_near_point_a() {
        let s = fig3();
        for nu in [5.6289, 5.63, 5.65, 5.7] {
            let m = period_transfer(&s, nu).unwrap();
            let BlochPhase::Band { omega } = bloch_phase(&m) else { panic!("{nu} not in band") };
            let r = canonical_reduction(&m, omega).unwrap();
            assert!(r.residual <= 1e-9, "nu={nu}: {r:?}");
        }
    }

    #[test]
    fn gap_side_reduction() {
        let m = period_transfer(&fig3(), 5.6).unwrap();
        let BlochPhase::Gap { kappa, trace_sign: 1 } = bloch_phase(&m) else { panic!() };
        let r = canonical_reduction_gap(&m, kappa).unwrap();
        assert!(r.residual <= 1e-9, "{r:?}");
    }
}
