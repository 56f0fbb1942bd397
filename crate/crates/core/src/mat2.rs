//! Real 2×2 matrices acting on `(ψ, ψ′)` column vectors.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major real 2×2 matrix `[[a, b], [c, d]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat2 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2::new(1.0, 0.0, 0.0, 1.0);
    pub const ZERO: Mat2 = Mat2::new(0.0, 0.0, 0.0, 0.0);

    pub const fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Self { a, b, c, d }
    }

    pub const fn diag(p: f64, q: f64) -> Self {
        Self::new(p, 0.0, 0.0, q)
    }

    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    pub fn trace(&self) -> f64 {
        self.a + self.d
    }

    pub fn transpose(&self) -> Self {
        Self::new(self.a, self.c, self.b, self.d)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(s * self.a, s * self.b, s * self.c, s * self.d)
    }

    /// Hilbert–Schmidt (Frobenius) norm.
    pub fn hs_norm(&self) -> f64 {
        self.hs_norm_sq().sqrt()
    }

    pub fn hs_norm_sq(&self) -> f64 {
        self.a * self.a + self.b * self.b + self.c * self.c + self.d * self.d
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.a.abs().max(self.b.abs()).max(self.c.abs()).max(self.d.abs())
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.b.is_finite() && self.c.is_finite() && self.d.is_finite()
    }

    /// Inverse via the adjugate. Fails when `det` vanishes relative to the entries.
    pub fn inverse(&self) -> Result<Self> {
        let det = self.det();
        let scale = self.hs_norm_sq();
        if !det.is_finite() || det.abs() <= 1e-300 || det.abs() <= 1e-14 * scale {
            return Err(Error::Singular { det });
        }
        let inv = 1.0 / det;
        Ok(Self::new(self.d * inv, -self.b * inv, -self.c * inv, self.a * inv))
    }

    /// Inverse of a unimodular matrix (adjugate, no division).
    pub fn unimodular_inverse(&self) -> Self {
        Self::new(self.d, -self.b, -self.c, self.a)
    }

    /// `D⁻¹ · self · D`.
    pub fn conjugate_by(&self, d: &Mat2) -> Result<Self> {
        Ok(d.inverse()? * *self * *d)
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [self.a * v[0] + self.b * v[1], self.c * v[0] + self.d * v[1]]
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &Mat2) -> f64 {
        (*self - *other).max_abs()
    }
}

impl Default for Mat2 {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Mul for Mat2 {
    type Output = Mat2;

    #[inline]
    fn mul(self, r: Mat2) -> Mat2 {
        Mat2::new(
            self.a * r.a + self.b * r.c,
            self.a * r.b + self.b * r.d,
            self.c * r.a + self.d * r.c,
            self.c * r.b + self.d * r.d,
        )
    }
}

impl Add for Mat2 {
    type Output = Mat2;

    fn add(self, r: Mat2) -> Mat2 {
        Mat2::new(self.a + r.a, self.b + r.b, self.c + r.c, self.d + r.d)
    }
}

impl Sub for Mat2 {
    type Output = Mat2;

    fn sub(self, r: Mat2) -> Mat2 {
        Mat2::new(self.a - r.a, self.b - r.b, self.c - r.c, self.d - r.d)
    }
}

impl Neg for Mat2 {
    type Output = Mat2;

    fn neg(self) -> Mat2 {
        self.scale(-1.0)
    }
}

impl std::iter::Product for Mat2 {
    /// Left-multiplies in iteration order, so `[m1, m2, m3]` yields `m3·m2·m1`.
    fn product<I: Iterator<Item = Mat2>>(iter: I) -> Mat2 {
        iter.fold(Mat2::IDENTITY, |acc, m| m * acc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_is_neutral() {
        let m = Mat2::new(1.5, -2.0, 0.25, 3.0);
        assert_eq!(m * Mat2::IDENTITY, m);
        assert_eq!(Mat2::IDENTITY * m, m);
    }

    #[test]
    fn inverse_round_trip() {
        let m = Mat2::new(2.0, 1.0, 3.0, 4.0);
        let p = m * m.inverse().unwrap();
        assert!(p.max_abs_diff(&Mat2::IDENTITY) < 1e-15);
    }

    #[test]
    fn singular_inverse_fails() {
        let m = Mat2::new(1.0, 2.0, 2.0, 4.0);
        assert!(matches!(m.inverse(), Err(Error::Singular { .. })));
    }

    #[test]
    fn product_order_is_left_multiplication() {
        let m1 = Mat2::new(1.0, 1.0, 0.0, 1.0);
        let m2 = Mat2::new(1.0, 0.0, 1.0, 1.0);
        let p: Mat2 = [m1, m2].into_iter().product();
        assert_eq!(p, m2 * m1);
    }

    #[test]
    fn hs_norm_of_identity() {
        assert!((Mat2::IDENTITY.hs_norm() - 2f64.sqrt()).abs() < 1e-16);
    }
}
