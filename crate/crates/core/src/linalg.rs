//! Fixed-size symmetric tensors for dimensions 1 and 2.
//!
//! Every per-node tensor in the crate is expressed in the σ-orthonormal
//! frame, so the round metric is the identity and "eigenvalue relative to
//! σ" is an ordinary eigenvalue. Vectors are `[f64; 2]`; for `dim == 1` the
//! second slot is zero and ignored.

use std::ops::{Add, Mul, Neg, Sub};

pub type Vec2 = [f64; 2];

/// Symmetric `dim × dim` matrix with `dim ∈ {1, 2}`.
///
/// Only the upper triangle is stored, so symmetry is exact by construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sym {
    pub dim: usize,
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Sym {
    pub fn zero(dim: usize) -> Self {
        debug_assert!(dim == 1 || dim == 2);
        Self { dim, xx: 0.0, xy: 0.0, yy: 0.0 }
    }

    pub fn identity(dim: usize) -> Self {
        Self::scaled_identity(dim, 1.0)
    }

    pub fn scaled_identity(dim: usize, s: f64) -> Self {
        let mut m = Self::zero(dim);
        m.xx = s;
        if dim == 2 {
            m.yy = s;
        }
        m
    }

    pub fn new(dim: usize, xx: f64, xy: f64, yy: f64) -> Self {
        if dim == 1 {
            Self { dim, xx, xy: 0.0, yy: 0.0 }
        } else {
            Self { dim, xx, xy, yy }
        }
    }

    /// `v ⊗ v`.
    pub fn outer(dim: usize, v: Vec2) -> Self {
        Self::new(dim, v[0] * v[0], v[0] * v[1], v[1] * v[1])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match (i, j) {
            (0, 0) => self.xx,
            (1, 1) => self.yy,
            _ => self.xy,
        }
    }

    pub fn to_array(&self) -> [[f64; 2]; 2] {
        [[self.xx, self.xy], [self.xy, self.yy]]
    }

    pub fn det(&self) -> f64 {
        match self.dim {
            1 => self.xx,
            _ => self.xx * self.yy - self.xy * self.xy,
        }
    }

    pub fn trace(&self) -> f64 {
        match self.dim {
            1 => self.xx,
            _ => self.xx + self.yy,
        }
    }

    /// Inverse, or `None` when the determinant is exactly zero.
    pub fn inverse(&self) -> Option<Self> {
        let d = self.det();
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        Some(match self.dim {
            1 => Self::new(1, 1.0 / d, 0.0, 0.0),
            _ => Self::new(2, self.yy / d, -self.xy / d, self.xx / d),
        })
    }

    /// Eigenvalues in ascending order (closed form).
    pub fn eigenvalues(&self) -> (f64, f64) {
        match self.dim {
            1 => (self.xx, self.xx),
            _ => {
                let mean = 0.5 * (self.xx + self.yy);
                let half_diff = 0.5 * (self.xx - self.yy);
                let rad = half_diff.hypot(self.xy);
                (mean - rad, mean + rad)
            }
        }
    }

    pub fn min_eig(&self) -> f64 {
        self.eigenvalues().0
    }

    pub fn apply(&self, v: Vec2) -> Vec2 {
        match self.dim {
            1 => [self.xx * v[0], 0.0],
            _ => [self.xx * v[0] + self.xy * v[1], self.xy * v[0] + self.yy * v[1]],
        }
    }

    /// `aᵢ Mⁱʲ bⱼ`.
    pub fn bilinear(&self, a: Vec2, b: Vec2) -> f64 {
        dot(self.dim, a, self.apply(b))
    }

    pub fn quad(&self, v: Vec2) -> f64 {
        self.bilinear(v, v)
    }

    /// Frobenius contraction `Aᵢⱼ Bⁱʲ`.
    pub fn contract(&self, other: &Self) -> f64 {
        match self.dim {
            1 => self.xx * other.xx,
            _ => self.xx * other.xx + 2.0 * self.xy * other.xy + self.yy * other.yy,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.xx.abs().max(self.xy.abs()).max(self.yy.abs())
    }

    pub fn is_finite(&self) -> bool {
        self.xx.is_finite() && self.xy.is_finite() && self.yy.is_finite()
    }
}

impl Add for Sym {
    type Output = Sym;
    fn add(self, o: Sym) -> Sym {
        Sym::new(self.dim, self.xx + o.xx, self.xy + o.xy, self.yy + o.yy)
    }
}

impl Sub for Sym {
    type Output = Sym;
    fn sub(self, o: Sym) -> Sym {
        Sym::new(self.dim, self.xx - o.xx, self.xy - o.xy, self.yy - o.yy)
    }
}

impl Neg for Sym {
    type Output = Sym;
    fn neg(self) -> Sym {
        Sym::new(self.dim, -self.xx, -self.xy, -self.yy)
    }
}

impl Mul<Sym> for f64 {
    type Output = Sym;
    fn mul(self, m: Sym) -> Sym {
        Sym::new(m.dim, self * m.xx, self * m.xy, self * m.yy)
    }
}

pub fn dot(dim: usize, a: Vec2, b: Vec2) -> f64 {
    if dim == 1 {
        a[0] * b[0]
    } else {
        a[0] * b[0] + a[1] * b[1]
    }
}

pub fn norm_sq(dim: usize, a: Vec2) -> f64 {
    dot(dim, a, a)
}

pub(crate) fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_times_matrix_is_identity() {
        let m = Sym::new(2, 2.0, 0.3, 1.5);
        let inv = m.inverse().unwrap();
        let a = m.to_array();
        let b = inv.to_array();
        for i in 0..2 {
            for j in 0..2 {
                let p: f64 = (0..2).map(|k| a[i][k] * b[k][j]).sum();
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((p - e).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn eigenvalues_match_trace_and_det() {
        let m = Sym::new(2, 1.0, -0.7, 0.2);
        let (l0, l1) = m.eigenvalues();
        assert!(l0 <= l1);
        assert!((l0 + l1 - m.trace()).abs() < 1e-14);
        assert!((l0 * l1 - m.det()).abs() < 1e-14);
    }

    #[test]
    fn one_dimensional_ignores_off_diagonal() {
        let m = Sym::new(1, 3.0, 9.0, 9.0);
        assert_eq!(m.det(), 3.0);
        assert_eq!(m.trace(), 3.0);
        assert_eq!(m.inverse().unwrap().xx, 1.0 / 3.0);
        assert_eq!(m.min_eig(), 3.0);
    }
}
