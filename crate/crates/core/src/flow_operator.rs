//! The speed operator of the scalar flow and its convexity certificate.
//!
//! With `w_ij = σ_ij − φ_ij + φ_iφ_j` the scalar equation reads
//!
//! ```text
//! ∂φ/∂t = Q = e^{(α−1)φ} (1 + |Dφ|²)^{β/n} det(σ)^{α/n} / det(w)^{α/n},
//! β = (α + 1)n/2 + α.
//! ```
//!
//! A state is admissible (the graph is strictly convex) when `w` is positive
//! definite at every node.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{FlowError, Result};
use crate::graph_hypersurface::GraphField;
use crate::linalg::{Sym, Vec2};
use crate::sphere_geometry::{jets, Grid, Jet};

/// Determinant floor below which `w` is treated as singular.
pub const SINGULAR_DET: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct WField {
    pub w: Vec<Sym>,
    pub w_inv: Vec<Sym>,
    /// `det(w)/det(σ)`.
    pub det_w: Vec<f64>,
    /// Smallest eigenvalue of `w` relative to σ.
    pub min_eig: Vec<f64>,
}

impl WField {
    /// Fails with `NonAdmissible` at the first node whose smallest eigenvalue
    /// does not exceed `floor`.
    pub fn require_admissible(&self, floor: f64) -> Result<()> {
        match self.min_eig.iter().position(|&m| !(m > floor)) {
            Some(node) => Err(FlowError::NonAdmissible { node, min_eig: self.min_eig[node] }),
            None => Ok(()),
        }
    }

    pub fn min_eig_overall(&self) -> f64 {
        self.min_eig.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeedField {
    pub q: Vec<f64>,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearizationData {
    /// `Q^{ij} = ∂Q/∂φ_ij`.
    pub qij: Vec<Sym>,
    /// `Q^k = ∂Q/∂φ_k`.
    pub qk: Vec<Vec2>,
}

pub fn w_at(jet: &Jet) -> Sym {
    let n = jet.hess.dim;
    Sym::identity(n) - jet.hess + Sym::outer(n, jet.grad)
}

pub(crate) fn w_from_jets(js: &[Jet]) -> Result<WField> {
    let mut out = WField {
        w: Vec::with_capacity(js.len()),
        w_inv: Vec::with_capacity(js.len()),
        det_w: Vec::with_capacity(js.len()),
        min_eig: Vec::with_capacity(js.len()),
    };
    for (node, j) in js.iter().enumerate() {
        let w = w_at(j);
        let det = w.det();
        if !(det.abs() >= SINGULAR_DET) {
            return Err(FlowError::SingularW { node, det_w: det });
        }
        out.w_inv.push(w.inverse().ok_or(FlowError::SingularW { node, det_w: det })?);
        out.det_w.push(det);
        out.min_eig.push(w.min_eig());
        out.w.push(w);
    }
    Ok(out)
}

pub fn compute_w(phi: &GraphField, grid: &Grid) -> Result<WField> {
    w_from_jets(&jets(phi, grid)?)
}

pub fn beta(alpha: f64, n: usize) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(FlowError::InvalidParams(format!("alpha must satisfy 0<alpha<1, got {alpha}")));
    }
    Ok(beta_unchecked(alpha, n))
}

fn beta_unchecked(alpha: f64, n: usize) -> f64 {
    (alpha + 1.0) * n as f64 / 2.0 + alpha
}

/// Pointwise speed from a jet and its (positive) `det w`.
pub fn speed_from_parts(phi: f64, grad_norm_sq: f64, det_w: f64, alpha: f64, n: usize) -> f64 {
    let nf = n as f64;
    let b = beta_unchecked(alpha, n);
    ((alpha - 1.0) * phi).exp() * (1.0 + grad_norm_sq).powf(b / nf) * det_w.powf(-alpha / nf)
}

pub fn speed_at(jet: &Jet, alpha: f64) -> f64 {
    let n = jet.hess.dim;
    speed_from_parts(jet.phi, jet.grad_norm_sq(), w_at(jet).det(), alpha, n)
}

pub(crate) fn speed_from_jets(js: &[Jet], w: &WField, alpha: f64) -> Result<SpeedField> {
    let b = beta(alpha, js.first().map_or(1, |j| j.hess.dim))?;
    w.require_admissible(0.0)?;
    let q = js
        .iter()
        .zip(&w.det_w)
        .map(|(j, &d)| speed_from_parts(j.phi, j.grad_norm_sq(), d, alpha, j.hess.dim))
        .collect();
    Ok(SpeedField { q, beta: b })
}

pub fn evaluate_q(phi: &GraphField, w: &WField, grid: &Grid, alpha: f64) -> Result<SpeedField> {
    speed_from_jets(&jets(phi, grid)?, w, alpha)
}

/// Analytic derivatives of `Q` at one node, given `Q` there.
pub fn linearization_at(jet: &Jet, w_inv: &Sym, q: f64, alpha: f64) -> (Sym, Vec2) {
    let n = jet.hess.dim;
    let nf = n as f64;
    let b = beta_unchecked(alpha, n);
    let qij = (alpha / nf * q) * *w_inv;
    let mixed = (b / (1.0 + jet.grad_norm_sq())) * Sym::identity(n) - alpha * *w_inv;
    let m = mixed.apply(jet.grad);
    let s = 2.0 * q / nf;
    (qij, [s * m[0], s * m[1]])
}

pub(crate) fn linearize_from_jets(js: &[Jet], w: &WField, speed: &SpeedField, alpha: f64) -> LinearizationData {
    let (qij, qk) = js
        .iter()
        .zip(&w.w_inv)
        .zip(&speed.q)
        .map(|((j, wi), &q)| linearization_at(j, wi, q, alpha))
        .unzip();
    LinearizationData { qij, qk }
}

pub fn linearize_q(phi: &GraphField, w: &WField, grid: &Grid, alpha: f64) -> Result<LinearizationData> {
    let js = jets(phi, grid)?;
    let speed = speed_from_jets(&js, w, alpha)?;
    Ok(linearize_from_jets(&js, w, &speed, alpha))
}

// ---------------------------------------------------------------------------
// Commutator identities on S²
// ---------------------------------------------------------------------------

/// `φ = c₀ + ⟨a, x⟩` restricted to S², whose covariant derivatives are
/// known exactly: `D²φ = −⟨a,x⟩σ` and `φ_ijk = −φ_k σ_ij`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmbientLinearField {
    pub c0: f64,
    pub a: [f64; 3],
}

/// Deliberate corruptions of the identity right-hand sides, used to show
/// that the residual check has power.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdentityMutation {
    None,
    /// Drop `2(tr w⁻¹ − n + w^{kl}φ_kφ_l)` from the first identity.
    DropCurvatureTerm,
    /// Use `−φ_{1kl}φ_1` instead of `+φ_{1kl}φ_1` in the first identity.
    FlipThirdDerivativeSign,
    /// Drop the trailing `w_11 φ_1²` from the second identity.
    DropTrailingTerm,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct IdentityResiduals {
    /// Second-derivative commutator identity for `w`.
    pub second_order: f64,
    /// Quadratic first-derivative identity for `w`.
    pub first_order: f64,
    /// `w_{11;k} = −φ_{k11} − δ_{1k}φ_1 + φ_k + 2φ_1φ_{1k}`.
    pub w11_k: f64,
    /// `w_{1k;1} = w_{11;k} − w_11φ_k + w_{1k}φ_1`.
    pub w1k_1: f64,
}

impl IdentityResiduals {
    pub fn max(&self) -> f64 {
        self.second_order.max(self.first_order).max(self.w11_k).max(self.w1k_1)
    }

    fn merge(self, o: Self) -> Self {
        Self {
            second_order: self.second_order.max(o.second_order),
            first_order: self.first_order.max(o.first_order),
            w11_k: self.w11_k.max(o.w11_k),
            w1k_1: self.w1k_1.max(o.w1k_1),
        }
    }
}

/// Residuals of the identities at one point of S², in the orthonormal frame
/// `(e_r, e_θ)` of geodesic polar coordinates about the north pole.
/// Index 1 of the identities is `e_r`.
pub fn identity_residuals_at(
    field: &AmbientLinearField,
    r: f64,
    theta: f64,
    mutation: IdentityMutation,
) -> Result<IdentityResiduals> {
    const N: usize = 2;
    let (s, c) = r.sin_cos();
    let (st, ct) = theta.sin_cos();
    let x = [s * ct, s * st, c];
    let e = [[c * ct, c * st, -s], [-st, ct, 0.0]];
    let a = field.a;
    let f = a[0] * x[0] + a[1] * x[1] + a[2] * x[2];
    let p: [f64; N] = [0, 1].map(|i| a[0] * e[i][0] + a[1] * e[i][1] + a[2] * e[i][2]);
    let delta = |i: usize, j: usize| if i == j { 1.0 } else { 0.0 };

    // Exact jets in the orthonormal frame.
    let d2 = |i: usize, j: usize| -f * delta(i, j);
    let d3 = |i: usize, j: usize, k: usize| -p[k] * delta(i, j);
    let d4 = |i: usize, j: usize, k: usize, l: usize| f * delta(k, l) * delta(i, j);

    let w = |i: usize, j: usize| delta(i, j) - d2(i, j) + p[i] * p[j];
    let w_k = |i: usize, j: usize, k: usize| -d3(i, j, k) + d2(i, k) * p[j] + p[i] * d2(j, k);
    let w_kl = |i: usize, j: usize, k: usize, l: usize| {
        -d4(i, j, k, l) + d3(i, k, l) * p[j] + d2(i, k) * d2(j, l) + d2(i, l) * d2(j, k) + p[i] * d3(j, k, l)
    };

    let wm = Sym::new(2, w(0, 0), w(0, 1), w(1, 1));
    if !(wm.min_eig() > 0.0) {
        return Err(FlowError::NonAdmissible { node: 0, min_eig: wm.min_eig() });
    }
    let wi = wm.inverse().ok_or(FlowError::SingularW { node: 0, det_w: wm.det() })?;
    let winv = |k: usize, l: usize| wi.get(k, l);
    let tr_winv = wi.trace();
    let pairs = [(0, 0), (0, 1), (1, 0), (1, 1)];

    // First identity.
    let lhs1: f64 = pairs.iter().map(|&(k, l)| winv(k, l) * (w_kl(0, 0, k, l) - w_kl(k, l, 0, 0))).sum();
    let wpp: f64 = pairs.iter().map(|&(k, l)| winv(k, l) * p[k] * p[l]).sum();
    let third_sign = if mutation == IdentityMutation::FlipThirdDerivativeSign { -1.0 } else { 1.0 };
    let third: f64 = pairs
        .iter()
        .map(|&(k, l)| winv(k, l) * (third_sign * d3(0, k, l) * p[0] - d3(k, 0, 0) * p[l]))
        .sum();
    let curvature = if mutation == IdentityMutation::DropCurvatureTerm {
        0.0
    } else {
        2.0 * (tr_winv - N as f64 + wpp)
    };
    let rhs1 = -2.0 * tr_winv * d2(0, 0) + curvature + 2.0 * third;

    // Second identity.
    let lhs2: f64 = pairs
        .iter()
        .map(|&(k, l)| winv(k, l) * (w_k(0, 0, k) * w_k(0, 0, l) - w_k(0, k, 0) * w_k(0, l, 0)))
        .sum();
    let cross: f64 = pairs.iter().map(|&(k, l)| winv(k, l) * w_k(0, 0, k) * p[l]).sum();
    let trailing = if mutation == IdentityMutation::DropTrailingTerm { 0.0 } else { w(0, 0) * p[0] * p[0] };
    let rhs2 = 2.0 * cross * w(0, 0) - 2.0 * w_k(0, 0, 0) * p[0] - w(0, 0).powi(2) * wpp + trailing;

    let mut w11_k = 0.0f64;
    let mut w1k_1 = 0.0f64;
    for k in 0..N {
        let rhs = -d3(k, 0, 0) - delta(0, k) * p[0] + p[k] + 2.0 * p[0] * d2(0, k);
        w11_k = w11_k.max((w_k(0, 0, k) - rhs).abs());
        let rhs = w_k(0, 0, k) - w(0, 0) * p[k] + w(0, k) * p[0];
        w1k_1 = w1k_1.max((w_k(0, k, 0) - rhs).abs());
    }

    Ok(IdentityResiduals {
        second_order: (lhs1 - rhs1).abs(),
        first_order: (lhs2 - rhs2).abs(),
        w11_k,
        w1k_1,
    })
}

/// Uniformly spread sample points `(r, θ)` strictly inside the cap of the grid.
pub fn sample_cap_points(grid: &Grid, count: usize, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rho = grid.spec.rho;
    (0..count)
        .map(|_| (rng.gen_range(1e-3 * rho..rho * (1.0 - 1e-3)), rng.gen_range(0.0..std::f64::consts::TAU)))
        .collect()
}

/// Maximum residuals over every field and point.
pub fn verify_commutator_identities(
    fields: &[AmbientLinearField],
    points: &[(f64, f64)],
    mutation: IdentityMutation,
) -> Result<IdentityResiduals> {
    let mut acc = IdentityResiduals::default();
    for f in fields {
        for &(r, th) in points {
            acc = acc.merge(identity_residuals_at(f, r, th, mutation)?);
        }
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere_geometry::{build_grid, DomainSpec};
    use std::f64::consts::FRAC_PI_4;

    #[test]
    fn beta_values() {
        assert_eq!(beta(0.5, 2).unwrap(), 2.0);
        assert_eq!(beta(0.5, 1).unwrap(), 1.25);
        assert!((beta(1e-12, 2).unwrap() - 1.0).abs() < 1e-11);
        assert!(beta(0.0, 2).is_err());
        assert!(beta(1.0, 2).is_err());
        assert!(beta(1.2, 1).is_err());
    }

    #[test]
    fn constant_state() {
        let grid = build_grid(DomainSpec::axisymmetric(FRAC_PI_4, 16)).unwrap();
        let c = 0.7;
        let phi = GraphField::constant(&grid, c);
        let w = compute_w(&phi, &grid).unwrap();
        for k in 0..grid.len() {
            assert_eq!(w.w[k], Sym::identity(2));
            assert_eq!(w.det_w[k], 1.0);
            assert_eq!(w.min_eig[k], 1.0);
        }
        let alpha = 0.5;
        let q = evaluate_q(&phi, &w, &grid, alpha).unwrap();
        let lin = linearize_q(&phi, &w, &grid, alpha).unwrap();
        let expected = ((alpha - 1.0) * c).exp();
        for k in 0..grid.len() {
            assert!((q.q[k] - expected).abs() < 1e-15);
            assert!((lin.qij[k].xx - alpha / 2.0 * expected).abs() < 1e-15);
            assert_eq!(lin.qij[k].xy, 0.0);
            assert_eq!(lin.qk[k], [0.0, 0.0]);
        }
    }

    #[test]
    fn cos_r_certificate() {
        // φ = cos r: D²φ = −cos r σ, so w = (1 + cos r)σ + dφ⊗dφ, min eig 1 + cos r.
        let grid = build_grid(DomainSpec::full2d(FRAC_PI_4, 32, 32)).unwrap();
        let phi = GraphField::from_fn(&grid, |r, _| r.cos());
        let w = compute_w(&phi, &grid).unwrap();
        let h2 = grid.h_r * grid.h_r;
        for (k, node) in grid.nodes.iter().enumerate() {
            let expect = 1.0 + node.r.cos();
            assert!((w.min_eig[k] - expect).abs() < 2.0 * h2, "node {k}");
            let s2 = node.r.sin().powi(2);
            assert!((w.w[k].xx - (expect + s2)).abs() < 2.0 * h2);
        }
        w.require_admissible(1e-8).unwrap();
    }

    #[test]
    fn inadmissible_field_is_flagged() {
        // 3 cos(πr/ρ) has φ_rr ≈ 3(π/ρ)² ≫ 1 near the boundary.
        let grid = build_grid(DomainSpec::axisymmetric(FRAC_PI_4, 32)).unwrap();
        let phi = GraphField::from_fn(&grid, |r, _| 3.0 * (std::f64::consts::PI * r / FRAC_PI_4).cos());
        let w = compute_w(&phi, &grid).unwrap();
        assert!(w.min_eig_overall() < 0.0);
        assert!(matches!(w.require_admissible(1e-8), Err(FlowError::NonAdmissible { .. })));
        assert!(matches!(evaluate_q(&phi, &w, &grid, 0.5), Err(FlowError::NonAdmissible { .. })));
    }

    #[test]
    fn singular_w_is_rejected() {
        let jet = Jet { phi: 0.0, grad: [0.0, 0.0], hess: Sym::new(2, 1.0, 0.0, 0.0) };
        assert!(matches!(w_from_jets(&[jet]), Err(FlowError::SingularW { node: 0, .. })));
    }

    #[test]
    fn identities_vanish_for_constant_field() {
        let f = AmbientLinearField { c0: 0.3, a: [0.0; 3] };
        let r = identity_residuals_at(&f, 0.4, 1.1, IdentityMutation::None).unwrap();
        assert_eq!(r.max(), 0.0);
    }
}
