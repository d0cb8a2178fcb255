//! Geometry of the radial graph `M = {u(x)·x : x ∈ Ω}` with `u = e^φ`.
//!
//! Two independent routes are provided. The intrinsic route evaluates the
//! closed-form graph formulas from the covariant jets of φ. The extrinsic
//! route ([`embedding_oracle`]) builds the embedding in ℝⁿ⁺¹ and takes finite
//! differences of it directly, never touching the covariant stencils.

use crate::error::{FlowError, Result};
use crate::linalg::{cross3, dot, dot3, norm_sq, Sym, Vec2};
use crate::sphere_geometry::{jets, one_sided_boundary_gradient, Grid, Jet, Mode, NodeClass};

/// The scalar unknown `φ = log u` on a grid, with one ghost row on each side.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphField {
    values: Vec<f64>,
    rows: usize,
    cols: usize,
    ghosts_filled: bool,
    pub t: f64,
}

impl GraphField {
    fn empty(grid: &Grid) -> Self {
        Self {
            values: vec![0.0; (grid.rows + 2) * grid.cols],
            rows: grid.rows,
            cols: grid.cols,
            ghosts_filled: false,
            t: 0.0,
        }
    }

    /// Spatially constant field; ghosts are filled.
    pub fn constant(grid: &Grid, c: f64) -> Self {
        let mut f = Self::empty(grid);
        f.values.iter_mut().for_each(|v| *v = c);
        f.ghosts_filled = true;
        f
    }

    /// Samples `f(r, θ)` at every node and at the exact physical ghost
    /// locations, so centred stencils see the true function everywhere.
    pub fn from_fn(grid: &Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut field = Self::empty(grid);
        for (k, node) in grid.nodes.iter().enumerate() {
            field.values[k + grid.cols] = f(node.r, node.theta);
        }
        for j in 0..grid.cols {
            let (r, th) = grid.ghost_location(true, j);
            field.values[j] = f(r, th);
            let (r, th) = grid.ghost_location(false, j);
            field.values[(grid.rows + 1) * grid.cols + j] = f(r, th);
        }
        field.ghosts_filled = true;
        field
    }

    /// Nodal values in grid order; ghosts are left unfilled.
    pub fn from_nodal(grid: &Grid, values: &[f64]) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(FlowError::SizeMismatch { expected: grid.len(), got: values.len() });
        }
        let mut f = Self::empty(grid);
        f.values[grid.cols..grid.cols + grid.len()].copy_from_slice(values);
        Ok(f)
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn phi(&self, node: usize) -> f64 {
        self.values[node + self.cols]
    }

    pub fn u(&self, node: usize) -> f64 {
        self.phi(node).exp()
    }

    pub fn set_phi(&mut self, node: usize, value: f64) {
        self.values[node + self.cols] = value;
        self.ghosts_filled = false;
    }

    pub fn nodal(&self) -> &[f64] {
        &self.values[self.cols..self.cols + self.len()]
    }

    pub(crate) fn nodal_mut(&mut self) -> &mut [f64] {
        self.ghosts_filled = false;
        let (c, n) = (self.cols, self.len());
        &mut self.values[c..c + n]
    }

    pub fn min(&self) -> f64 {
        self.nodal().iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.nodal().iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn ghosts_filled(&self) -> bool {
        self.ghosts_filled
    }

    /// Value at padded row `i ∈ [−1, nr]`, angular column wrapped periodically.
    pub fn padded(&self, i: isize, j: isize) -> f64 {
        let j = j.rem_euclid(self.cols as isize) as usize;
        self.values[(i + 1) as usize * self.cols + j]
    }

    pub(crate) fn set_ghost(&mut self, inner: bool, col: usize, value: f64) {
        let row = if inner { 0 } else { self.rows + 1 };
        self.values[row * self.cols + col] = value;
    }

    pub(crate) fn mark_ghosts_filled(&mut self) {
        self.ghosts_filled = true;
    }

    pub(crate) fn check_layout(&self, grid: &Grid) -> Result<()> {
        if self.rows != grid.rows || self.cols != grid.cols {
            return Err(FlowError::SizeMismatch { expected: grid.len(), got: self.len() });
        }
        Ok(())
    }
}

/// Per-node intrinsic geometry of the graph, in σ-orthonormal frame components.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeData {
    pub g: Vec<Sym>,
    pub g_inv: Vec<Sym>,
    pub h: Vec<Sym>,
    /// Unit normal split as (radial part, frame tangential part).
    pub nu: Vec<(f64, Vec2)>,
    pub v: Vec<f64>,
    pub k: Vec<f64>,
}

/// `u`, `Du` and the covariant Hessian of `u`, derived from the φ-jet by the
/// chain rule (`u_i = uφ_i`, `u_ij = u(φ_ij + φ_iφ_j)`).
#[derive(Debug, Clone, Copy)]
struct UJet {
    u: f64,
    du: Vec2,
    ddu: Sym,
}

fn u_jet(j: &Jet) -> UJet {
    let u = j.phi.exp();
    let n = j.hess.dim;
    UJet {
        u,
        du: [u * j.grad[0], u * j.grad[1]],
        ddu: u * (j.hess + Sym::outer(n, j.grad)),
    }
}

pub fn support_factor(j: &Jet) -> f64 {
    (1.0 + j.grad_norm_sq()).sqrt()
}

/// `g_ij = u²σ_ij + u_iu_j` and the closed-form inverse
/// `g^{ij} = u⁻²(σ^{ij} − D^iu D^ju / (u² + |Du|²))`.
pub fn metric_at(j: &Jet) -> (Sym, Sym) {
    let n = j.hess.dim;
    let uj = u_jet(j);
    let u2 = uj.u * uj.u;
    let v2 = 1.0 + norm_sq(n, uj.du) / u2;
    let g = Sym::scaled_identity(n, u2) + Sym::outer(n, uj.du);
    let g_inv = (1.0 / u2) * (Sym::identity(n) - (1.0 / (u2 * v2)) * Sym::outer(n, uj.du));
    (g, g_inv)
}

fn sff_with_sign(j: &Jet, rank_one_sign: f64) -> Sym {
    let n = j.hess.dim;
    let uj = u_jet(j);
    let v = support_factor(j);
    (1.0 / v) * (-uj.ddu + Sym::scaled_identity(n, uj.u) + (rank_one_sign * 2.0 / uj.u) * Sym::outer(n, uj.du))
}

/// `h_ij = v⁻¹(−u_ij + uσ_ij + 2u⁻¹u_iu_j)`.
pub fn sff_at(j: &Jet) -> Sym {
    sff_with_sign(j, 1.0)
}

/// Gauss curvature in the u-form:
/// `K = (u² + |Du|²)^{−n/2} det(u²σ − u u_ij + 2u_iu_j) / det(u²σ + u_iu_j)`.
pub fn gauss_curvature_at(j: &Jet) -> f64 {
    let n = j.hess.dim;
    let uj = u_jet(j);
    let u2 = uj.u * uj.u;
    let top = Sym::scaled_identity(n, u2) - uj.u * uj.ddu + 2.0 * Sym::outer(n, uj.du);
    let bottom = Sym::scaled_identity(n, u2) + Sym::outer(n, uj.du);
    (u2 + norm_sq(n, uj.du)).powf(-(n as f64) / 2.0) * top.det() / bottom.det()
}

/// Gauss curvature in the φ-form:
/// `K = e^{−nφ}(1+|Dφ|²)^{−(n+2)/2} det(σ − D²φ + Dφ⊗Dφ)/det σ`.
pub fn gauss_curvature_log_at(j: &Jet) -> f64 {
    let n = j.hess.dim;
    let w = Sym::identity(n) - j.hess + Sym::outer(n, j.grad);
    (-(n as f64) * j.phi).exp() * (1.0 + j.grad_norm_sq()).powf(-((n + 2) as f64) / 2.0) * w.det()
}

/// Unit normal `ν = v⁻¹(x − ∇_σφ)`: returns (radial part, frame tangential part).
pub fn normal_at(j: &Jet) -> (f64, Vec2) {
    let v = support_factor(j);
    (1.0 / v, [-j.grad[0] / v, -j.grad[1] / v])
}

pub fn induced_metric(phi: &GraphField, grid: &Grid) -> Result<(Vec<Sym>, Vec<Sym>)> {
    Ok(jets(phi, grid)?.iter().map(metric_at).unzip())
}

pub fn second_fundamental_form(phi: &GraphField, grid: &Grid) -> Result<Vec<Sym>> {
    Ok(jets(phi, grid)?.iter().map(sff_at).collect())
}

/// Second fundamental form with the sign of the `2u⁻¹u_iu_j` term flipped.
/// Used by the verification battery to confirm that the geometry checks
/// notice a transcription error.
#[doc(hidden)]
pub fn second_fundamental_form_seeded_error(phi: &GraphField, grid: &Grid) -> Result<Vec<Sym>> {
    Ok(jets(phi, grid)?.iter().map(|j| sff_with_sign(j, -1.0)).collect())
}

fn require_convex(k: Vec<f64>) -> Result<Vec<f64>> {
    match k.iter().position(|&x| !(x > 0.0)) {
        Some(node) => Err(FlowError::NonConvex { node, det_h: k[node] }),
        None => Ok(k),
    }
}

pub fn gauss_curvature(phi: &GraphField, grid: &Grid) -> Result<Vec<f64>> {
    require_convex(jets(phi, grid)?.iter().map(gauss_curvature_at).collect())
}

pub fn gauss_curvature_log(phi: &GraphField, grid: &Grid) -> Result<Vec<f64>> {
    require_convex(jets(phi, grid)?.iter().map(gauss_curvature_log_at).collect())
}

pub fn shape_data(phi: &GraphField, grid: &Grid) -> Result<ShapeData> {
    let js = jets(phi, grid)?;
    let (g, g_inv) = js.iter().map(metric_at).unzip();
    let h: Vec<Sym> = js.iter().map(sff_at).collect();
    let k = require_convex(js.iter().map(gauss_curvature_at).collect())?;
    Ok(ShapeData {
        g,
        g_inv,
        h,
        nu: js.iter().map(normal_at).collect(),
        v: js.iter().map(support_factor).collect(),
        k,
    })
}

/// Unit-sphere point for signed polar coordinates.
pub fn sphere_point(n: usize, r: f64, theta: f64) -> [f64; 3] {
    let (s, c) = r.sin_cos();
    if n == 1 {
        [s, c, 0.0]
    } else {
        [s * theta.cos(), s * theta.sin(), c]
    }
}

/// Ambient position `X = e^φ x` of a node.
pub fn embed_node(phi: &GraphField, grid: &Grid, node: usize) -> [f64; 3] {
    let nd = grid.nodes[node];
    let x = sphere_point(grid.dim(), nd.r, nd.theta);
    let u = phi.u(node);
    [u * x[0], u * x[1], u * x[2]]
}

/// Extrinsic geometry at one node, in frame components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleShape {
    pub g: Sym,
    pub h: Sym,
    pub k: f64,
    pub nu: [f64; 3],
    pub x: [f64; 3],
}

/// Finite-difference geometry of the embedding `X(r, θ) = e^{φ(r,θ)} x(r, θ)`.
///
/// Tangents and second derivatives come from centred differences of `X`
/// in the polar chart; `h_ij = −⟨X_ij, ν⟩` with the outward normal and
/// `K = det h / det g`. Axisymmetric fields are differentiated in θ with
/// step `h_r`. Returns `None` at the axis node, where the polar chart
/// degenerates.
pub fn embedding_oracle(phi: &GraphField, grid: &Grid) -> Result<Vec<Option<OracleShape>>> {
    phi.check_layout(grid)?;
    if !phi.ghosts_filled() {
        return Err(FlowError::GhostsUnfilled);
    }
    let n = grid.dim();
    let full = grid.spec.mode == Mode::Full2d;
    let hr = grid.h_r;
    let ht = if full { grid.h_theta } else { hr };
    let mut out = Vec::with_capacity(grid.len());
    for (node, nd) in grid.nodes.iter().enumerate() {
        if nd.class == NodeClass::Axis {
            out.push(None);
            continue;
        }
        let (i, j) = (nd.row as isize, nd.col as isize);
        // X at signed polar offsets (di rows, dj angular steps).
        let x_at = |di: isize, dj: isize| -> [f64; 3] {
            let r = if di == 0 { nd.r } else { grid.coord_r(i + di) };
            let th = nd.theta + dj as f64 * ht;
            let value = if full { phi.padded(i + di, j + dj) } else { phi.padded(i + di, j) };
            let p = sphere_point(n, r, th);
            let u = value.exp();
            [u * p[0], u * p[1], u * p[2]]
        };
        let lin = |a: [f64; 3], ca: f64, b: [f64; 3], cb: f64| -> [f64; 3] {
            [ca * a[0] + cb * b[0], ca * a[1] + cb * b[1], ca * a[2] + cb * b[2]]
        };
        let x0 = x_at(0, 0);
        let xp = x_at(1, 0);
        let xm = x_at(-1, 0);
        let xr = lin(xp, 0.5 / hr, xm, -0.5 / hr);
        let xrr = lin(lin(xp, 1.0, xm, 1.0), 1.0 / (hr * hr), x0, -2.0 / (hr * hr));
        let x_dir = sphere_point(n, nd.r, nd.theta);

        let shape = if n == 1 {
            // Normal in the plane of the curve, oriented away from the vertex.
            let len = (xr[0] * xr[0] + xr[1] * xr[1]).sqrt();
            if len < 1e-300 {
                return Err(FlowError::DegenerateTangents { node });
            }
            let mut nu = [xr[1] / len, -xr[0] / len, 0.0];
            if dot3(nu, x_dir) < 0.0 {
                nu = [-nu[0], -nu[1], 0.0];
            }
            let g = dot3(xr, xr);
            let h = -dot3(xrr, nu);
            OracleShape { g: Sym::new(1, g, 0.0, 0.0), h: Sym::new(1, h, 0.0, 0.0), k: h / g, nu, x: x0 }
        } else {
            let tp = x_at(0, 1);
            let tm = x_at(0, -1);
            let xt = lin(tp, 0.5 / ht, tm, -0.5 / ht);
            let xtt = lin(lin(tp, 1.0, tm, 1.0), 1.0 / (ht * ht), x0, -2.0 / (ht * ht));
            let xrt = {
                let a = lin(x_at(1, 1), 1.0, x_at(1, -1), -1.0);
                let b = lin(x_at(-1, 1), 1.0, x_at(-1, -1), -1.0);
                lin(a, 0.25 / (hr * ht), b, -0.25 / (hr * ht))
            };
            let c = cross3(xr, xt);
            let len = dot3(c, c).sqrt();
            if len < 1e-300 {
                return Err(FlowError::DegenerateTangents { node });
            }
            let mut nu = [c[0] / len, c[1] / len, c[2] / len];
            if dot3(nu, x_dir) < 0.0 {
                nu = [-nu[0], -nu[1], -nu[2]];
            }
            let gc = [dot3(xr, xr), dot3(xr, xt), dot3(xt, xt)];
            let hc = [-dot3(xrr, nu), -dot3(xrt, nu), -dot3(xtt, nu)];
            let k = (hc[0] * hc[2] - hc[1] * hc[1]) / (gc[0] * gc[2] - gc[1] * gc[1]);
            let s = nd.r.sin();
            OracleShape {
                g: Sym::new(2, gc[0], gc[1] / s, gc[2] / (s * s)),
                h: Sym::new(2, hc[0], hc[1] / s, hc[2] / (s * s)),
                k,
                nu,
                x: x0,
            }
        };
        out.push(Some(shape));
    }
    Ok(out)
}

/// `max |⟨μ̂, ν⟩|` over the boundary, with `ν` from one-sided stencils.
///
/// The cone normal at a boundary point is the ∂Ω conormal `μ` carried
/// radially, so `⟨μ̂, ν⟩ = −D_μφ / √(1 + |Dφ|²)`.
pub fn boundary_orthogonality_residual(phi: &GraphField, grid: &Grid) -> Result<f64> {
    phi.check_layout(grid)?;
    let n = grid.dim();
    let mut worst = 0.0f64;
    for node in grid.boundary_nodes() {
        let mu = crate::sphere_geometry::boundary_normal(grid, node)?;
        let grad = one_sided_boundary_gradient(phi, grid, node)?;
        let v = (1.0 + norm_sq(n, grad)).sqrt();
        worst = worst.max((dot(n, mu, grad) / v).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere_geometry::{build_grid, DomainSpec};
    use std::f64::consts::{FRAC_PI_3, FRAC_PI_4};

    #[test]
    fn round_sphere_piece() {
        let r0: f64 = 1.7;
        for spec in [DomainSpec::axisymmetric(FRAC_PI_4, 16), DomainSpec::arc(FRAC_PI_3, 17)] {
            let grid = build_grid(spec).unwrap();
            let n = grid.dim();
            let phi = GraphField::constant(&grid, r0.ln());
            let s = shape_data(&phi, &grid).unwrap();
            for k in 0..grid.len() {
                assert!((s.g[k].xx - r0 * r0).abs() < 1e-12);
                assert!((s.g_inv[k].xx - 1.0 / (r0 * r0)).abs() < 1e-12);
                assert!((s.h[k].xx - r0).abs() < 1e-12);
                assert!((s.k[k] - r0.powi(-(n as i32))).abs() < 1e-12);
                assert_eq!(s.v[k], 1.0);
                // Curve curvature h/g = 1/r0 for the arc, principal curvature for the cap.
                assert!((s.h[k].xx / s.g[k].xx - 1.0 / r0).abs() < 1e-12);
            }
            assert!(boundary_orthogonality_residual(&phi, &grid).unwrap() < 1e-12);
        }
    }

    #[test]
    fn oracle_on_round_sphere() {
        let r0: f64 = 1.3;
        let grid = build_grid(DomainSpec::full2d(FRAC_PI_4, 16, 128)).unwrap();
        let phi = GraphField::constant(&grid, r0.ln());
        for (k, o) in embedding_oracle(&phi, &grid).unwrap().into_iter().enumerate() {
            let o = o.unwrap();
            assert!((dot3(o.nu, o.nu) - 1.0).abs() < 1e-12);
            let x = sphere_point(2, grid.nodes[k].r, grid.nodes[k].theta);
            assert!((dot3(o.nu, x) - 1.0).abs() < 1e-3);
            // Angular differencing error is O(h_θ²).
            let tol = grid.h_theta * grid.h_theta;
            assert!((o.k - r0.powi(-2)).abs() < tol * r0.powi(-2), "node {k} k {}", o.k);
        }
    }

    #[test]
    fn closed_form_inverse_matches_direct_inversion() {
        let jet = Jet { phi: 0.3, grad: [0.4, -0.25], hess: Sym::new(2, 0.1, 0.05, -0.2) };
        let (g, g_inv) = metric_at(&jet);
        let direct = g.inverse().unwrap();
        for (a, b) in [(g_inv.xx, direct.xx), (g_inv.xy, direct.xy), (g_inv.yy, direct.yy)] {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-300), "{a} {b}");
        }
    }

    #[test]
    fn non_convex_field_is_rejected() {
        let grid = build_grid(DomainSpec::axisymmetric(FRAC_PI_4, 16)).unwrap();
        // φ_rr = 4 at r = 0.5 while the angular direction stays near 1: det w < 0.
        let phi = GraphField::from_fn(&grid, |r, _| 2.0 * (r - 0.5).powi(2));
        assert!(matches!(gauss_curvature(&phi, &grid), Err(FlowError::NonConvex { .. })));
        assert!(matches!(gauss_curvature_log(&phi, &grid), Err(FlowError::NonConvex { .. })));
    }

    #[test]
    fn unfilled_ghosts_are_rejected() {
        let grid = build_grid(DomainSpec::axisymmetric(FRAC_PI_4, 16)).unwrap();
        let phi = GraphField::from_nodal(&grid, &vec![0.0; 16]).unwrap();
        assert_eq!(gauss_curvature(&phi, &grid), Err(FlowError::GhostsUnfilled));
        assert!(matches!(
            GraphField::from_nodal(&grid, &[0.0; 3]),
            Err(FlowError::SizeMismatch { expected: 16, got: 3 })
        ));
    }
}
