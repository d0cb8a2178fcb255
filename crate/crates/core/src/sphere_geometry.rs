//! Geodesic caps in Sⁿ (n = 1, 2), their round metric, and covariant
//! derivative stencils.
//!
//! Coordinates are geodesic polar `(r, θ)` about the cap centre. For n = 1
//! the domain is the arc `[−ρ, ρ]` and `r` is the signed arc coordinate.
//! Node layout by mode:
//!
//! | mode                | radial nodes                         | axis node |
//! |---------------------|--------------------------------------|-----------|
//! | n = 1               | `−ρ + i·h`, `h = 2ρ/(nr−1)`          | none      |
//! | n = 2 axisymmetric  | `i·h`, `h = ρ/(nr−1)`                | `r = 0`   |
//! | n = 2 full2d        | `(i+½)·h`, `h = ρ/(nr−½)`            | none      |
//!
//! Fields carry one ghost row on each radial side. The outer ghost row sits
//! at `ρ + h`; the inner one sits at the signed coordinate just below the
//! first row, which for polar grids is the point reflected through the pole.
//!
//! Derivative outputs are expressed in the σ-orthonormal frame
//! `{∂_r, (sin r)⁻¹ ∂_θ}`, so σ is the identity in every returned tensor.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use crate::error::{FlowError, Result};
use crate::graph_hypersurface::GraphField;
use crate::linalg::{Sym, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// One radial line; fields are functions of `r` only.
    Axisymmetric,
    /// Full `(r, θ)` tensor grid (n = 2 only).
    Full2d,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainSpec {
    pub n: usize,
    pub rho: f64,
    pub mode: Mode,
    pub nr: usize,
    pub ntheta: usize,
}

impl DomainSpec {
    /// Symmetric arc `[−ρ, ρ] ⊂ S¹`.
    pub fn arc(rho: f64, nr: usize) -> Self {
        Self { n: 1, rho, mode: Mode::Axisymmetric, nr, ntheta: 1 }
    }

    pub fn axisymmetric(rho: f64, nr: usize) -> Self {
        Self { n: 2, rho, mode: Mode::Axisymmetric, nr, ntheta: 1 }
    }

    pub fn full2d(rho: f64, nr: usize, ntheta: usize) -> Self {
        Self { n: 2, rho, mode: Mode::Full2d, nr, ntheta }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n != 1 && self.n != 2 {
            return Err(FlowError::InvalidDomain(format!("n must be 1 or 2, got {}", self.n)));
        }
        if !(self.rho > 0.0 && self.rho < FRAC_PI_2) {
            return Err(FlowError::InvalidDomain(format!(
                "rho must lie in (0, pi/2), got {}",
                self.rho
            )));
        }
        if self.nr < 8 {
            return Err(FlowError::InvalidDomain(format!("nr must be at least 8, got {}", self.nr)));
        }
        if self.mode == Mode::Full2d {
            if self.n != 2 {
                return Err(FlowError::InvalidDomain("full2d mode requires n = 2".into()));
            }
            if self.ntheta < 8 || self.ntheta % 2 != 0 {
                return Err(FlowError::InvalidDomain(format!(
                    "ntheta must be even and at least 8, got {}",
                    self.ntheta
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeClass {
    Interior,
    Boundary,
    Axis,
}

/// Round-metric data at a node, in coordinate components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricData {
    pub sigma: [[f64; 2]; 2],
    /// Zero in the angular slot at the axis, where σ is not invertible.
    pub sigma_inv: [[f64; 2]; 2],
    /// `christoffel[k][i][j] = Γ^k_ij`.
    pub christoffel: [[[f64; 2]; 2]; 2],
    pub sqrt_det_sigma: f64,
    /// Lengths of the coordinate vectors, `(|∂_r|, |∂_θ|) = (1, sin r)`.
    pub frame_scale: Vec2,
    /// Set at the axis node, where `sin r = 0`.
    pub degenerate: bool,
}

impl MetricData {
    fn at(n: usize, r: f64) -> Self {
        if n == 1 {
            return Self {
                sigma: [[1.0, 0.0], [0.0, 0.0]],
                sigma_inv: [[1.0, 0.0], [0.0, 0.0]],
                christoffel: [[[0.0; 2]; 2]; 2],
                sqrt_det_sigma: 1.0,
                frame_scale: [1.0, 0.0],
                degenerate: false,
            };
        }
        let (s, c) = r.sin_cos();
        let degenerate = r == 0.0;
        let mut christoffel = [[[0.0; 2]; 2]; 2];
        // Γ^r_θθ = −sin r cos r, Γ^θ_rθ = Γ^θ_θr = cot r.
        christoffel[0][1][1] = -s * c;
        if !degenerate {
            christoffel[1][0][1] = c / s;
            christoffel[1][1][0] = c / s;
        }
        Self {
            sigma: [[1.0, 0.0], [0.0, s * s]],
            sigma_inv: [[1.0, 0.0], [0.0, if degenerate { 0.0 } else { 1.0 / (s * s) }]],
            christoffel,
            sqrt_det_sigma: s,
            frame_scale: [1.0, s],
            degenerate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub r: f64,
    pub theta: f64,
    pub class: NodeClass,
    pub row: usize,
    pub col: usize,
}

/// Immutable tensor-product grid over the cap.
#[derive(Debug, Clone)]
pub struct Grid {
    pub spec: DomainSpec,
    pub nodes: Vec<Node>,
    pub metric: Vec<MetricData>,
    pub rows: usize,
    pub cols: usize,
    pub h_r: f64,
    /// Angular spacing; zero unless `mode == Full2d`.
    pub h_theta: f64,
}

pub fn build_grid(spec: DomainSpec) -> Result<Grid> {
    spec.validate()?;
    let rows = spec.nr;
    let cols = if spec.mode == Mode::Full2d { spec.ntheta } else { 1 };
    let h_r = match (spec.n, spec.mode) {
        (1, _) => 2.0 * spec.rho / (rows - 1) as f64,
        (_, Mode::Axisymmetric) => spec.rho / (rows - 1) as f64,
        (_, Mode::Full2d) => spec.rho / (rows as f64 - 0.5),
    };
    let h_theta = if cols > 1 { TAU / cols as f64 } else { 0.0 };

    let mut grid = Grid {
        spec,
        nodes: Vec::with_capacity(rows * cols),
        metric: Vec::with_capacity(rows * cols),
        rows,
        cols,
        h_r,
        h_theta,
    };
    for i in 0..rows {
        // Pin the last row exactly on the boundary so classification is exact.
        let r = if i == rows - 1 { spec.rho } else { grid.coord_r(i as isize) };
        for j in 0..cols {
            let class = if i == rows - 1 || (spec.n == 1 && i == 0) {
                NodeClass::Boundary
            } else if spec.n == 2 && spec.mode == Mode::Axisymmetric && i == 0 {
                NodeClass::Axis
            } else {
                NodeClass::Interior
            };
            grid.nodes.push(Node { r, theta: j as f64 * h_theta, class, row: i, col: j });
            grid.metric.push(MetricData::at(spec.n, r));
        }
    }
    Ok(grid)
}

impl Grid {
    pub fn dim(&self) -> usize {
        self.spec.n
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    /// Signed radial coordinate of (possibly ghost) row `i ∈ [−1, nr]`.
    pub fn coord_r(&self, i: isize) -> f64 {
        let h = self.h_r;
        match (self.spec.n, self.spec.mode) {
            (1, _) => -self.spec.rho + i as f64 * h,
            (_, Mode::Axisymmetric) => i as f64 * h,
            (_, Mode::Full2d) => (i as f64 + 0.5) * h,
        }
    }

    pub fn boundary_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.class == NodeClass::Boundary)
            .map(|(k, _)| k)
    }

    /// Physical location `(r ≥ 0, θ)` represented by a ghost slot.
    ///
    /// `inner == true` refers to row −1, otherwise to row `nr`.
    pub fn ghost_location(&self, inner: bool, col: usize) -> (f64, f64) {
        let theta = col as f64 * self.h_theta;
        if !inner {
            return (self.coord_r(self.rows as isize), theta);
        }
        let r = self.coord_r(-1);
        if self.spec.n == 1 {
            (r, 0.0)
        } else {
            // Through the pole: (−r, θ) is the point (r, θ + π).
            (-r, (theta + PI).rem_euclid(TAU))
        }
    }

    /// The minimum metric spacing in each frame direction at `node`.
    pub fn metric_spacing(&self, node: usize) -> Vec2 {
        let m = &self.metric[node];
        match (self.spec.n, self.spec.mode) {
            (1, _) => [self.h_r, 0.0],
            (_, Mode::Axisymmetric) => [self.h_r, self.h_r],
            (_, Mode::Full2d) => [self.h_r, m.frame_scale[1] * self.h_theta],
        }
    }
}

/// Coordinate partial derivatives of φ at a node.
#[derive(Debug, Clone, Copy, Default)]
struct Partials {
    d: Vec2,
    dd: [[f64; 2]; 2],
}

fn partials(field: &GraphField, grid: &Grid, node: usize) -> Partials {
    let Node { row, col, .. } = grid.nodes[node];
    let (i, j) = (row as isize, col as isize);
    let h = grid.h_r;
    let at = |di: isize, dj: isize| field.padded(i + di, j + dj);
    let c = at(0, 0);
    let mut p = Partials::default();
    p.d[0] = (at(1, 0) - at(-1, 0)) / (2.0 * h);
    p.dd[0][0] = (at(1, 0) - 2.0 * c + at(-1, 0)) / (h * h);
    if grid.spec.mode == Mode::Full2d {
        let k = grid.h_theta;
        p.d[1] = (at(0, 1) - at(0, -1)) / (2.0 * k);
        p.dd[1][1] = (at(0, 1) - 2.0 * c + at(0, -1)) / (k * k);
        let cross = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4.0 * h * k);
        p.dd[0][1] = cross;
        p.dd[1][0] = cross;
    }
    p
}

/// Frame gradient and `|Dφ|²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Covector {
    pub d: Vec2,
    pub norm_sq: f64,
}

/// Value, frame gradient and frame covariant Hessian at one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub phi: f64,
    pub grad: Vec2,
    pub hess: Sym,
}

impl Jet {
    pub fn grad_norm_sq(&self) -> f64 {
        crate::linalg::norm_sq(self.hess.dim, self.grad)
    }
}

fn jet_at(field: &GraphField, grid: &Grid, node: usize) -> Jet {
    let n = grid.dim();
    let p = partials(field, grid, node);
    let m = &grid.metric[node];
    let phi = field.phi(node);
    if n == 1 {
        return Jet { phi, grad: [p.d[0], 0.0], hess: Sym::new(1, p.dd[0][0], 0.0, 0.0) };
    }
    if m.degenerate {
        // Axis of an axisymmetric field: the Hessian is isotropic.
        let a = p.dd[0][0];
        return Jet { phi, grad: [p.d[0], 0.0], hess: Sym::new(2, a, 0.0, a) };
    }
    let mut hc = [[0.0; 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            let gamma: f64 = (0..2).map(|k| m.christoffel[k][a][b] * p.d[k]).sum();
            hc[a][b] = p.dd[a][b] - gamma;
        }
    }
    let s = m.frame_scale;
    Jet {
        phi,
        grad: [p.d[0] / s[0], p.d[1] / s[1]],
        hess: Sym::new(2, hc[0][0] / (s[0] * s[0]), hc[0][1] / (s[0] * s[1]), hc[1][1] / (s[1] * s[1])),
    }
}

/// Jets at every node (centred stencils, ghosts required).
pub fn jets(field: &GraphField, grid: &Grid) -> Result<Vec<Jet>> {
    field.check_layout(grid)?;
    if !field.ghosts_filled() {
        return Err(FlowError::GhostsUnfilled);
    }
    Ok((0..grid.len()).map(|k| jet_at(field, grid, k)).collect())
}

pub fn covariant_gradient(field: &GraphField, grid: &Grid) -> Result<Vec<Covector>> {
    Ok(jets(field, grid)?
        .into_iter()
        .map(|j| Covector { d: j.grad, norm_sq: j.grad_norm_sq() })
        .collect())
}

/// `φ_ij = ∂_i∂_jφ − Γ^k_ij ∂_kφ`, returned in frame components.
pub fn covariant_hessian(field: &GraphField, grid: &Grid) -> Result<Vec<Sym>> {
    Ok(jets(field, grid)?.into_iter().map(|j| j.hess).collect())
}

/// Outward unit conormal of ∂Ω at a boundary node, in frame components.
pub fn boundary_normal(grid: &Grid, node: usize) -> Result<Vec2> {
    let nd = grid.nodes.get(node).ok_or(FlowError::NotBoundary { node })?;
    if nd.class != NodeClass::Boundary {
        return Err(FlowError::NotBoundary { node });
    }
    if grid.dim() == 1 && nd.row == 0 {
        Ok([-1.0, 0.0])
    } else {
        Ok([1.0, 0.0])
    }
}

/// Frame gradient at a boundary node using a second-order one-sided stencil
/// in the normal direction. Independent of the ghost layer.
pub fn one_sided_boundary_gradient(field: &GraphField, grid: &Grid, node: usize) -> Result<Vec2> {
    boundary_normal(grid, node)?;
    let Node { row, col, .. } = grid.nodes[node];
    let (i, j) = (row as isize, col as isize);
    let h = grid.h_r;
    let at = |di: isize, dj: isize| field.padded(i + di, j + dj);
    let dr = if grid.dim() == 1 && row == 0 {
        (-3.0 * at(0, 0) + 4.0 * at(1, 0) - at(2, 0)) / (2.0 * h)
    } else {
        (3.0 * at(0, 0) - 4.0 * at(-1, 0) + at(-2, 0)) / (2.0 * h)
    };
    let dtheta = if grid.spec.mode == Mode::Full2d {
        (at(0, 1) - at(0, -1)) / (2.0 * grid.h_theta) / grid.metric[node].frame_scale[1]
    } else {
        0.0
    };
    Ok([dr, dtheta])
}
