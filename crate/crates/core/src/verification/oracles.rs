//! Independent reference computations: a finite-difference Jacobian of the
//! speed and a mesh-refinement study of the graph geometry against the
//! extrinsic embedding oracle.

use std::f64::consts::{FRAC_PI_4, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{FlowError, Result};
use crate::flow_operator::{compute_w, evaluate_q, linearize_q};
use crate::graph_hypersurface::{
    embedding_oracle, gauss_curvature, gauss_curvature_log, induced_metric, second_fundamental_form,
    second_fundamental_form_seeded_error, GraphField,
};
use crate::sphere_geometry::{build_grid, jets, DomainSpec, Grid, Mode};

/// Speed written for a general (not necessarily symmetric) Hessian matrix,
/// with its own determinant and exponent bookkeeping.
fn reference_speed(phi: f64, p: [f64; 2], hm: [[f64; 2]; 2], alpha: f64, n: usize) -> f64 {
    let nf = n as f64;
    let b = (alpha + 1.0) * nf / 2.0 + alpha;
    if n == 1 {
        let w = 1.0 - hm[0][0] + p[0] * p[0];
        return ((alpha - 1.0) * phi).exp() * (1.0 + p[0] * p[0]).powf(b) * w.powf(-alpha);
    }
    let w = |i: usize, j: usize| (if i == j { 1.0 } else { 0.0 }) - hm[i][j] + p[i] * p[j];
    let det = w(0, 0) * w(1, 1) - w(0, 1) * w(1, 0);
    let g2 = p[0] * p[0] + p[1] * p[1];
    ((alpha - 1.0) * phi).exp() * (1.0 + g2).powf(b / nf) * det.powf(-alpha / nf)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearizationOracleOutcome {
    pub fields: usize,
    pub nodes: usize,
    /// Worst `|analytic − fd|` relative to the node scale `max(‖Q^{ij}‖, Q)`.
    pub max_rel_err_qij: f64,
    /// Same for `Q^k` with scale `max(‖Q^k‖, Q)`.
    pub max_rel_err_qk: f64,
}

impl LinearizationOracleOutcome {
    pub fn max_rel_err(&self) -> f64 {
        self.max_rel_err_qij.max(self.max_rel_err_qk)
    }
}

/// Smooth random field built from ambient monomials of degree ≤ 2.
fn random_field(grid: &Grid, rng: &mut ChaCha8Rng) -> GraphField {
    let c: [f64; 7] = std::array::from_fn(|k| if k == 0 { rng.gen_range(-0.5..0.5) } else { rng.gen_range(-0.3..0.3) });
    let n = grid.dim();
    GraphField::from_fn(grid, move |r, th| {
        let (s, z) = r.sin_cos();
        let (x, y) = if n == 1 { (s, 0.0) } else { (s * th.cos(), s * th.sin()) };
        c[0] + c[1] * x + c[2] * y + c[3] * x * x + c[4] * x * y + c[5] * y * y + c[6] * z * z
    })
}

/// Compares the analytic `Q^{ij}`, `Q^k` with central differences of an
/// independently coded speed on `count` seeded random admissible fields.
/// Even-numbered fields live on a small two-dimensional cap, odd-numbered
/// ones on an arc.
pub fn linearization_oracle(alpha: f64, count: usize, seed: u64) -> Result<LinearizationOracleOutcome> {
    let caps = build_grid(DomainSpec::full2d(FRAC_PI_4, 8, 16))?;
    let arc = build_grid(DomainSpec::arc(FRAC_PI_4, 16))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = LinearizationOracleOutcome { fields: 0, nodes: 0, max_rel_err_qij: 0.0, max_rel_err_qk: 0.0 };
    let step = 1e-5;

    for idx in 0..count {
        let grid = if idx % 2 == 0 { &caps } else { &arc };
        let n = grid.dim();
        let mut attempt = 0;
        let (phi, w) = loop {
            let phi = random_field(grid, &mut rng);
            if let Ok(w) = compute_w(&phi, grid) {
                if w.min_eig_overall() > 0.1 {
                    break (phi, w);
                }
            }
            attempt += 1;
            if attempt > 1000 {
                return Err(FlowError::InvalidParams("could not draw an admissible random field".into()));
            }
        };
        let js = jets(&phi, grid)?;
        let speed = evaluate_q(&phi, &w, grid, alpha)?;
        let lin = linearize_q(&phi, &w, grid, alpha)?;

        for (node, j) in js.iter().enumerate() {
            let hm = j.hess.to_array();
            let p = j.grad;
            let q = speed.q[node];
            let f = |p: [f64; 2], hm: [[f64; 2]; 2]| reference_speed(j.phi, p, hm, alpha, n);

            let mut err_ij = 0.0f64;
            let mut scale_ij = q;
            for a in 0..n {
                for b in 0..n {
                    let (mut hp, mut hn) = (hm, hm);
                    hp[a][b] += step;
                    hn[a][b] -= step;
                    let fd = (f(p, hp) - f(p, hn)) / (2.0 * step);
                    let exact = lin.qij[node].get(a, b);
                    err_ij = err_ij.max((fd - exact).abs());
                    scale_ij = scale_ij.max(exact.abs());
                }
            }
            let mut err_k = 0.0f64;
            let mut scale_k = q;
            for k in 0..n {
                let (mut pp, mut pn) = (p, p);
                pp[k] += step;
                pn[k] -= step;
                let fd = (f(pp, hm) - f(pn, hm)) / (2.0 * step);
                let exact = lin.qk[node][k];
                err_k = err_k.max((fd - exact).abs());
                scale_k = scale_k.max(exact.abs());
            }
            out.max_rel_err_qij = out.max_rel_err_qij.max(err_ij / scale_ij);
            out.max_rel_err_qk = out.max_rel_err_qk.max(err_k / scale_k);
            out.nodes += 1;
        }
        out.fields += 1;
    }
    Ok(out)
}

/// Mesh-refinement comparison of the closed-form graph geometry with the
/// embedding oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometryStudy {
    pub mode: Mode,
    pub h: Vec<f64>,
    pub err_g: Vec<f64>,
    pub err_h: Vec<f64>,
    pub err_k: Vec<f64>,
    /// Smallest observed order over consecutive refinements, per quantity.
    pub order_g: f64,
    pub order_h: f64,
    pub order_k: f64,
    /// Worst relative gap between the u-form and φ-form curvature.
    pub k_form_gap: f64,
    /// Worst relative gap between `Q` and `v u⁻¹ K^{−α/n}`.
    pub q_form_gap: f64,
}

impl GeometryStudy {
    pub fn min_order(&self) -> f64 {
        self.order_g.min(self.order_h).min(self.order_k)
    }
}

/// Amplitude-0.05 perturbation of the round cap used by the geometry study.
pub fn geometry_test_field(grid: &Grid) -> GraphField {
    let rho = grid.spec.rho;
    let full = grid.spec.mode == Mode::Full2d && grid.dim() == 2;
    GraphField::from_fn(grid, move |r, th| {
        let radial = (PI * r / rho).cos();
        if full {
            0.025 * (radial + (PI * r / (2.0 * rho)).sin().powi(2) * (2.0 * th).cos()) + 0.05 * r.sin() * th.cos()
        } else {
            0.05 * radial
        }
    })
}

fn observed_orders(h: &[f64], e: &[f64]) -> f64 {
    h.windows(2)
        .zip(e.windows(2))
        .map(|(hw, ew)| (ew[0] / ew[1]).ln() / (hw[0] / hw[1]).ln())
        .fold(f64::INFINITY, f64::min)
}

/// Runs the refinement study on `resolutions` (values of `nr`; full caps use
/// `ntheta = 2 nr`). Errors are measured on nodes with `r ≥ ρ/4`, away from
/// the polar chart singularity that limits the oracle's accuracy.
///
/// `seeded_h_error` swaps in the second fundamental form with a sign error.
pub fn geometry_convergence(
    mode: Mode,
    resolutions: &[usize],
    alpha: f64,
    seeded_h_error: bool,
) -> Result<GeometryStudy> {
    if resolutions.len() < 2 {
        return Err(FlowError::InvalidParams("a refinement study needs at least two resolutions".into()));
    }
    let rho = FRAC_PI_4;
    let mut study = GeometryStudy {
        mode,
        h: Vec::new(),
        err_g: Vec::new(),
        err_h: Vec::new(),
        err_k: Vec::new(),
        order_g: 0.0,
        order_h: 0.0,
        order_k: 0.0,
        k_form_gap: 0.0,
        q_form_gap: 0.0,
    };
    for &nr in resolutions {
        let spec = match mode {
            Mode::Axisymmetric => DomainSpec::axisymmetric(rho, nr),
            Mode::Full2d => DomainSpec::full2d(rho, nr, 2 * nr),
        };
        let grid = build_grid(spec)?;
        let phi = geometry_test_field(&grid);
        let (g, _) = induced_metric(&phi, &grid)?;
        let h = if seeded_h_error {
            second_fundamental_form_seeded_error(&phi, &grid)?
        } else {
            second_fundamental_form(&phi, &grid)?
        };
        let k_u = gauss_curvature(&phi, &grid)?;
        let k_log = gauss_curvature_log(&phi, &grid)?;
        let oracle = embedding_oracle(&phi, &grid)?;

        let w = compute_w(&phi, &grid)?;
        let q = evaluate_q(&phi, &w, &grid, alpha)?;
        let js = jets(&phi, &grid)?;
        let n = grid.dim() as f64;

        let (mut eg, mut eh, mut ek) = (0.0f64, 0.0f64, 0.0f64);
        for (node, nd) in grid.nodes.iter().enumerate() {
            study.k_form_gap = study.k_form_gap.max(((k_u[node] - k_log[node]) / k_u[node]).abs());
            let v = (1.0 + js[node].grad_norm_sq()).sqrt();
            let q_alt = v / phi.u(node) * k_u[node].powf(-alpha / n);
            study.q_form_gap = study.q_form_gap.max(((q.q[node] - q_alt) / q_alt).abs());

            if nd.r < 0.25 * rho {
                continue;
            }
            let Some(o) = oracle[node] else { continue };
            let k_closed = h[node].det() / g[node].det();
            eg = eg.max((g[node] - o.g).max_abs());
            eh = eh.max((h[node] - o.h).max_abs());
            ek = ek.max((k_closed - o.k).abs());
        }
        study.h.push(grid.h_r);
        study.err_g.push(eg);
        study.err_h.push(eh);
        study.err_k.push(ek);
    }
    study.order_g = observed_orders(&study.h, &study.err_g);
    study.order_h = observed_orders(&study.h, &study.err_h);
    study.order_k = observed_orders(&study.h, &study.err_k);
    Ok(study)
}
