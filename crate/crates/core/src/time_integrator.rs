//! Explicit time stepping of the Neumann problem for φ, with the rescaling
//! clock `Θ(c, t)` and slow time `s`.

use crate::error::{FlowError, Result};
use crate::flow_operator::{linearize_from_jets, speed_from_jets, w_from_jets, LinearizationData, SpeedField, WField};
use crate::graph_hypersurface::GraphField;
use crate::sphere_geometry::{jets, one_sided_boundary_gradient, Grid, Jet, Mode};
use crate::verification::{EstimateRecord, EstimateReport, RecordMutation};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stop {
    /// Integrate until flow time `t` reaches the value.
    Time(f64),
    /// Integrate until slow time `s` reaches the value.
    SlowTime(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowParams {
    pub alpha: f64,
    pub cfl: f64,
    pub stop: Stop,
    pub dt_min: f64,
    pub dt_max: f64,
    pub eps_convex: f64,
    /// Reference constant for Θ; `None` means the midpoint of the initial range.
    pub c_rescale: Option<f64>,
}

impl FlowParams {
    pub fn new(alpha: f64, stop: Stop) -> Self {
        Self { alpha, cfl: 0.4, stop, dt_min: 1e-12, dt_max: 1.0, eps_convex: 1e-8, c_rescale: None }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(FlowError::InvalidParams(m));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must satisfy 0<alpha<1, got {}", self.alpha));
        }
        if !(self.cfl > 0.0 && self.cfl <= 0.5) {
            return bad(format!("cfl must lie in (0, 0.5], got {}", self.cfl));
        }
        if !(self.dt_min > 0.0 && self.dt_max >= self.dt_min) {
            return bad(format!("need 0 < dt_min <= dt_max, got {} and {}", self.dt_min, self.dt_max));
        }
        if !(self.eps_convex > 0.0) {
            return bad(format!("eps_convex must be positive, got {}", self.eps_convex));
        }
        match self.stop {
            Stop::Time(t) | Stop::SlowTime(t) if !(t >= 0.0 && t.is_finite()) => {
                bad(format!("stopping time must be finite and non-negative, got {t}"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub phi: GraphField,
    pub t: f64,
    pub s: f64,
    pub step: usize,
    pub theta: f64,
    pub c_rescale: f64,
}

impl FlowState {
    pub fn new(phi: GraphField, c_rescale: f64, alpha: f64) -> Self {
        let mut phi = phi;
        phi.t = 0.0;
        Self { phi, t: 0.0, s: 0.0, step: 0, theta: theta(c_rescale, 0.0, alpha), c_rescale }
    }

    /// `φ̃ = φ − log Θ` at a node.
    pub fn phi_tilde(&self, node: usize) -> f64 {
        self.phi.phi(node) - self.theta.ln()
    }
}

/// `Θ(c, t) = ((1−α)t + e^{(1−α)c})^{1/(1−α)}`.
pub fn theta(c: f64, t: f64, alpha: f64) -> f64 {
    let a = 1.0 - alpha;
    (a * t + (a * c).exp()).powf(1.0 / a)
}

/// Flow time at which `Θ(c, ·)` reaches `target`.
pub fn time_for_theta(c: f64, target: f64, alpha: f64) -> f64 {
    let a = 1.0 - alpha;
    (target.powf(a) - (a * c).exp()) / a
}

/// Spatially constant solution with `φ(0) = c`; equals `log Θ(c, t)`.
pub fn radial_solution(t: f64, alpha: f64, c: f64) -> f64 {
    let a = 1.0 - alpha;
    (a * t + (a * c).exp()).ln() / a
}

/// Fills the ghost rows: reflection across ∂Ω (so the centred normal
/// derivative vanishes) and the pole/axis closure on the inner side.
pub fn apply_neumann_bc(phi: &mut GraphField, grid: &Grid) {
    let (rows, cols) = (grid.rows as isize, grid.cols);
    for j in 0..cols {
        let outer = phi.padded(rows - 2, j as isize);
        phi.set_ghost(false, j, outer);
        let inner = match (grid.dim(), grid.spec.mode) {
            (_, Mode::Full2d) => phi.padded(0, (j + cols / 2) as isize),
            _ => phi.padded(1, j as isize),
        };
        phi.set_ghost(true, j, inner);
    }
    phi.mark_ghosts_filled();
}

/// `dt = cfl / max_x Σ_ij |Q^{ij}| / (h_i h_j)` with metric spacings, clamped
/// to `[dt_min, dt_max]`.
pub fn stable_dt(lin: &LinearizationData, grid: &Grid, params: &FlowParams) -> Result<f64> {
    let mut worst = 0.0f64;
    for (node, q) in lin.qij.iter().enumerate() {
        let h = grid.metric_spacing(node);
        let rate = if q.dim == 1 {
            q.xx.abs() / (h[0] * h[0])
        } else {
            q.xx.abs() / (h[0] * h[0]) + 2.0 * q.xy.abs() / (h[0] * h[1]) + q.yy.abs() / (h[1] * h[1])
        };
        worst = worst.max(rate);
    }
    let dt = if worst > 0.0 { params.cfl / worst } else { params.dt_max };
    if !(dt > params.dt_min) {
        return Err(FlowError::DtUnderflow { dt, dt_min: params.dt_min });
    }
    Ok(dt.min(params.dt_max))
}

/// Everything the scheme knows about a state before stepping it.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub jets: Vec<Jet>,
    pub w: WField,
    pub speed: SpeedField,
    pub lin: LinearizationData,
}

/// Fills ghosts and evaluates jets, `w`, `Q` and its linearisation.
pub fn evaluate_state(state: &mut FlowState, params: &FlowParams, grid: &Grid) -> Result<Evaluation> {
    apply_neumann_bc(&mut state.phi, grid);
    let js = jets(&state.phi, grid)?;
    if let Some(node) = js.iter().position(|j| !(j.phi.is_finite() && j.hess.is_finite())) {
        return Err(FlowError::NaNDetected { node, step: state.step });
    }
    let w = w_from_jets(&js)?;
    w.require_admissible(params.eps_convex)?;
    let speed = speed_from_jets(&js, &w, params.alpha)?;
    let lin = linearize_from_jets(&js, &w, &speed, params.alpha);
    Ok(Evaluation { jets: js, w, speed, lin })
}

/// Forward Euler update with a given step.
pub fn advance(state: &mut FlowState, eval: &Evaluation, dt: f64, params: &FlowParams) -> Result<()> {
    let step = state.step;
    for (node, (v, q)) in state.phi.nodal_mut().iter_mut().zip(&eval.speed.q).enumerate() {
        *v += dt * q;
        if !v.is_finite() {
            return Err(FlowError::NaNDetected { node, step });
        }
    }
    let alpha = params.alpha;
    state.s += theta(state.c_rescale, state.t + 0.5 * dt, alpha).powf(alpha - 1.0) * dt;
    state.t += dt;
    state.phi.t = state.t;
    state.theta = theta(state.c_rescale, state.t, alpha);
    state.step += 1;
    Ok(())
}

/// Largest step that does not pass the stopping time.
fn remaining(state: &FlowState, params: &FlowParams) -> f64 {
    match params.stop {
        Stop::Time(t_end) => t_end - state.t,
        Stop::SlowTime(s_end) => {
            let target = state.theta * (s_end - state.s).exp();
            time_for_theta(state.c_rescale, target, params.alpha) - state.t
        }
    }
}

fn finished(state: &FlowState, params: &FlowParams) -> bool {
    match params.stop {
        Stop::Time(t_end) => state.t >= t_end * (1.0 - 1e-14),
        Stop::SlowTime(s_end) => state.s >= s_end - 1e-12,
    }
}

/// One explicit step with the stable step size. Returns the step taken.
pub fn step_explicit(state: &mut FlowState, params: &FlowParams, grid: &Grid) -> Result<f64> {
    let eval = evaluate_state(state, params, grid)?;
    let dt = stable_dt(&eval.lin, grid, params)?;
    let dt = dt.min(remaining(state, params).max(0.0));
    advance(state, &eval, dt, params)?;
    Ok(dt)
}

/// Observer invoked at every sample of a run.
pub trait Monitor {
    fn observe(&mut self, state: &FlowState, record: &EstimateRecord) -> Result<()>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    /// Sample every this many steps (the final state is always sampled).
    pub sample_every: usize,
    /// Keep nodal φ at each sample in the trajectory.
    pub keep_fields: bool,
    pub mutation: RecordMutation,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { sample_every: 10, keep_fields: true, mutation: RecordMutation::None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    pub s: f64,
    pub theta: f64,
    pub phi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
}

#[derive(Debug, Clone)]
pub struct FlowOutcome {
    pub state: FlowState,
    pub report: EstimateReport,
    pub trajectory: Trajectory,
}

/// Maximum one-sided `|D_μφ|` over the boundary.
pub fn boundary_normal_slope(phi: &GraphField, grid: &Grid) -> Result<f64> {
    let mut worst = 0.0f64;
    for node in grid.boundary_nodes() {
        let mu = crate::sphere_geometry::boundary_normal(grid, node)?;
        let g = one_sided_boundary_gradient(phi, grid, node)?;
        worst = worst.max((mu[0] * g[0] + mu[1] * g[1]).abs());
    }
    Ok(worst)
}

/// Checks the run preconditions and builds the initial state.
pub fn initial_state(initial: &GraphField, params: &FlowParams, grid: &Grid) -> Result<FlowState> {
    params.validate()?;
    let (lo, hi) = (initial.min(), initial.max());
    let c = params.c_rescale.unwrap_or(0.5 * (lo + hi));
    if !(c >= lo && c <= hi) {
        return Err(FlowError::InvalidParams(format!(
            "c_rescale = {c} must lie in the initial range [{lo}, {hi}]"
        )));
    }
    let tol = 10.0 * grid.h_r * grid.h_r;
    let residual = boundary_normal_slope(initial, grid)?;
    if residual > tol {
        return Err(FlowError::InitialDataIncompatible { residual, tol });
    }
    Ok(FlowState::new(initial.clone(), c, params.alpha))
}

/// Integrates from `initial` until the stopping time, sampling estimates on a
/// fixed cadence. Deterministic for identical inputs.
pub fn run_flow(
    initial: &GraphField,
    params: &FlowParams,
    grid: &Grid,
    options: &RunOptions,
    monitors: &mut [&mut dyn Monitor],
) -> Result<FlowOutcome> {
    let mut state = initial_state(initial, params, grid)?;
    let every = options.sample_every.max(1);
    let mut report = EstimateReport::default();
    let mut trajectory = Trajectory::default();
    loop {
        let eval = evaluate_state(&mut state, params, grid)?;
        let left = remaining(&state, params);
        let done = finished(&state, params) || left <= 1e-15 * state.t.max(1.0);
        if state.step % every == 0 || done {
            let record = EstimateRecord::from_evaluation(&state, &eval, grid, params, options.mutation)?;
            for m in monitors.iter_mut() {
                m.observe(&state, &record)?;
            }
            report.records.push(record);
            if options.keep_fields {
                trajectory.samples.push(TrajectorySample {
                    t: state.t,
                    s: state.s,
                    theta: state.theta,
                    phi: state.phi.nodal().to_vec(),
                });
            }
        }
        if done {
            break;
        }
        let dt = stable_dt(&eval.lin, grid, params)?.min(left);
        advance(&mut state, &eval, dt, params)?;
    }
    // Leave the final state with its ghost layer filled.
    apply_neumann_bc(&mut state.phi, grid);
    Ok(FlowOutcome { state, report, trajectory })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere_geometry::{build_grid, DomainSpec};
    use std::f64::consts::FRAC_PI_4;

    #[test]
    fn theta_closed_form() {
        assert!((theta(0.0, 2.0, 0.5) - 4.0).abs() < 1e-14);
        assert!((theta(0.3, 0.0, 0.25) - 0.3f64.exp()).abs() < 1e-14);
        // dΘ/dt = Θ^α.
        let (c, t, a) = (0.2, 1.3, 0.6);
        let h = 1e-5;
        let fd = (theta(c, t + h, a) - theta(c, t - h, a)) / (2.0 * h);
        let exact = theta(c, t, a).powf(a);
        assert!(((fd - exact) / exact).abs() < 1e-8);
        let target = theta(c, t, a);
        assert!((time_for_theta(c, target, a) - t).abs() < 1e-12);
    }

    #[test]
    fn radial_solution_values() {
        assert!((radial_solution(2.0, 0.5, 0.0) - 4f64.ln()).abs() < 1e-14);
        assert!((radial_solution(2.0, 0.5, 0.0) - 1.386294).abs() < 1e-6);
        assert!((radial_solution(0.0, 0.3, 0.7) - 0.7).abs() < 1e-15);
        let h = 1e-6;
        let slope = (radial_solution(h, 0.5, 0.0) - radial_solution(-h, 0.5, 0.0)) / (2.0 * h);
        assert!((slope - 1.0).abs() < 1e-8);
        for &(t, a, c) in &[(0.0, 0.5, 0.0), (1.7, 0.25, -0.4), (5.0, 0.75, 1.2)] {
            assert!((radial_solution(t, a, c) - theta(c, t, a).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn neumann_ghosts() {
        let grid = build_grid(DomainSpec::axisymmetric(FRAC_PI_4, 16)).unwrap();
        let mut phi = GraphField::from_nodal(&grid, &(0..16).map(|i| (i as f64 * 0.1).cos()).collect::<Vec<_>>()).unwrap();
        assert!(!phi.ghosts_filled());
        apply_neumann_bc(&mut phi, &grid);
        assert!(phi.ghosts_filled());
        assert_eq!(phi.padded(16, 0), phi.phi(14));
        assert_eq!(phi.padded(-1, 0), phi.phi(1));

        let mut c = GraphField::constant(&grid, 0.4);
        let before = c.clone();
        apply_neumann_bc(&mut c, &grid);
        assert_eq!(c, before);

        let grid = build_grid(DomainSpec::full2d(FRAC_PI_4, 8, 8)).unwrap();
        let vals: Vec<f64> = (0..grid.len()).map(|k| k as f64).collect();
        let mut phi = GraphField::from_nodal(&grid, &vals).unwrap();
        apply_neumann_bc(&mut phi, &grid);
        for j in 0..8 {
            assert_eq!(phi.padded(-1, j), phi.phi((j as usize + 4) % 8));
            assert_eq!(phi.padded(8, j), phi.phi(grid.index(6, j as usize)));
        }
    }

    #[test]
    fn stable_dt_on_constant_state() {
        let alpha = 0.5;
        let params = FlowParams::new(alpha, Stop::Time(1.0));
        let dt_for = |nr: usize| {
            let grid = build_grid(DomainSpec::axisymmetric(FRAC_PI_4, nr)).unwrap();
            let mut state = FlowState::new(GraphField::constant(&grid, 0.0), 0.0, alpha);
            let eval = evaluate_state(&mut state, &params, &grid).unwrap();
            (stable_dt(&eval.lin, &grid, &params).unwrap(), grid.h_r, eval.lin)
        };
        let (dt, h, lin) = dt_for(65);
        assert!((dt - params.cfl * h * h / (2.0 * alpha / 2.0)).abs() < 1e-15);
        let (dt2, _, _) = dt_for(129);
        assert!((dt / dt2 - 4.0).abs() < 0.4);
        // Scaling Q^{ij} by λ divides dt by λ.
        let scaled = LinearizationData { qij: lin.qij.iter().map(|q| 3.0 * *q).collect(), qk: lin.qk.clone() };
        let grid = build_grid(DomainSpec::axisymmetric(FRAC_PI_4, 65)).unwrap();
        assert!((stable_dt(&scaled, &grid, &params).unwrap() - dt / 3.0).abs() < 1e-15);

        let tight = FlowParams { dt_min: 1.0, dt_max: 2.0, ..params };
        assert!(matches!(stable_dt(&lin, &grid, &tight), Err(FlowError::DtUnderflow { .. })));
    }

    #[test]
    fn one_step_from_constant_state() {
        let grid = build_grid(DomainSpec::axisymmetric(FRAC_PI_4, 16)).unwrap();
        let (alpha, c) = (0.5, 0.3);
        let params = FlowParams::new(alpha, Stop::Time(1.0));
        let mut state = FlowState::new(GraphField::constant(&grid, c), c, alpha);
        let dt = step_explicit(&mut state, &params, &grid).unwrap();
        let expected = c + dt * ((alpha - 1.0) * c).exp();
        for k in 0..grid.len() {
            assert_eq!(state.phi.phi(k), expected);
        }
        assert_eq!(state.t, dt);
        assert_eq!(state.theta, theta(c, dt, alpha));
        assert!(state.s > 0.0);
    }

    #[test]
    fn param_validation() {
        let ok = FlowParams::new(0.5, Stop::Time(1.0));
        assert!(ok.validate().is_ok());
        for bad in [
            FlowParams { alpha: 1.0, ..ok },
            FlowParams { alpha: 0.0, ..ok },
            FlowParams { cfl: 0.6, ..ok },
            FlowParams { dt_min: 0.0, ..ok },
            FlowParams { stop: Stop::Time(-1.0), ..ok },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
