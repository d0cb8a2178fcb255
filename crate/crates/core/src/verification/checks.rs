use crate::error::{FlowError, Result};
use crate::graph_hypersurface::GraphField;
use crate::sphere_geometry::Grid;
use crate::time_integrator::{
    advance, evaluate_state, initial_state, radial_solution, stable_dt, FlowParams, Stop, Trajectory,
};

use super::EstimateReport;

/// Default tolerances of the estimate checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub c0: f64,
    pub m: f64,
    pub grad: f64,
    pub conv: f64,
    pub cmp: f64,
    pub detw_floor: f64,
    pub detw_ceil: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { c0: 1e-3, m: 1e-3, grad: 1e-6, conv: 1e-3, cmp: 1e-6, detw_floor: 1e-3, detw_ceil: 1e3 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, detail: detail.into() }
    }

    pub fn failed(name: impl Into<String>, err: &FlowError) -> Self {
        Self::new(name, false, format!("error: {err}"))
    }
}

/// Radial lower and upper barriers built from the initial extremes.
///
/// The result's detail reports the worst violation (positive means a bound
/// was crossed) and the smallest slack to either bound.
pub fn check_c0_sandwich(trajectory: &Trajectory, alpha: f64, tol: f64) -> CheckResult {
    let name = "c0_sandwich";
    let Some(first) = trajectory.samples.first() else {
        return CheckResult::new(name, false, "empty trajectory");
    };
    let lo0 = first.phi.iter().copied().fold(f64::INFINITY, f64::min);
    let hi0 = first.phi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut worst = f64::NEG_INFINITY;
    let mut slack = f64::INFINITY;
    for smp in &trajectory.samples {
        let lower = radial_solution(smp.t, alpha, lo0);
        let upper = radial_solution(smp.t, alpha, hi0);
        for &p in &smp.phi {
            worst = worst.max(lower - p).max(p - upper);
            slack = slack.min(p - lower).min(upper - p);
        }
    }
    CheckResult::new(name, worst <= tol, format!("worst violation {worst:.3e}, min slack {slack:.3e}"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonOutcome {
    pub check: CheckResult,
    /// `min (φ_hi − φ_lo)` over nodes and steps.
    pub min_gap: f64,
    pub steps: usize,
}

/// Evolves both initial data in lockstep (shared step size) and checks that
/// the nodewise order is kept.
pub fn check_comparison(
    initial_lo: &GraphField,
    initial_hi: &GraphField,
    params: &FlowParams,
    grid: &Grid,
    tol: f64,
) -> Result<ComparisonOutcome> {
    let t_end = match params.stop {
        Stop::Time(t) => t,
        Stop::SlowTime(_) => {
            return Err(FlowError::InvalidParams("comparison runs need a flow-time stop".into()));
        }
    };
    let mut lo = initial_state(initial_lo, params, grid)?;
    let mut hi = initial_state(initial_hi, params, grid)?;
    let gap = |lo: &GraphField, hi: &GraphField| {
        lo.nodal().iter().zip(hi.nodal()).map(|(a, b)| b - a).fold(f64::INFINITY, f64::min)
    };
    let mut min_gap = gap(&lo.phi, &hi.phi);
    while lo.t < t_end * (1.0 - 1e-14) {
        let el = evaluate_state(&mut lo, params, grid)?;
        let eh = evaluate_state(&mut hi, params, grid)?;
        let dt = stable_dt(&el.lin, grid, params)?.min(stable_dt(&eh.lin, grid, params)?).min(t_end - lo.t);
        advance(&mut lo, &el, dt, params)?;
        advance(&mut hi, &eh, dt, params)?;
        min_gap = min_gap.min(gap(&lo.phi, &hi.phi));
    }
    Ok(ComparisonOutcome {
        check: CheckResult::new(
            "comparison",
            min_gap >= -tol,
            format!("min gap {min_gap:.3e} over {} steps", lo.step),
        ),
        min_gap,
        steps: lo.step,
    })
}

/// `min{inf M₀, 1} ≤ M ≤ max{sup M₀, 1}` for `M = φ̇Θ^{1−α}`.
pub fn check_m_bracket(report: &EstimateReport, tol: f64) -> CheckResult {
    let name = "m_bracket";
    let Some(first) = report.first() else {
        return CheckResult::new(name, false, "empty report");
    };
    let lower = first.m_min.min(1.0);
    let upper = first.m_max.max(1.0);
    let worst = report
        .records
        .iter()
        .map(|r| (lower - r.m_min).max(r.m_max - upper))
        .fold(f64::NEG_INFINITY, f64::max);
    CheckResult::new(name, worst <= tol, format!("bracket [{lower:.6}, {upper:.6}], worst violation {worst:.3e}"))
}

/// `sup|Dφ|` never exceeds its initial value and never grows between samples.
pub fn check_gradient_monotone(report: &EstimateReport, tol: f64) -> CheckResult {
    let name = "gradient_monotone";
    let Some(first) = report.first() else {
        return CheckResult::new(name, false, "empty report");
    };
    let g0 = first.sup_grad_phi;
    let above_initial = report.records.iter().map(|r| r.sup_grad_phi - g0).fold(f64::NEG_INFINITY, f64::max);
    let step_growth = report
        .records
        .windows(2)
        .map(|w| w[1].sup_grad_phi - w[0].sup_grad_phi)
        .fold(f64::NEG_INFINITY, f64::max);
    let worst = above_initial.max(step_growth);
    CheckResult::new(
        name,
        worst <= tol,
        format!("initial {g0:.3e}, max growth over initial {above_initial:.3e}, max step growth {step_growth:.3e}"),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetwOutcome {
    pub check: CheckResult,
    /// Empirical `(min, max)` of `det(w)/det(σ)` over the run.
    pub range: (f64, f64),
    pub min_eig: f64,
}

pub fn check_detw_bounds(report: &EstimateReport, floor: f64, ceil: f64, eps_convex: f64) -> DetwOutcome {
    let lo = report.records.iter().map(|r| r.detw_min).fold(f64::INFINITY, f64::min);
    let hi = report.records.iter().map(|r| r.detw_max).fold(f64::NEG_INFINITY, f64::max);
    let me = report.records.iter().map(|r| r.mineig_w).fold(f64::INFINITY, f64::min);
    let passed = !report.records.is_empty() && lo >= floor && hi <= ceil && me > eps_convex;
    DetwOutcome {
        check: CheckResult::new("detw_bounds", passed, format!("det w in [{lo:.4}, {hi:.4}], min eig {me:.4}")),
        range: (lo, hi),
        min_eig: me,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceConfig {
    /// Slow time the run must reach.
    pub s_end: f64,
    /// Required `osc(φ̃)(end) / osc(φ̃)(0)`.
    pub decay_factor: f64,
    pub min_r2: f64,
    pub tol_conv: f64,
    /// Gradient samples at or below this are roundoff and are not fitted.
    pub fit_floor: f64,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self { s_end: 5.0, decay_factor: 1e-2, min_r2: 0.9, tol_conv: 1e-3, fit_floor: 1e-11 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceOutcome {
    pub check: CheckResult,
    /// Fitted exponential decay rate of `sup|Dφ̃|` in `s`; `None` when the
    /// gradient is zero from the start.
    pub lambda: Option<f64>,
    pub r2: Option<f64>,
    pub osc_ratio: f64,
    pub rel_std: f64,
}

/// Least-squares line through `(x, y)`: returns (slope, intercept, R²).
pub(crate) fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (slope, my - slope * mx, r2)
}

pub fn check_rescaled_convergence(report: &EstimateReport, cfg: &ConvergenceConfig) -> Result<ConvergenceOutcome> {
    let (Some(first), Some(last)) = (report.first(), report.last()) else {
        return Err(FlowError::InsufficientDecayWindow("empty report".into()));
    };
    if last.s < cfg.s_end - 1e-9 {
        return Err(FlowError::InsufficientDecayWindow(format!("run reached s = {} < {}", last.s, cfg.s_end)));
    }
    let osc_ratio = if first.osc_phitilde > 0.0 { last.osc_phitilde / first.osc_phitilde } else { 0.0 };
    let rel_std = last.utilde_rel_std;

    let (lambda, r2) = if first.sup_grad_phitilde <= cfg.fit_floor {
        (None, None)
    } else {
        let (s, y): (Vec<f64>, Vec<f64>) = report
            .records
            .iter()
            .filter(|r| r.sup_grad_phitilde > cfg.fit_floor)
            .map(|r| (r.s, r.sup_grad_phitilde.ln()))
            .unzip();
        if s.len() < 3 || s.last().unwrap() - s[0] <= 0.0 {
            return Err(FlowError::InsufficientDecayWindow(format!(
                "{} usable gradient samples above {:e}",
                s.len(),
                cfg.fit_floor
            )));
        }
        let (slope, _, r2) = linear_fit(&s, &y);
        (Some(-slope), Some(r2))
    };

    let fit_ok = match (lambda, r2) {
        (Some(l), Some(r2)) => l > 0.0 && r2 >= cfg.min_r2,
        _ => true,
    };
    let osc_ok = first.osc_phitilde == 0.0 || last.osc_phitilde <= cfg.decay_factor * first.osc_phitilde;
    let passed = fit_ok && osc_ok && rel_std <= cfg.tol_conv;
    let fit = match (lambda, r2) {
        (Some(l), Some(r2)) => format!("lambda {l:.4} (R^2 {r2:.4})"),
        _ => "no gradient to fit".to_string(),
    };
    Ok(ConvergenceOutcome {
        check: CheckResult::new(
            "rescaled_convergence",
            passed,
            format!("{fit}, osc ratio {osc_ratio:.3e}, std/mean(u~) {rel_std:.3e}"),
        ),
        lambda,
        r2,
        osc_ratio,
        rel_std,
    })
}

/// Boundary orthogonality residual stays below `factor · h²` at every sample.
pub fn check_orthogonality(report: &EstimateReport, h: f64, factor: f64) -> CheckResult {
    let worst = report.records.iter().map(|r| r.bdry_ortho_residual).fold(0.0, f64::max);
    let bound = factor * h * h;
    CheckResult::new("boundary_orthogonality", worst <= bound, format!("max {worst:.3e} vs bound {bound:.3e}"))
}
