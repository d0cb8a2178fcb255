use std::f64::consts::{FRAC_PI_4, PI};
use std::fmt::Write as _;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::error::Result;
use crate::flow_operator::{sample_cap_points, verify_commutator_identities, AmbientLinearField, IdentityMutation};
use crate::graph_hypersurface::GraphField;
use crate::sphere_geometry::{build_grid, DomainSpec, Grid, Mode};
use crate::time_integrator::{radial_solution, run_flow, FlowOutcome, FlowParams, RunOptions, Stop};

use super::checks::*;
use super::oracles::{geometry_convergence, linearization_oracle};
use super::RecordMutation;

/// Seeded defects that the battery must catch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mutation {
    #[default]
    None,
    /// Sign error in the `2u_iu_j/u` term of the second fundamental form.
    HSign,
    /// `Θ^{1+α}` in place of `Θ^{1−α}` when recording `M`.
    ThetaExponent,
    /// The first commutator identity evaluated with the opposite sign on
    /// the third-derivative term.
    IdentitySign,
}

impl FromStr for Mutation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "none" => Ok(Self::None),
            "h-sign" => Ok(Self::HSign),
            "theta-exponent" => Ok(Self::ThetaExponent),
            "identity-sign" => Ok(Self::IdentitySign),
            other => Err(format!("unknown mutation '{other}' (expected none, h-sign, theta-exponent, identity-sign)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatteryConfig {
    pub alpha: f64,
    /// Radial resolution of the flow scenarios.
    pub nr: usize,
    pub seed: u64,
    pub mutation: Mutation,
    /// Worker threads; `None` reads `GCFLOW_THREADS` (absent means one).
    pub threads: Option<usize>,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        Self { alpha: 0.5, nr: 64, seed: 7, mutation: Mutation::None, threads: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub name: &'static str,
    pub checks: Vec<CheckResult>,
    pub elapsed: Duration,
    /// Fitted gradient decay rate, for scenarios that produce one.
    pub lambda_hat: Option<f64>,
    pub final_osc: Option<f64>,
}

impl ScenarioResult {
    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.passed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatteryReport {
    pub config: BatteryConfig,
    pub scenarios: Vec<ScenarioResult>,
    pub elapsed: Duration,
}

impl BatteryReport {
    pub fn all_passed(&self) -> bool {
        self.scenarios.iter().all(ScenarioResult::passed)
    }

    pub fn scenario(&self, name: &str) -> Option<&ScenarioResult> {
        self.scenarios.iter().find(|s| s.name == name)
    }

    /// Fixed-width pass/fail table, one line per check.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<20} {:<24} {:<6} detail", "scenario", "check", "result");
        for sc in &self.scenarios {
            for c in &sc.checks {
                let verdict = if c.passed { "PASS" } else { "FAIL" };
                let _ = writeln!(out, "{:<20} {:<24} {:<6} {}", sc.name, c.name, verdict, c.detail);
            }
        }
        let passed = self.scenarios.iter().filter(|s| s.passed()).count();
        let _ = writeln!(
            out,
            "{passed}/{} scenarios passed (alpha = {}, nr = {}) in {:.1} s",
            self.scenarios.len(),
            self.config.alpha,
            self.config.nr,
            self.elapsed.as_secs_f64()
        );
        out
    }
}

/// Thread count from `GCFLOW_THREADS`; absent or unparsable means one.
pub fn threads_from_env() -> usize {
    std::env::var("GCFLOW_THREADS").ok().and_then(|v| v.trim().parse::<usize>().ok()).filter(|&n| n > 0).unwrap_or(1)
}

/// Raised-cosine bump `A(1 + cos(πr/w))/2` for `|r| < w`, zero outside.
pub fn bump_field(grid: &Grid, amplitude: f64, width: f64) -> GraphField {
    GraphField::from_fn(grid, move |r, _| {
        if r.abs() < width {
            0.5 * amplitude * (1.0 + (PI * r / width).cos())
        } else {
            0.0
        }
    })
}

/// `base + shift` at every node, ghosts refilled by the boundary rule.
pub fn offset_field(grid: &Grid, base: &GraphField, shift: f64) -> Result<GraphField> {
    let vals: Vec<f64> = base.nodal().iter().map(|p| p + shift).collect();
    let mut f = GraphField::from_nodal(grid, &vals)?;
    crate::time_integrator::apply_neumann_bc(&mut f, grid);
    Ok(f)
}

const SCENARIOS: [&str; 8] =
    ["radial_n2", "radial_n1", "perturbed_cap", "comparison", "identities", "linearization", "convergence_order", "geometry"];

type Checks = (Vec<CheckResult>, Option<f64>, Option<f64>);

/// Runs every canonical scenario (in parallel) and collects the table.
/// A failing scenario never stops the others.
pub fn scenario_battery(cfg: &BatteryConfig) -> BatteryReport {
    let start = Instant::now();
    let threads = cfg.threads.unwrap_or_else(threads_from_env).max(1);
    let run_all = || {
        SCENARIOS
            .par_iter()
            .map(|&name| {
                let t0 = Instant::now();
                let (checks, lambda_hat, final_osc) = run_scenario(name, cfg)
                    .unwrap_or_else(|e| (vec![CheckResult::failed("run", &e)], None, None));
                ScenarioResult { name, checks, elapsed: t0.elapsed(), lambda_hat, final_osc }
            })
            .collect::<Vec<_>>()
    };
    let scenarios = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(run_all),
        Err(_) => run_all(),
    };
    BatteryReport { config: *cfg, scenarios, elapsed: start.elapsed() }
}

fn run_scenario(name: &str, cfg: &BatteryConfig) -> Result<Checks> {
    match name {
        "radial_n2" => radial(cfg, 2),
        "radial_n1" => radial(cfg, 1),
        "perturbed_cap" => perturbed(cfg),
        "comparison" => comparison(cfg),
        "identities" => identities(cfg),
        "linearization" => linearization(cfg),
        "convergence_order" => convergence_order(cfg),
        "geometry" => geometry(cfg),
        _ => unreachable!("unknown scenario {name}"),
    }
}

fn record_mutation(cfg: &BatteryConfig) -> RecordMutation {
    match cfg.mutation {
        Mutation::ThetaExponent => RecordMutation::WrongThetaExponent,
        _ => RecordMutation::None,
    }
}

fn radial_grid(n: usize, nr: usize) -> Result<Grid> {
    build_grid(if n == 1 { DomainSpec::arc(FRAC_PI_4, nr) } else { DomainSpec::axisymmetric(FRAC_PI_4, nr) })
}

/// Flow from `φ₀ ≡ 0` to `t = 1`, returning the run and its nodal error.
pub(crate) fn radial_run(alpha: f64, n: usize, nr: usize, options: &RunOptions) -> Result<(FlowOutcome, f64)> {
    let grid = radial_grid(n, nr)?;
    let mut params = FlowParams::new(alpha, Stop::Time(1.0));
    params.c_rescale = Some(0.0);
    let out = run_flow(&GraphField::constant(&grid, 0.0), &params, &grid, options, &mut [])?;
    let exact = radial_solution(out.state.t, alpha, 0.0);
    let err = out.state.phi.nodal().iter().map(|p| (p - exact).abs()).fold(0.0, f64::max);
    Ok((out, err))
}

fn radial(cfg: &BatteryConfig, n: usize) -> Result<Checks> {
    let options = RunOptions { mutation: record_mutation(cfg), ..RunOptions::default() };
    let (out, err) = radial_run(cfg.alpha, n, cfg.nr, &options)?;
    let grid = radial_grid(n, cfg.nr)?;
    let tol = Tolerances::default();
    let m_dev = out.report.records.iter().map(|r| (r.m_min - 1.0).abs().max((r.m_max - 1.0).abs())).fold(0.0, f64::max);
    let checks = vec![
        CheckResult::new("radial_exactness", err <= 1e-3, format!("max |phi - exact| {err:.3e} at t = {}", out.state.t)),
        CheckResult::new("m_identically_one", m_dev <= tol.m, format!("max |M - 1| {m_dev:.3e}")),
        check_c0_sandwich(&out.trajectory, cfg.alpha, tol.c0),
        check_m_bracket(&out.report, tol.m),
        check_gradient_monotone(&out.report, tol.grad),
        check_detw_bounds(&out.report, tol.detw_floor, tol.detw_ceil, FlowParams::new(cfg.alpha, Stop::Time(1.0)).eps_convex)
            .check,
        check_orthogonality(&out.report, grid.h_r, 10.0),
    ];
    let osc = out.report.last().map(|r| r.osc_phitilde);
    Ok((checks, None, osc))
}

fn perturbed(cfg: &BatteryConfig) -> Result<Checks> {
    let grid = build_grid(DomainSpec::axisymmetric(FRAC_PI_4, cfg.nr))?;
    let initial = bump_field(&grid, 0.05, FRAC_PI_4);
    let conv = ConvergenceConfig::default();
    let params = FlowParams::new(cfg.alpha, Stop::SlowTime(conv.s_end));
    let options = RunOptions { mutation: record_mutation(cfg), ..RunOptions::default() };
    let out = run_flow(&initial, &params, &grid, &options, &mut [])?;
    let tol = Tolerances::default();
    let mut checks = vec![
        check_c0_sandwich(&out.trajectory, cfg.alpha, tol.c0),
        check_m_bracket(&out.report, tol.m),
        check_gradient_monotone(&out.report, tol.grad),
        check_detw_bounds(&out.report, tol.detw_floor, tol.detw_ceil, params.eps_convex).check,
        check_orthogonality(&out.report, grid.h_r, 10.0),
    ];
    let mut lambda = None;
    match check_rescaled_convergence(&out.report, &conv) {
        Ok(c) => {
            lambda = c.lambda;
            checks.push(c.check);
        }
        Err(e) => checks.push(CheckResult::failed("rescaled_convergence", &e)),
    }
    Ok((checks, lambda, out.report.last().map(|r| r.osc_phitilde)))
}

fn comparison(cfg: &BatteryConfig) -> Result<Checks> {
    let grid = build_grid(DomainSpec::axisymmetric(FRAC_PI_4, cfg.nr))?;
    let lo = bump_field(&grid, 0.05, FRAC_PI_4);
    let hi = offset_field(&grid, &lo, 0.1)?;
    let params = FlowParams::new(cfg.alpha, Stop::Time(2.0));
    let out = check_comparison(&lo, &hi, &params, &grid, Tolerances::default().cmp)?;
    Ok((vec![out.check], None, None))
}

/// Ambient linear test fields drawn from the seed.
pub(crate) fn identity_fields(seed: u64, count: usize) -> Vec<AmbientLinearField> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x1d);
    (0..count)
        .map(|_| AmbientLinearField {
            c0: rng.gen_range(-0.5..0.5),
            a: [rng.gen_range(-0.4..0.4), rng.gen_range(-0.4..0.4), rng.gen_range(-0.4..0.4)],
        })
        .collect()
}

fn identities(cfg: &BatteryConfig) -> Result<Checks> {
    let grid = build_grid(DomainSpec::axisymmetric(FRAC_PI_4, 16))?;
    let points = sample_cap_points(&grid, 100, cfg.seed);
    let fields = identity_fields(cfg.seed, 5);
    let baseline = if cfg.mutation == Mutation::IdentitySign {
        IdentityMutation::FlipThirdDerivativeSign
    } else {
        IdentityMutation::None
    };
    let res = verify_commutator_identities(&fields, &points, baseline)?;
    let mut checks = vec![CheckResult::new(
        "identity_residuals",
        res.max() <= 1e-10,
        format!(
            "max residuals {:.2e} / {:.2e} / {:.2e} / {:.2e}",
            res.second_order, res.first_order, res.w11_k, res.w1k_1
        ),
    )];
    for (label, m) in [
        ("detects_curvature_drop", IdentityMutation::DropCurvatureTerm),
        ("detects_third_sign", IdentityMutation::FlipThirdDerivativeSign),
        ("detects_trailing_drop", IdentityMutation::DropTrailingTerm),
    ] {
        let r = verify_commutator_identities(&fields, &points, m)?.max();
        checks.push(CheckResult::new(label, r > 1e-3, format!("mutated residual {r:.3e}")));
    }
    Ok((checks, None, None))
}

fn linearization(cfg: &BatteryConfig) -> Result<Checks> {
    let out = linearization_oracle(cfg.alpha, 50, cfg.seed)?;
    let check = CheckResult::new(
        "linearization_oracle",
        out.max_rel_err() <= 1e-6,
        format!(
            "{} fields, {} nodes, rel err Q^ij {:.2e}, Q^k {:.2e}",
            out.fields, out.nodes, out.max_rel_err_qij, out.max_rel_err_qk
        ),
    );
    Ok((vec![check], None, None))
}

fn convergence_order(cfg: &BatteryConfig) -> Result<Checks> {
    let options = RunOptions { sample_every: usize::MAX, keep_fields: false, mutation: RecordMutation::None };
    let (_, coarse) = radial_run(cfg.alpha, 2, cfg.nr, &options)?;
    let (_, fine) = radial_run(cfg.alpha, 2, 2 * cfg.nr - 1, &options)?;
    let ratio = coarse / fine;
    Ok((
        vec![CheckResult::new(
            "error_ratio",
            ratio >= 3.5,
            format!("errors {coarse:.3e} -> {fine:.3e}, ratio {ratio:.2}"),
        )],
        None,
        None,
    ))
}

fn geometry(cfg: &BatteryConfig) -> Result<Checks> {
    let seeded = cfg.mutation == Mutation::HSign;
    let mut checks = Vec::new();
    for (mode, res) in [(Mode::Axisymmetric, [33, 65, 129]), (Mode::Full2d, [16, 32, 64])] {
        let st = geometry_convergence(mode, &res, cfg.alpha, seeded)?;
        let label = if mode == Mode::Full2d { "full2d" } else { "axisymmetric" };
        checks.push(CheckResult::new(
            format!("{label}_order"),
            st.min_order() >= 1.9,
            format!(
                "orders g {:.2} h {:.2} K {:.2}; finest K err {:.2e}",
                st.order_g,
                st.order_h,
                st.order_k,
                st.err_k.last().copied().unwrap_or(f64::NAN)
            ),
        ));
        let gap = st.k_form_gap.max(st.q_form_gap);
        checks.push(CheckResult::new(
            format!("{label}_forms_agree"),
            gap <= 1e-10,
            format!("K forms {:.2e}, Q forms {:.2e}", st.k_form_gap, st.q_form_gap),
        ));
    }
    Ok((checks, None, None))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mutation_names() {
        assert_eq!("h-sign".parse::<Mutation>().unwrap(), Mutation::HSign);
        assert_eq!("none".parse::<Mutation>().unwrap(), Mutation::None);
        assert!("hsign".parse::<Mutation>().is_err());
    }

    #[test]
    fn bump_is_flat_at_the_rim() {
        let grid = build_grid(DomainSpec::axisymmetric(FRAC_PI_4, 16)).unwrap();
        let b = bump_field(&grid, 0.05, FRAC_PI_4);
        assert!((b.phi(0) - 0.05).abs() < 1e-15);
        assert!(b.phi(grid.len() - 1).abs() < 1e-15);
    }
}
