use std::f64::consts::{FRAC_PI_4, PI};

use gcflow::error::FlowError;
use gcflow::graph_hypersurface::GraphField;
use gcflow::sphere_geometry::{build_grid, DomainSpec};
use gcflow::time_integrator::{run_flow, FlowParams, FlowState, Monitor, RunOptions, Stop};
use gcflow::verification::{
    bump_field, check_c0_sandwich, check_comparison, check_gradient_monotone, check_m_bracket, check_orthogonality,
    offset_field, EstimateRecord, EstimateReport, RecordMutation,
};

fn params(alpha: f64, stop: Stop) -> FlowParams {
    FlowParams::new(alpha, stop)
}

#[test]
fn radial_data_stays_radial_for_several_exponents() {
    for alpha in [0.25, 0.5, 0.75] {
        for spec in [DomainSpec::axisymmetric(FRAC_PI_4, 32), DomainSpec::arc(FRAC_PI_4, 32)] {
            let grid = build_grid(spec).unwrap();
            let mut p = params(alpha, Stop::Time(1.0));
            p.c_rescale = Some(0.2);
            let out = run_flow(&GraphField::constant(&grid, 0.2), &p, &grid, &RunOptions::default(), &mut []).unwrap();
            let exact = gcflow::radial_solution(1.0, alpha, 0.2);
            for v in out.state.phi.nodal() {
                assert!((v - exact).abs() < 1e-3);
            }
            let last = out.report.last().unwrap();
            assert!(last.osc_phitilde <= 1e-12 && last.sup_grad_phi <= 1e-12);
            assert!((last.detw_min - 1.0).abs() < 1e-12);
            assert!(out.report.is_well_formed());
        }
    }
}

#[test]
fn comparison_with_identical_data_has_zero_gap() {
    let grid = build_grid(DomainSpec::axisymmetric(FRAC_PI_4, 24)).unwrap();
    let f = bump_field(&grid, 0.05, FRAC_PI_4);
    let out = check_comparison(&f, &f, &params(0.5, Stop::Time(0.5)), &grid, 1e-6).unwrap();
    assert_eq!(out.min_gap, 0.0);
    assert!(out.check.passed);
}

#[test]
fn comparison_with_offset_keeps_order() {
    let grid = build_grid(DomainSpec::axisymmetric(FRAC_PI_4, 24)).unwrap();
    let lo = bump_field(&grid, 0.05, FRAC_PI_4);
    let hi = offset_field(&grid, &lo, 0.1).unwrap();
    let out = check_comparison(&lo, &hi, &params(0.5, Stop::Time(1.0)), &grid, 1e-6).unwrap();
    assert!(out.check.passed && out.min_gap > 0.0, "{:?}", out.check);
}

#[test]
fn c0_check_flags_post_hoc_shift() {
    let grid = build_grid(DomainSpec::axisymmetric(FRAC_PI_4, 24)).unwrap();
    let init = bump_field(&grid, 0.05, FRAC_PI_4);
    let p = params(0.5, Stop::Time(0.5));
    let mut out = run_flow(&init, &p, &grid, &RunOptions::default(), &mut []).unwrap();
    let ok = check_c0_sandwich(&out.trajectory, 0.5, 1e-3);
    assert!(ok.passed, "{ok:?}");
    let last = out.trajectory.samples.last_mut().unwrap();
    last.phi[5] += 1.0;
    assert!(!check_c0_sandwich(&out.trajectory, 0.5, 1e-3).passed);
}

#[test]
fn wrong_theta_exponent_breaks_m_bracket() {
    let grid = build_grid(DomainSpec::axisymmetric(FRAC_PI_4, 24)).unwrap();
    let init = bump_field(&grid, 0.05, FRAC_PI_4);
    let p = params(0.5, Stop::Time(2.0));
    let good = run_flow(&init, &p, &grid, &RunOptions::default(), &mut []).unwrap();
    assert!(check_m_bracket(&good.report, 1e-3).passed);
    let opts = RunOptions { mutation: RecordMutation::WrongThetaExponent, ..RunOptions::default() };
    let bad = run_flow(&init, &p, &grid, &opts, &mut []).unwrap();
    assert!(!check_m_bracket(&bad.report, 1e-3).passed);
}

#[test]
fn full_cap_run_with_angular_perturbation() {
    let grid = build_grid(DomainSpec::full2d(FRAC_PI_4, 16, 32)).unwrap();
    let init = GraphField::from_fn(&grid, |r, th| {
        0.02 * (PI * r / FRAC_PI_4).cos() + 0.02 * (PI * r / (2.0 * FRAC_PI_4)).sin().powi(2) * (2.0 * th).cos()
    });
    let out = run_flow(&init, &params(0.5, Stop::SlowTime(1.0)), &grid, &RunOptions::default(), &mut []).unwrap();
    let first = out.report.first().unwrap();
    let last = out.report.last().unwrap();
    assert!(out.report.is_well_formed());
    assert!(last.osc_phitilde < 0.2 * first.osc_phitilde, "{} -> {}", first.osc_phitilde, last.osc_phitilde);
    assert!(check_m_bracket(&out.report, 1e-3).passed);
    assert!(check_gradient_monotone(&out.report, 1e-6).passed);
    assert!(check_orthogonality(&out.report, grid.h_r, 10.0).passed);
}

#[test]
fn runs_are_deterministic() {
    let grid = build_grid(DomainSpec::axisymmetric(FRAC_PI_4, 24)).unwrap();
    let init = bump_field(&grid, 0.05, FRAC_PI_4);
    let p = params(0.5, Stop::SlowTime(0.5));
    let a = run_flow(&init, &p, &grid, &RunOptions::default(), &mut []).unwrap();
    let b = run_flow(&init, &p, &grid, &RunOptions::default(), &mut []).unwrap();
    assert_eq!(a.report.to_csv(), b.report.to_csv());
    assert_eq!(a.state.phi.nodal(), b.state.phi.nodal());
}

#[test]
fn slow_time_stop_is_exact() {
    let grid = build_grid(DomainSpec::arc(FRAC_PI_4, 24)).unwrap();
    let out = run_flow(
        &bump_field(&grid, 0.05, FRAC_PI_4),
        &params(0.5, Stop::SlowTime(0.75)),
        &grid,
        &RunOptions::default(),
        &mut [],
    )
    .unwrap();
    assert!((out.state.s - 0.75).abs() < 1e-9, "{}", out.state.s);
}

#[test]
fn inadmissible_data_is_rejected() {
    let grid = build_grid(DomainSpec::axisymmetric(FRAC_PI_4, 24)).unwrap();
    let err = run_flow(
        &bump_field(&grid, 1.0, FRAC_PI_4),
        &params(0.5, Stop::Time(1.0)),
        &grid,
        &RunOptions::default(),
        &mut [],
    )
    .unwrap_err();
    assert!(matches!(err, FlowError::NonAdmissible { .. }), "{err}");
}

#[test]
fn neumann_incompatible_data_is_rejected() {
    let grid = build_grid(DomainSpec::axisymmetric(FRAC_PI_4, 24)).unwrap();
    let init = GraphField::from_fn(&grid, |r, _| 0.05 * r * r);
    let err = run_flow(&init, &params(0.5, Stop::Time(1.0)), &grid, &RunOptions::default(), &mut []).unwrap_err();
    assert!(matches!(err, FlowError::InitialDataIncompatible { .. }), "{err}");
}

#[test]
fn invalid_exponent_is_rejected() {
    let grid = build_grid(DomainSpec::axisymmetric(FRAC_PI_4, 16)).unwrap();
    for alpha in [0.0, 1.0, 1.2] {
        let err = run_flow(
            &GraphField::constant(&grid, 0.0),
            &params(alpha, Stop::Time(1.0)),
            &grid,
            &RunOptions::default(),
            &mut [],
        )
        .unwrap_err();
        assert!(matches!(err, FlowError::InvalidParams(_)));
    }
}

struct Counter(usize, f64);

impl Monitor for Counter {
    fn observe(&mut self, _: &FlowState, r: &EstimateRecord) -> gcflow::Result<()> {
        assert!(r.t >= self.1);
        self.0 += 1;
        self.1 = r.t;
        Ok(())
    }
}

#[test]
fn monitors_see_every_sample() {
    let grid = build_grid(DomainSpec::axisymmetric(FRAC_PI_4, 16)).unwrap();
    let mut c = Counter(0, 0.0);
    let out = run_flow(
        &GraphField::constant(&grid, 0.0),
        &params(0.5, Stop::Time(0.2)),
        &grid,
        &RunOptions::default(),
        &mut [&mut c],
    )
    .unwrap();
    assert_eq!(c.0, out.report.records.len());
    // Re-checking from the saved CSV gives the same verdicts.
    let back = EstimateReport::read_csv(out.report.to_csv().as_bytes()).unwrap();
    assert_eq!(check_m_bracket(&back, 1e-3), check_m_bracket(&out.report, 1e-3));
}
