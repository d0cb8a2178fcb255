//! Python bindings: grids, fields, flow runs, estimate reports and the
//! scenario battery.

use std::collections::HashMap;
use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use gcflow::cli_io::{execute, parse_config};
use gcflow::flow_operator::compute_w;
use gcflow::graph_hypersurface::gauss_curvature_log;
use gcflow::time_integrator::{FlowOutcome, RunOptions, Stop};
use gcflow::verification::{bump_field, scenario_battery, BatteryConfig, EstimateRecord, Mutation};
use gcflow::{build_grid, DomainSpec, FlowParams, GraphField, Grid};

create_exception!(gcflow_py, FlowError, PyRuntimeError);

fn flow_err(e: gcflow::FlowError) -> PyErr {
    FlowError::new_err(e.to_string())
}

/// Polar grid over a geodesic cap (n = 2) or a symmetric arc (n = 1).
#[pyclass(name = "Grid", frozen)]
struct PyGrid {
    inner: Grid,
}

#[pymethods]
impl PyGrid {
    #[new]
    #[pyo3(signature = (n, rho, nr, mode = "axisymmetric", ntheta = 0))]
    fn new(n: usize, rho: f64, nr: usize, mode: &str, ntheta: usize) -> PyResult<Self> {
        let spec = match (n, mode) {
            (1, _) => DomainSpec::arc(rho, nr),
            (_, "axisymmetric") => DomainSpec::axisymmetric(rho, nr),
            (_, "full2d") => DomainSpec::full2d(rho, nr, ntheta),
            (_, other) => return Err(PyValueError::new_err(format!("unknown mode '{other}'"))),
        };
        let spec = DomainSpec { n, ..spec };
        Ok(Self { inner: build_grid(spec).map_err(flow_err)? })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn h_r(&self) -> f64 {
        self.inner.h_r
    }

    /// Node radii (signed on an arc).
    #[getter]
    fn r(&self) -> Vec<f64> {
        self.inner.nodes.iter().map(|n| n.r).collect()
    }

    #[getter]
    fn theta(&self) -> Vec<f64> {
        self.inner.nodes.iter().map(|n| n.theta).collect()
    }
}

/// Nodal values of `φ = log u`.
#[pyclass(name = "Field", frozen)]
struct PyField {
    inner: GraphField,
}

#[pymethods]
impl PyField {
    #[staticmethod]
    fn constant(grid: &PyGrid, value: f64) -> Self {
        Self { inner: GraphField::constant(&grid.inner, value) }
    }

    /// Raised-cosine bump of the given amplitude and radius.
    #[staticmethod]
    fn bump(grid: &PyGrid, amplitude: f64, width: f64) -> Self {
        Self { inner: bump_field(&grid.inner, amplitude, width) }
    }

    /// Nodal values in grid order; ghosts follow the Neumann rule.
    #[staticmethod]
    fn from_values(grid: &PyGrid, values: Vec<f64>) -> PyResult<Self> {
        let mut f = GraphField::from_nodal(&grid.inner, &values).map_err(flow_err)?;
        gcflow::time_integrator::apply_neumann_bc(&mut f, &grid.inner);
        Ok(Self { inner: f })
    }

    fn values(&self) -> Vec<f64> {
        self.inner.nodal().to_vec()
    }

    fn gauss_curvature(&self, grid: &PyGrid) -> PyResult<Vec<f64>> {
        gauss_curvature_log(&self.inner, &grid.inner).map_err(flow_err)
    }

    /// Smallest eigenvalue of `w = σ − D²φ + Dφ⊗Dφ` over the nodes.
    fn min_eig_w(&self, grid: &PyGrid) -> PyResult<f64> {
        Ok(compute_w(&self.inner, &grid.inner).map_err(flow_err)?.min_eig_overall())
    }
}

#[pyclass(name = "FlowParams", frozen)]
struct PyFlowParams {
    inner: FlowParams,
}

#[pymethods]
impl PyFlowParams {
    /// Exactly one of `t_end` and `s_end` must be given.
    #[new]
    #[pyo3(signature = (alpha, t_end = None, s_end = None, cfl = 0.4, c_rescale = None))]
    fn new(alpha: f64, t_end: Option<f64>, s_end: Option<f64>, cfl: f64, c_rescale: Option<f64>) -> PyResult<Self> {
        let stop = match (t_end, s_end) {
            (Some(t), None) => Stop::Time(t),
            (None, Some(s)) => Stop::SlowTime(s),
            _ => return Err(PyValueError::new_err("give exactly one of t_end, s_end")),
        };
        let mut p = FlowParams::new(alpha, stop);
        p.cfl = cfl;
        p.c_rescale = c_rescale;
        p.validate().map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Self { inner: p })
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha
    }
}

fn record_dict(r: &EstimateRecord) -> HashMap<&'static str, f64> {
    HashMap::from([
        ("t", r.t),
        ("s", r.s),
        ("theta", r.theta),
        ("sup_grad_phi", r.sup_grad_phi),
        ("m_min", r.m_min),
        ("m_max", r.m_max),
        ("detw_min", r.detw_min),
        ("detw_max", r.detw_max),
        ("mineig_w", r.mineig_w),
        ("osc_phitilde", r.osc_phitilde),
        ("sup_grad_phitilde", r.sup_grad_phitilde),
        ("bdry_ortho_residual", r.bdry_ortho_residual),
    ])
}

/// Final state and estimate report of a run.
#[pyclass(name = "FlowResult", frozen)]
struct PyFlowResult {
    inner: FlowOutcome,
}

#[pymethods]
impl PyFlowResult {
    #[getter]
    fn t(&self) -> f64 {
        self.inner.state.t
    }

    #[getter]
    fn s(&self) -> f64 {
        self.inner.state.s
    }

    #[getter]
    fn steps(&self) -> usize {
        self.inner.state.step
    }

    fn phi(&self) -> Vec<f64> {
        self.inner.state.phi.nodal().to_vec()
    }

    fn records(&self) -> Vec<HashMap<&'static str, f64>> {
        self.inner.report.records.iter().map(record_dict).collect()
    }

    fn report_csv(&self) -> String {
        self.inner.report.to_csv()
    }
}

#[pyfunction]
#[pyo3(signature = (initial, params, grid, sample_every = 10))]
fn run_flow(
    py: Python<'_>,
    initial: &PyField,
    params: &PyFlowParams,
    grid: &PyGrid,
    sample_every: usize,
) -> PyResult<PyFlowResult> {
    let opts = RunOptions { sample_every, keep_fields: false, ..RunOptions::default() };
    let out = py
        .detach(|| gcflow::run_flow(&initial.inner, &params.inner, &grid.inner, &opts, &mut []))
        .map_err(flow_err)?;
    Ok(PyFlowResult { inner: out })
}

/// Runs a configuration file (report and snapshots are written as configured).
#[pyfunction]
fn run_config(py: Python<'_>, path: PathBuf) -> PyResult<PyFlowResult> {
    let cfg = parse_config(&path).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let a = py.detach(|| execute(&cfg)).map_err(flow_err)?;
    Ok(PyFlowResult { inner: a.outcome })
}

/// `Θ(c, t) = ((1−α)t + e^{(1−α)c})^{1/(1−α)}`.
#[pyfunction]
fn theta(c: f64, t: f64, alpha: f64) -> f64 {
    gcflow::theta(c, t, alpha)
}

#[pyfunction]
fn radial_solution(t: f64, alpha: f64, c: f64) -> f64 {
    gcflow::radial_solution(t, alpha, c)
}

#[pyfunction]
fn beta(alpha: f64, n: usize) -> PyResult<f64> {
    gcflow::beta(alpha, n).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Runs the scenario battery; returns `(all_passed, table)`.
#[pyfunction]
#[pyo3(signature = (alpha = 0.5, grid = 64, mutate = None, seed = 7))]
fn verify(py: Python<'_>, alpha: f64, grid: usize, mutate: Option<&str>, seed: u64) -> PyResult<(bool, String)> {
    let mutation: Mutation = mutate.unwrap_or("none").parse().map_err(PyValueError::new_err)?;
    let cfg = BatteryConfig { alpha, nr: grid, seed, mutation, threads: None };
    let report = py.detach(|| scenario_battery(&cfg));
    Ok((report.all_passed(), report.table()))
}

#[pymodule]
fn gcflow_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("FlowError", m.py().get_type::<FlowError>())?;
    m.add_class::<PyGrid>()?;
    m.add_class::<PyField>()?;
    m.add_class::<PyFlowParams>()?;
    m.add_class::<PyFlowResult>()?;
    m.add_function(wrap_pyfunction!(run_flow, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    m.add_function(wrap_pyfunction!(theta, m)?)?;
    m.add_function(wrap_pyfunction!(radial_solution, m)?)?;
    m.add_function(wrap_pyfunction!(beta, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    Ok(())
}
