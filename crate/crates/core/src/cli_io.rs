//! Configuration files, artifact output and the three CLI commands.
//!
//! The configuration format is flat `key = value` text grouped under
//! `[section]` headers. `#` starts a comment. Relative paths are resolved
//! against the directory holding the configuration file.
//!
//! ```text
//! [domain]
//! n = 2
//! rho = 0.7854
//! mode = axisymmetric     # or full2d (then ntheta is required)
//! nr = 64
//!
//! [flow]
//! alpha = 0.5
//! t_end = 1               # or s_end = 5
//!
//! [initial]
//! kind = constant         # constant | bump | radial_file | table
//! value = 0
//!
//! [output]
//! report = report.csv
//! snapshot_every = 0
//! mesh = false
//!
//! [run]
//! seed = 1
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{FlowError, Result};
use crate::graph_hypersurface::{embed_node, gauss_curvature_log, GraphField};
use crate::sphere_geometry::{build_grid, DomainSpec, Grid, Mode};
use crate::time_integrator::{apply_neumann_bc, run_flow, FlowOutcome, FlowParams, FlowState, Monitor, RunOptions, Stop};
use crate::verification::{
    bump_field, check_c0_sandwich, check_detw_bounds, check_gradient_monotone, check_m_bracket, check_orthogonality,
    check_rescaled_convergence, scenario_battery, threads_from_env, BatteryConfig, CheckResult, ConvergenceConfig,
    EstimateRecord, Mutation, Tolerances,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_FLOW: i32 = 3;
pub const EXIT_VERIFY: i32 = 4;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("missing key `{0}`")]
    MissingKey(String),
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("`{key}` = {value} is out of range: need {requirement}")]
    OutOfRange { key: String, value: String, requirement: String },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl ConfigError {
    fn range(key: &str, value: impl fmt::Display, requirement: &str) -> Self {
        Self::OutOfRange { key: key.into(), value: value.to_string(), requirement: requirement.into() }
    }
}

/// Initial data of a run.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialData {
    Constant(f64),
    /// `A(1 + cos(πr/w))/2` inside radius `w`.
    Bump { amplitude: f64, width: f64 },
    /// Two-column `r φ` samples, interpolated linearly in `|r|`.
    RadialFile(PathBuf),
    /// Nodal values in grid order.
    Table(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSpec {
    pub report: Option<PathBuf>,
    /// Write a snapshot every this many samples; 0 disables snapshots.
    pub snapshot_every: usize,
    pub snapshot_dir: Option<PathBuf>,
    pub mesh: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { report: None, snapshot_every: 0, snapshot_dir: None, mesh: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub domain: DomainSpec,
    pub params: FlowParams,
    pub sample_every: usize,
    pub initial: InitialData,
    pub output: OutputSpec,
    pub seed: u64,
}

const KNOWN_KEYS: &[(&str, &[&str])] = &[
    ("domain", &["n", "rho", "mode", "nr", "ntheta"]),
    ("flow", &["alpha", "t_end", "s_end", "cfl", "dt_min", "dt_max", "eps_convex", "c_rescale", "sample_every"]),
    ("initial", &["kind", "value", "amplitude", "width", "path", "values"]),
    ("output", &["report", "snapshot_every", "snapshot_dir", "mesh"]),
    ("run", &["seed"]),
];

struct Raw {
    entries: BTreeMap<String, String>,
    base: PathBuf,
}

impl Raw {
    fn parse(text: &str, base: &Path) -> std::result::Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        let mut section: Option<&str> = None;
        for (idx, raw_line) in text.lines().enumerate() {
            let line = raw_line.split('#').next().unwrap_or("").trim();
            let lineno = idx + 1;
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| ConfigError::Syntax { line: lineno, message: format!("bad section header `{line}`") })?
                    .trim();
                let known = KNOWN_KEYS.iter().find(|(s, _)| *s == name).map(|(s, _)| *s);
                section = Some(known.ok_or_else(|| ConfigError::UnknownKey(format!("[{name}]")))?);
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::Syntax { line: lineno, message: format!("expected `key = value`, got `{line}`") })?;
            let (key, value) = (key.trim(), value.trim());
            let sec = section.ok_or_else(|| ConfigError::Syntax {
                line: lineno,
                message: format!("key `{key}` appears before any [section]"),
            })?;
            let full = format!("{sec}.{key}");
            let allowed = KNOWN_KEYS.iter().find(|(s, _)| *s == sec).map(|(_, k)| *k).unwrap_or(&[]);
            if !allowed.contains(&key) {
                return Err(ConfigError::UnknownKey(full));
            }
            if entries.insert(full.clone(), value.to_string()).is_some() {
                return Err(ConfigError::Syntax { line: lineno, message: format!("duplicate key `{full}`") });
            }
        }
        Ok(Self { entries, base: base.to_path_buf() })
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    fn require(&self, key: &str) -> std::result::Result<&str, ConfigError> {
        self.get(key).ok_or_else(|| ConfigError::MissingKey(key.into()))
    }

    fn num<T: std::str::FromStr>(&self, key: &str, v: &str) -> std::result::Result<T, ConfigError> {
        v.parse::<T>().map_err(|_| ConfigError::range(key, v, "a number"))
    }

    fn f64_or(&self, key: &str, default: f64) -> std::result::Result<f64, ConfigError> {
        self.get(key).map_or(Ok(default), |v| self.num(key, v))
    }

    fn required_f64(&self, key: &str) -> std::result::Result<f64, ConfigError> {
        let v = self.require(key)?;
        self.num(key, v)
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(|p| self.base.join(p))
    }
}

fn parse_bool(key: &str, v: &str) -> std::result::Result<bool, ConfigError> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(ConfigError::range(key, v, "true or false")),
    }
}

fn parse_list(key: &str, text: &str) -> std::result::Result<Vec<f64>, ConfigError> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| ConfigError::range(key, s, "a list of numbers")))
        .collect()
}

fn read_text(path: &Path) -> std::result::Result<String, ConfigError> {
    fs::read_to_string(path).map_err(|e| ConfigError::Io { path: path.display().to_string(), message: e.to_string() })
}

/// Parses configuration text; relative paths are resolved against `base`.
pub fn parse_config_str(text: &str, base: &Path) -> std::result::Result<RunConfig, ConfigError> {
    let raw = Raw::parse(text, base)?;

    // [domain]
    let n: usize = raw.num("domain.n", raw.require("domain.n")?)?;
    if n != 1 && n != 2 {
        return Err(ConfigError::range("domain.n", n, "n = 1 or n = 2"));
    }
    let rho = raw.required_f64("domain.rho")?;
    if !(rho > 0.0 && rho < std::f64::consts::FRAC_PI_2) {
        return Err(ConfigError::range("domain.rho", rho, "0<rho<pi/2"));
    }
    let nr: usize = raw.get("domain.nr").map_or(Ok(64), |v| raw.num("domain.nr", v))?;
    if nr < 8 {
        return Err(ConfigError::range("domain.nr", nr, "nr >= 8"));
    }
    let mode = match raw.get("domain.mode") {
        None | Some("axisymmetric") => Mode::Axisymmetric,
        Some("full2d") => Mode::Full2d,
        Some(other) => return Err(ConfigError::range("domain.mode", other, "axisymmetric or full2d")),
    };
    let domain = match (n, mode) {
        (1, Mode::Full2d) => return Err(ConfigError::range("domain.mode", "full2d", "axisymmetric when n = 1")),
        (1, _) => DomainSpec::arc(rho, nr),
        (_, Mode::Axisymmetric) => DomainSpec::axisymmetric(rho, nr),
        (_, Mode::Full2d) => {
            let nt: usize = raw.num("domain.ntheta", raw.require("domain.ntheta")?)?;
            if nt < 8 || nt % 2 != 0 {
                return Err(ConfigError::range("domain.ntheta", nt, "an even ntheta >= 8"));
            }
            DomainSpec::full2d(rho, nr, nt)
        }
    };

    // [flow]
    let alpha = raw.required_f64("flow.alpha")?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(ConfigError::range("flow.alpha", alpha, "0<alpha<1"));
    }
    let stop = match (raw.get("flow.t_end"), raw.get("flow.s_end")) {
        (Some(_), Some(_)) => {
            return Err(ConfigError::range("flow.s_end", raw.get("flow.s_end").unwrap(), "only one of t_end, s_end"))
        }
        (Some(v), None) => Stop::Time(raw.num("flow.t_end", v)?),
        (None, Some(v)) => Stop::SlowTime(raw.num("flow.s_end", v)?),
        (None, None) => return Err(ConfigError::MissingKey("flow.t_end".into())),
    };
    let (Stop::Time(x) | Stop::SlowTime(x)) = stop;
    if !(x >= 0.0 && x.is_finite()) {
        let key = if matches!(stop, Stop::Time(_)) { "flow.t_end" } else { "flow.s_end" };
        return Err(ConfigError::range(key, x, "a finite value >= 0"));
    }
    let mut params = FlowParams::new(alpha, stop);
    params.cfl = raw.f64_or("flow.cfl", params.cfl)?;
    if !(params.cfl > 0.0 && params.cfl <= 0.5) {
        return Err(ConfigError::range("flow.cfl", params.cfl, "0<cfl<=0.5"));
    }
    params.dt_min = raw.f64_or("flow.dt_min", params.dt_min)?;
    if !(params.dt_min > 0.0) {
        return Err(ConfigError::range("flow.dt_min", params.dt_min, "dt_min>0"));
    }
    params.dt_max = raw.f64_or("flow.dt_max", params.dt_max)?;
    if !(params.dt_max >= params.dt_min) {
        return Err(ConfigError::range("flow.dt_max", params.dt_max, "dt_max>=dt_min"));
    }
    params.eps_convex = raw.f64_or("flow.eps_convex", params.eps_convex)?;
    if !(params.eps_convex > 0.0) {
        return Err(ConfigError::range("flow.eps_convex", params.eps_convex, "eps_convex>0"));
    }
    params.c_rescale = raw.get("flow.c_rescale").map(|v| raw.num("flow.c_rescale", v)).transpose()?;
    let sample_every: usize = raw.get("flow.sample_every").map_or(Ok(10), |v| raw.num("flow.sample_every", v))?;
    if sample_every == 0 {
        return Err(ConfigError::range("flow.sample_every", 0, "sample_every>=1"));
    }

    // [initial]
    let initial = match raw.require("initial.kind")? {
        "constant" => InitialData::Constant(raw.required_f64("initial.value")?),
        "bump" => {
            let amplitude = raw.required_f64("initial.amplitude")?;
            let width = raw.f64_or("initial.width", rho)?;
            if !(width > 0.0) {
                return Err(ConfigError::range("initial.width", width, "width>0"));
            }
            InitialData::Bump { amplitude, width }
        }
        "radial_file" => {
            InitialData::RadialFile(raw.path("initial.path").ok_or_else(|| ConfigError::MissingKey("initial.path".into()))?)
        }
        "table" => {
            let values = match (raw.get("initial.values"), raw.path("initial.path")) {
                (Some(v), _) => parse_list("initial.values", v)?,
                (None, Some(p)) => parse_list("initial.path", &read_text(&p)?)?,
                (None, None) => return Err(ConfigError::MissingKey("initial.values".into())),
            };
            InitialData::Table(values)
        }
        other => return Err(ConfigError::range("initial.kind", other, "constant, bump, radial_file or table")),
    };

    // [output]
    let output = OutputSpec {
        report: raw.path("output.report"),
        snapshot_every: raw.get("output.snapshot_every").map_or(Ok(0), |v| raw.num("output.snapshot_every", v))?,
        snapshot_dir: raw.path("output.snapshot_dir"),
        mesh: raw.get("output.mesh").map_or(Ok(false), |v| parse_bool("output.mesh", v))?,
    };

    let seed: u64 = raw.get("run.seed").map_or(Ok(0), |v| raw.num("run.seed", v))?;

    Ok(RunConfig { domain, params, sample_every, initial, output, seed })
}

pub fn parse_config(path: &Path) -> std::result::Result<RunConfig, ConfigError> {
    let text = read_text(path)?;
    parse_config_str(&text, path.parent().unwrap_or(Path::new(".")))
}

impl RunConfig {
    /// Configuration text that parses back to `self` (paths are written
    /// as given, so they should be absolute).
    pub fn to_config_string(&self) -> String {
        let d = &self.domain;
        let p = &self.params;
        let mut s = String::new();
        s.push_str(&format!("[domain]\nn = {}\nrho = {:e}\nnr = {}\n", d.n, d.rho, d.nr));
        if d.n == 2 {
            match d.mode {
                Mode::Axisymmetric => s.push_str("mode = axisymmetric\n"),
                Mode::Full2d => s.push_str(&format!("mode = full2d\nntheta = {}\n", d.ntheta)),
            }
        }
        s.push_str(&format!("\n[flow]\nalpha = {:e}\n", p.alpha));
        match p.stop {
            Stop::Time(t) => s.push_str(&format!("t_end = {t:e}\n")),
            Stop::SlowTime(t) => s.push_str(&format!("s_end = {t:e}\n")),
        }
        s.push_str(&format!(
            "cfl = {:e}\ndt_min = {:e}\ndt_max = {:e}\neps_convex = {:e}\nsample_every = {}\n",
            p.cfl, p.dt_min, p.dt_max, p.eps_convex, self.sample_every
        ));
        if let Some(c) = p.c_rescale {
            s.push_str(&format!("c_rescale = {c:e}\n"));
        }
        s.push_str("\n[initial]\n");
        match &self.initial {
            InitialData::Constant(c) => s.push_str(&format!("kind = constant\nvalue = {c:e}\n")),
            InitialData::Bump { amplitude, width } => {
                s.push_str(&format!("kind = bump\namplitude = {amplitude:e}\nwidth = {width:e}\n"))
            }
            InitialData::RadialFile(path) => s.push_str(&format!("kind = radial_file\npath = {}\n", path.display())),
            InitialData::Table(v) => {
                let vals: Vec<String> = v.iter().map(|x| format!("{x:e}")).collect();
                s.push_str(&format!("kind = table\nvalues = {}\n", vals.join(", ")));
            }
        }
        s.push_str("\n[output]\n");
        if let Some(r) = &self.output.report {
            s.push_str(&format!("report = {}\n", r.display()));
        }
        s.push_str(&format!("snapshot_every = {}\n", self.output.snapshot_every));
        if let Some(dir) = &self.output.snapshot_dir {
            s.push_str(&format!("snapshot_dir = {}\n", dir.display()));
        }
        s.push_str(&format!("mesh = {}\n\n[run]\nseed = {}\n", self.output.mesh, self.seed));
        s
    }

    pub fn grid(&self) -> Result<Grid> {
        build_grid(self.domain)
    }

    /// Initial field on `grid`, with ghosts filled by the boundary rule where
    /// no closed form is available.
    pub fn initial_field(&self, grid: &Grid) -> Result<GraphField> {
        match &self.initial {
            InitialData::Constant(c) => Ok(GraphField::constant(grid, *c)),
            InitialData::Bump { amplitude, width } => Ok(bump_field(grid, *amplitude, *width)),
            InitialData::Table(values) => {
                let mut f = GraphField::from_nodal(grid, values)?;
                apply_neumann_bc(&mut f, grid);
                Ok(f)
            }
            InitialData::RadialFile(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| FlowError::InvalidParams(format!("{}: {e}", path.display())))?;
                let samples = parse_radial_samples(&text)
                    .map_err(|m| FlowError::InvalidParams(format!("{}: {m}", path.display())))?;
                let values: Vec<f64> = grid.nodes.iter().map(|nd| interpolate(&samples, nd.r.abs())).collect();
                let mut f = GraphField::from_nodal(grid, &values)?;
                apply_neumann_bc(&mut f, grid);
                Ok(f)
            }
        }
    }

    pub fn run_options(&self) -> RunOptions {
        RunOptions { sample_every: self.sample_every, ..RunOptions::default() }
    }
}

/// `r φ` pairs sorted by `r`; `#` comments and blank lines are skipped.
fn parse_radial_samples(text: &str) -> std::result::Result<Vec<(f64, f64)>, String> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
        if cols.len() != 2 {
            return Err(format!("line {}: expected two columns", i + 1));
        }
        let r: f64 = cols[0].parse().map_err(|_| format!("line {}: bad r", i + 1))?;
        let p: f64 = cols[1].parse().map_err(|_| format!("line {}: bad phi", i + 1))?;
        out.push((r, p));
    }
    if out.is_empty() {
        return Err("no samples".into());
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(out)
}

fn interpolate(samples: &[(f64, f64)], r: f64) -> f64 {
    let k = samples.partition_point(|s| s.0 <= r);
    if k == 0 {
        return samples[0].1;
    }
    if k == samples.len() {
        return samples[k - 1].1;
    }
    let (r0, p0) = samples[k - 1];
    let (r1, p1) = samples[k];
    p0 + (p1 - p0) * (r - r0) / (r1 - r0)
}

/// Plain-text node table: `r theta u K x y z`.
pub fn write_snapshot<W: Write>(mut w: W, phi: &GraphField, grid: &Grid, t: f64, s: f64) -> Result<()> {
    let k = gauss_curvature_log(phi, grid)?;
    let io = |e: io::Error| FlowError::InvalidParams(format!("snapshot write failed: {e}"));
    writeln!(w, "# t = {t:e}, s = {s:e}").map_err(io)?;
    writeln!(w, "r theta u K x y z").map_err(io)?;
    for (node, nd) in grid.nodes.iter().enumerate() {
        let x = embed_node(phi, grid, node);
        writeln!(w, "{:e} {:e} {:e} {:e} {:e} {:e} {:e}", nd.r, nd.theta, phi.u(node), k[node], x[0], x[1], x[2])
            .map_err(io)?;
    }
    Ok(())
}

/// Wavefront-style `v`/`f` mesh of the embedded surface (two-dimensional
/// caps only). Axisymmetric profiles are revolved with `2(nr − 1)` angular
/// samples.
pub fn write_mesh<W: Write>(mut w: W, phi: &GraphField, grid: &Grid) -> Result<()> {
    if grid.dim() != 2 {
        return Err(FlowError::InvalidDomain("mesh export needs a two-dimensional cap".into()));
    }
    let io = |e: io::Error| FlowError::InvalidParams(format!("mesh write failed: {e}"));
    let rows = grid.rows;
    let (cols, ring): (usize, Box<dyn Fn(usize, usize) -> [f64; 3]>) = match grid.spec.mode {
        Mode::Full2d => (grid.cols, Box::new(|i, j| embed_node(phi, grid, grid.index(i, j)))),
        Mode::Axisymmetric => {
            let m = 2 * (rows - 1);
            (
                m,
                Box::new(move |i, j| {
                    let th = std::f64::consts::TAU * j as f64 / m as f64;
                    let x = crate::graph_hypersurface::sphere_point(2, grid.nodes[i].r, th);
                    let u = phi.u(i);
                    [u * x[0], u * x[1], u * x[2]]
                }),
            )
        }
    };
    // Pole vertex: the axis node, or the ring average for offset grids.
    let pole = match grid.spec.mode {
        Mode::Axisymmetric => ring(0, 0),
        Mode::Full2d => {
            let u = (0..cols).map(|j| phi.u(grid.index(0, j))).sum::<f64>() / cols as f64;
            [0.0, 0.0, u]
        }
    };
    let first_ring = if grid.spec.mode == Mode::Axisymmetric { 1 } else { 0 };
    writeln!(w, "v {:e} {:e} {:e}", pole[0], pole[1], pole[2]).map_err(io)?;
    for i in first_ring..rows {
        for j in 0..cols {
            let p = ring(i, j);
            writeln!(w, "v {:e} {:e} {:e}", p[0], p[1], p[2]).map_err(io)?;
        }
    }
    let vid = |i: usize, j: usize| 2 + (i - first_ring) * cols + (j % cols);
    for j in 0..cols {
        writeln!(w, "f 1 {} {}", vid(first_ring, j), vid(first_ring, j + 1)).map_err(io)?;
    }
    for i in first_ring..rows - 1 {
        for j in 0..cols {
            let (a, b, c, d) = (vid(i, j), vid(i, j + 1), vid(i + 1, j + 1), vid(i + 1, j));
            writeln!(w, "f {a} {b} {c}\nf {a} {c} {d}").map_err(io)?;
        }
    }
    Ok(())
}

/// Writes a snapshot (and optionally a mesh) every `every` samples.
pub struct SnapshotWriter<'a> {
    grid: &'a Grid,
    dir: PathBuf,
    every: usize,
    mesh: bool,
    seen: usize,
    pub written: Vec<PathBuf>,
}

impl<'a> SnapshotWriter<'a> {
    pub fn new(grid: &'a Grid, dir: PathBuf, every: usize, mesh: bool) -> Self {
        Self { grid, dir, every, mesh, seen: 0, written: Vec::new() }
    }
}

impl Monitor for SnapshotWriter<'_> {
    fn observe(&mut self, state: &FlowState, record: &EstimateRecord) -> Result<()> {
        let idx = self.seen;
        self.seen += 1;
        if self.every == 0 || idx % self.every != 0 {
            return Ok(());
        }
        let create = |p: &Path| {
            fs::File::create(p)
                .map(BufWriter::new)
                .map_err(|e| FlowError::InvalidParams(format!("{}: {e}", p.display())))
        };
        let path = self.dir.join(format!("snapshot_{idx:05}.txt"));
        write_snapshot(create(&path)?, &state.phi, self.grid, record.t, record.s)?;
        self.written.push(path);
        if self.mesh && self.grid.dim() == 2 {
            let path = self.dir.join(format!("mesh_{idx:05}.obj"));
            write_mesh(create(&path)?, &state.phi, self.grid)?;
            self.written.push(path);
        }
        Ok(())
    }
}

/// Post-run estimate checks that apply to any run.
pub fn run_checks(outcome: &FlowOutcome, params: &FlowParams, grid: &Grid) -> Vec<CheckResult> {
    let tol = Tolerances::default();
    let mut checks = vec![
        check_m_bracket(&outcome.report, tol.m),
        check_gradient_monotone(&outcome.report, tol.grad),
        check_detw_bounds(&outcome.report, tol.detw_floor, tol.detw_ceil, params.eps_convex).check,
        check_orthogonality(&outcome.report, grid.h_r, 10.0),
    ];
    if !outcome.trajectory.samples.is_empty() {
        checks.insert(0, check_c0_sandwich(&outcome.trajectory, params.alpha, tol.c0));
    }
    checks
}

/// Result of a configured run.
pub struct RunArtifacts {
    pub outcome: FlowOutcome,
    pub checks: Vec<CheckResult>,
    pub files: Vec<PathBuf>,
}

/// Runs a configuration and writes its report and snapshots.
pub fn execute(config: &RunConfig) -> Result<RunArtifacts> {
    let grid = config.grid()?;
    let initial = config.initial_field(&grid)?;
    let snap_dir = config
        .output
        .snapshot_dir
        .clone()
        .or_else(|| config.output.report.as_ref().and_then(|r| r.parent().map(Path::to_path_buf)))
        .unwrap_or_else(|| PathBuf::from("."));
    let mut snaps = SnapshotWriter::new(&grid, snap_dir, config.output.snapshot_every, config.output.mesh);
    let outcome = run_flow(&initial, &config.params, &grid, &config.run_options(), &mut [&mut snaps])?;
    let mut files = std::mem::take(&mut snaps.written);
    if let Some(path) = &config.output.report {
        let f = fs::File::create(path).map_err(|e| FlowError::InvalidParams(format!("{}: {e}", path.display())))?;
        outcome
            .report
            .write_csv(BufWriter::new(f))
            .map_err(|e| FlowError::InvalidParams(format!("{}: {e}", path.display())))?;
        files.push(path.clone());
    }
    let checks = run_checks(&outcome, &config.params, &grid);
    Ok(RunArtifacts { outcome, checks, files })
}

fn summary_line(a: &RunArtifacts) -> String {
    let last = a.outcome.report.last();
    let osc = last.map_or(f64::NAN, |r| r.osc_phitilde);
    let passed = a.checks.iter().filter(|c| c.passed).count();
    format!(
        "t = {:.6} s = {:.6} osc(phi~) = {:.3e} checks passed {}/{}",
        a.outcome.state.t,
        a.outcome.state.s,
        osc,
        passed,
        a.checks.len()
    )
}

/// `gcflow run <config>`.
pub fn cmd_run(config_path: &Path) -> i32 {
    let config = match parse_config(config_path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_CONFIG;
        }
    };
    match execute(&config) {
        Ok(a) => {
            for c in a.checks.iter().filter(|c| !c.passed) {
                eprintln!("check {} failed: {}", c.name, c.detail);
            }
            println!("{}", summary_line(&a));
            EXIT_OK
        }
        Err(e) => {
            eprintln!("flow error: {e}");
            EXIT_FLOW
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerifyOptions {
    pub alpha: Option<f64>,
    pub grid: Option<usize>,
    pub mutation: Option<Mutation>,
    pub seed: Option<u64>,
    /// Configuration whose α, nr and seed are used as defaults.
    pub config: Option<PathBuf>,
}

/// `gcflow verify`: runs the scenario battery and prints its table.
pub fn cmd_verify(opts: &VerifyOptions) -> i32 {
    let mut cfg = BatteryConfig::default();
    if let Some(path) = &opts.config {
        match parse_config(path) {
            Ok(rc) => {
                cfg.alpha = rc.params.alpha;
                cfg.nr = rc.domain.nr;
                cfg.seed = rc.seed;
            }
            Err(e) => {
                eprintln!("config error: {e}");
                return EXIT_CONFIG;
            }
        }
    }
    if let Some(a) = opts.alpha {
        if !(a > 0.0 && a < 1.0) {
            eprintln!("config error: {}", ConfigError::range("alpha", a, "0<alpha<1"));
            return EXIT_CONFIG;
        }
        cfg.alpha = a;
    }
    if let Some(nr) = opts.grid {
        if nr < 8 {
            eprintln!("config error: {}", ConfigError::range("grid", nr, "nr >= 8"));
            return EXIT_CONFIG;
        }
        cfg.nr = nr;
    }
    if let Some(m) = opts.mutation {
        cfg.mutation = m;
    }
    if let Some(s) = opts.seed {
        cfg.seed = s;
    }
    let report = scenario_battery(&cfg);
    print!("{}", report.table());
    if report.all_passed() {
        EXIT_OK
    } else {
        EXIT_VERIFY
    }
}

/// One row of the sweep summary.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub alpha: f64,
    pub lambda_hat: Option<f64>,
    pub final_osc: Option<f64>,
    pub status: String,
    pub report: Option<PathBuf>,
}

fn alpha_tag(alpha: f64) -> String {
    format!("{alpha}").replace('.', "p")
}

/// Independent runs of `base` at each α. α outside `(0, 1)` is rejected
/// before anything runs.
pub fn sweep(alphas: &[f64], base: &RunConfig) -> std::result::Result<Vec<SweepRow>, ConfigError> {
    if let Some(&bad) = alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
        return Err(ConfigError::range("alphas", bad, "0<alpha<1"));
    }
    let run_one = |&alpha: &f64| {
        let mut cfg = base.clone();
        cfg.params.alpha = alpha;
        cfg.output.snapshot_every = 0;
        cfg.output.report = base.output.report.as_ref().map(|r| {
            let stem = r.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
            r.with_file_name(format!("{stem}_alpha{}.csv", alpha_tag(alpha)))
        });
        match execute(&cfg) {
            Ok(a) => {
                let conv = check_rescaled_convergence(&a.outcome.report, &ConvergenceConfig {
                    s_end: 0.0,
                    ..ConvergenceConfig::default()
                })
                .ok();
                SweepRow {
                    alpha,
                    lambda_hat: conv.as_ref().and_then(|c| c.lambda),
                    final_osc: a.outcome.report.last().map(|r| r.osc_phitilde),
                    status: "ok".into(),
                    report: cfg.output.report.clone(),
                }
            }
            Err(e) => SweepRow {
                alpha,
                lambda_hat: None,
                final_osc: None,
                status: format!("error: {e}"),
                report: None,
            },
        }
    };
    let rows = match rayon::ThreadPoolBuilder::new().num_threads(threads_from_env()).build() {
        Ok(pool) => pool.install(|| alphas.par_iter().map(run_one).collect()),
        Err(_) => alphas.iter().map(run_one).collect(),
    };
    Ok(rows)
}

pub fn sweep_summary_csv(rows: &[SweepRow]) -> String {
    let fmt = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x:e}"));
    let mut s = String::from("alpha,lambda_hat,final_osc,status\n");
    for r in rows {
        s.push_str(&format!("{},{},{},{}\n", r.alpha, fmt(r.lambda_hat), fmt(r.final_osc), r.status.replace(',', ";")));
    }
    s
}

/// `gcflow sweep --alphas a,b,c <config>`.
pub fn cmd_sweep(alphas: &[f64], config_path: &Path) -> i32 {
    let base = match parse_config(config_path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_CONFIG;
        }
    };
    let rows = match sweep(alphas, &base) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_CONFIG;
        }
    };
    let summary = sweep_summary_csv(&rows);
    let dir = base.output.report.as_ref().and_then(|r| r.parent().map(Path::to_path_buf)).unwrap_or_else(|| ".".into());
    let path = dir.join("sweep_summary.csv");
    if let Err(e) = fs::write(&path, &summary) {
        eprintln!("could not write {}: {e}", path.display());
        return EXIT_FLOW;
    }
    print!("{summary}");
    if rows.iter().all(|r| r.status == "ok") {
        EXIT_OK
    } else {
        EXIT_FLOW
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[domain]\nn = 2\nrho = 0.7854\n[flow]\nalpha = 0.5\nt_end = 1\n[initial]\nkind = constant\nvalue = 0\n";

    #[test]
    fn minimal_config() {
        let c = parse_config_str(MINIMAL, Path::new(".")).unwrap();
        assert_eq!(c.domain, DomainSpec::axisymmetric(0.7854, 64));
        assert_eq!(c.params.stop, Stop::Time(1.0));
        assert_eq!(c.initial, InitialData::Constant(0.0));
        assert_eq!(c.output, OutputSpec::default());
    }

    #[test]
    fn alpha_out_of_range_names_the_condition() {
        let text = MINIMAL.replace("alpha = 0.5", "alpha = 1.2");
        let err = parse_config_str(&text, Path::new(".")).unwrap_err();
        assert!(matches!(&err, ConfigError::OutOfRange { key, .. } if key == "flow.alpha"));
        assert!(err.to_string().contains("0<alpha<1"));
    }

    #[test]
    fn misspelled_key() {
        let text = MINIMAL.replace("alpha = 0.5", "aplha = 0.5");
        assert_eq!(parse_config_str(&text, Path::new(".")).unwrap_err(), ConfigError::UnknownKey("flow.aplha".into()));
    }

    #[test]
    fn missing_key() {
        let text = MINIMAL.replace("rho = 0.7854\n", "");
        assert_eq!(parse_config_str(&text, Path::new(".")).unwrap_err(), ConfigError::MissingKey("domain.rho".into()));
    }

    #[test]
    fn text_round_trip() {
        let mut c = parse_config_str(MINIMAL, Path::new(".")).unwrap();
        c.initial = InitialData::Bump { amplitude: 0.05, width: 0.7 };
        c.params.c_rescale = Some(0.1);
        c.domain = DomainSpec::full2d(0.7, 12, 16);
        let back = parse_config_str(&c.to_config_string(), Path::new(".")).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn interpolation() {
        let s = parse_radial_samples("# r phi\n0 1\n1, 3\n").unwrap();
        assert_eq!(interpolate(&s, 0.25), 1.5);
        assert_eq!(interpolate(&s, 2.0), 3.0);
    }
}
