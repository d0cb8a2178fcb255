//! Sampled estimate records, pass/fail checks, and the scenario battery.
//!
//! Each check is a pure function of a recorded report or trajectory, so a
//! saved CSV can be re-checked offline.

mod battery;
mod checks;
pub mod oracles;

use std::fmt::Write as _;
use std::io::{self, BufRead, Write};

pub use battery::{bump_field, offset_field, scenario_battery, threads_from_env, BatteryConfig, BatteryReport, Mutation, ScenarioResult};
pub use checks::{
    check_c0_sandwich, check_comparison, check_detw_bounds, check_gradient_monotone, check_m_bracket,
    check_orthogonality, check_rescaled_convergence, CheckResult, ComparisonOutcome, ConvergenceConfig,
    ConvergenceOutcome, DetwOutcome, Tolerances,
};

use crate::error::Result;
use crate::graph_hypersurface::boundary_orthogonality_residual;
use crate::sphere_geometry::Grid;
use crate::time_integrator::{Evaluation, FlowParams, FlowState};

/// Deliberate errors in how a sample is recorded, for mutation probes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RecordMutation {
    #[default]
    None,
    /// Normalise the speed with `Θ^{1+α}` instead of `Θ^{1−α}`.
    WrongThetaExponent,
}

/// Monitored quantities at one sample time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateRecord {
    pub t: f64,
    pub s: f64,
    pub theta: f64,
    pub sup_grad_phi: f64,
    /// Range of `M = φ̇ Θ^{1−α}` over the nodes.
    pub m_min: f64,
    pub m_max: f64,
    /// Range of `det(w)/det(σ)` over the nodes.
    pub detw_min: f64,
    pub detw_max: f64,
    pub mineig_w: f64,
    pub osc_phitilde: f64,
    pub sup_grad_phitilde: f64,
    pub bdry_ortho_residual: f64,
    /// Standard deviation over mean of `ũ = u/Θ`. Not part of the CSV.
    pub utilde_rel_std: f64,
}

pub const CSV_HEADER: &str = "t,s,theta,sup_grad_phi,m_min,m_max,detw_min,detw_max,mineig_w,osc_phitilde,sup_grad_phitilde,bdry_ortho_residual";

fn min_max(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

impl EstimateRecord {
    pub fn from_evaluation(
        state: &FlowState,
        eval: &Evaluation,
        grid: &Grid,
        params: &FlowParams,
        mutation: RecordMutation,
    ) -> Result<Self> {
        let alpha = params.alpha;
        let exponent = match mutation {
            RecordMutation::None => 1.0 - alpha,
            RecordMutation::WrongThetaExponent => 1.0 + alpha,
        };
        let scale = state.theta.powf(exponent);
        let sup_grad = eval.jets.iter().map(|j| j.grad_norm_sq().sqrt()).fold(0.0, f64::max);
        let (m_min, m_max) = min_max(eval.speed.q.iter().map(|q| q * scale));
        let (detw_min, detw_max) = min_max(eval.w.det_w.iter().copied());
        let log_theta = state.theta.ln();
        let (pt_min, pt_max) = min_max(state.phi.nodal().iter().map(|p| p - log_theta));
        let n = state.phi.len() as f64;
        let ut: Vec<f64> = state.phi.nodal().iter().map(|p| (p - log_theta).exp()).collect();
        let mean = ut.iter().sum::<f64>() / n;
        let var = ut.iter().map(|u| (u - mean).powi(2)).sum::<f64>() / n;
        Ok(Self {
            t: state.t,
            s: state.s,
            theta: state.theta,
            sup_grad_phi: sup_grad,
            m_min,
            m_max,
            detw_min,
            detw_max,
            mineig_w: eval.w.min_eig_overall(),
            osc_phitilde: pt_max - pt_min,
            sup_grad_phitilde: sup_grad,
            bdry_ortho_residual: boundary_orthogonality_residual(&state.phi, grid)?,
            utilde_rel_std: var.sqrt() / mean,
        })
    }

    fn csv_values(&self) -> [f64; 12] {
        [
            self.t,
            self.s,
            self.theta,
            self.sup_grad_phi,
            self.m_min,
            self.m_max,
            self.detw_min,
            self.detw_max,
            self.mineig_w,
            self.osc_phitilde,
            self.sup_grad_phitilde,
            self.bdry_ortho_residual,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.csv_values().iter().all(|v| v.is_finite())
    }
}

/// Time series of estimate records.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EstimateReport {
    pub records: Vec<EstimateRecord>,
}

impl EstimateReport {
    pub fn first(&self) -> Option<&EstimateRecord> {
        self.records.first()
    }

    pub fn last(&self) -> Option<&EstimateRecord> {
        self.records.last()
    }

    /// Records strictly increasing in `t` and all values finite.
    pub fn is_well_formed(&self) -> bool {
        self.records.windows(2).all(|w| w[1].t > w[0].t) && self.records.iter().all(|r| r.is_finite())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.records.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let vals = r.csv_values();
            for (k, v) in vals.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{v:e}");
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(self.to_csv().as_bytes())
    }

    /// Reads a report written by [`EstimateReport::write_csv`].
    ///
    /// `utilde_rel_std` is not stored, so it is replaced by the upper bound
    /// `(e^{osc φ̃} − 1)/2`.
    pub fn read_csv<R: BufRead>(r: R) -> io::Result<Self> {
        let bad = |m: String| io::Error::new(io::ErrorKind::InvalidData, m);
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| bad("empty report".into()))??;
        if header.trim() != CSV_HEADER {
            return Err(bad(format!("unexpected header: {header}")));
        }
        let mut records = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| bad(format!("line {}: {e}", lineno + 2)))?;
            if vals.len() != 12 {
                return Err(bad(format!("line {}: expected 12 columns, got {}", lineno + 2, vals.len())));
            }
            records.push(EstimateRecord {
                t: vals[0],
                s: vals[1],
                theta: vals[2],
                sup_grad_phi: vals[3],
                m_min: vals[4],
                m_max: vals[5],
                detw_min: vals[6],
                detw_max: vals[7],
                mineig_w: vals[8],
                osc_phitilde: vals[9],
                sup_grad_phitilde: vals[10],
                bdry_ortho_residual: vals[11],
                utilde_rel_std: 0.5 * vals[9].exp_m1(),
            });
        }
        Ok(Self { records })
    }
}
