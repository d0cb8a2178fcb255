use thiserror::Error;

/// Failures raised by grid construction, geometry evaluation and time stepping.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("invalid flow parameters: {0}")]
    InvalidParams(String),
    #[error("ghost layer has not been filled")]
    GhostsUnfilled,
    #[error("field size {got} does not match grid size {expected}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("node {node} is not a boundary node")]
    NotBoundary { node: usize },
    #[error("graph is not convex at node {node}: det h = {det_h:e}")]
    NonConvex { node: usize, det_h: f64 },
    #[error("w is singular at node {node}: det w = {det_w:e}")]
    SingularW { node: usize, det_w: f64 },
    #[error("state is not admissible at node {node}: min eig(w) = {min_eig:e}")]
    NonAdmissible { node: usize, min_eig: f64 },
    #[error("non-finite value at node {node} (step {step})")]
    NaNDetected { node: usize, step: usize },
    #[error("time step {dt:e} fell to the floor dt_min = {dt_min:e}")]
    DtUnderflow { dt: f64, dt_min: f64 },
    #[error("initial data violates the Neumann condition: |D_mu phi| = {residual:e} > {tol:e}")]
    InitialDataIncompatible { residual: f64, tol: f64 },
    #[error("degenerate tangent vectors at node {node}")]
    DegenerateTangents { node: usize },
    #[error("decay window too short: {0}")]
    InsufficientDecayWindow(String),
}

pub type Result<T> = std::result::Result<T, FlowError>;
