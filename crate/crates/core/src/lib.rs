//! Expanding power-of-Gauss-curvature flow of convex graphs over a spherical
//! cap, with a Neumann (perpendicular contact) condition on the boundary cone.
//!
//! The unknown is `φ = log u`, where the hypersurface is `{u(x)·x : x ∈ Ω}`
//! for a geodesic cap `Ω ⊂ Sⁿ`. The crate discretises the scalar equation
//! `∂φ/∂t = Q(φ, Dφ, D²φ)` with centred finite differences on a polar grid,
//! steps it explicitly, and monitors the a priori estimates that hold for
//! the exact flow (C⁰ sandwich, speed bracket, gradient bound, det w window,
//! rescaled convergence, boundary orthogonality).
//!
//! Module map:
//! - [`sphere_geometry`]: cap grids, round metric, covariant stencils.
//! - [`graph_hypersurface`]: induced metric, second fundamental form, Gauss
//!   curvature, and an independent extrinsic finite-difference oracle.
//! - [`flow_operator`]: the tensor `w`, the speed `Q`, its linearisation and
//!   the commutator identities on the sphere.
//! - [`time_integrator`]: forward Euler stepping, boundary ghosts, rescaling clock.
//! - [`verification`]: estimate reports, checks and the scenario battery.
//! - [`cli_io`]: configuration files, report/snapshot output and CLI commands.

pub mod cli_io;
pub mod error;
pub mod flow_operator;
pub mod graph_hypersurface;
pub mod linalg;
pub mod sphere_geometry;
pub mod time_integrator;
pub mod verification;

pub use error::{FlowError, Result};
pub use flow_operator::{beta, compute_w, evaluate_q, linearize_q, LinearizationData, SpeedField, WField};
pub use graph_hypersurface::{GraphField, ShapeData};
pub use sphere_geometry::{build_grid, DomainSpec, Grid, Mode, NodeClass};
pub use time_integrator::{radial_solution, run_flow, theta, FlowParams, FlowState};
pub use verification::{EstimateRecord, EstimateReport};
