//! Spectral solvers for the distributed optimal control of the viscous
//! Camassa–Holm (LANS-α) equations on a periodic box.
//!
//! The crate is organized bottom-up:
//!
//! * [`spectral`]: Fourier fields, Leray projection, Stokes and Helmholtz
//!   operators, norms.
//! * [`forward`]: the nonlinearity `B`, the IMEX state solver and its
//!   tangent.
//! * [`adjoint`]: the adjoint operator `B*` and the backward sweep, built as
//!   the exact transpose of the tangent scheme.
//! * [`cost`]: the tracking functional, reduced gradient, projection onto
//!   the admissible box and the optimality residual.
//! * [`optimizer`]: projected gradient descent with Armijo backtracking.
//! * [`verification`]: executable checks of the operator identities.
//! * [`snapshot`], [`checkpoint`], [`config`]: file formats and scenario
//!   presets used by the command-line front end.

pub mod adjoint;
pub mod checkpoint;
pub mod config;
pub mod control;
pub mod cost;
pub mod error;
pub mod forward;
pub mod optimizer;
pub mod random;
pub mod snapshot;
pub mod spectral;
pub mod verification;


pub use control::{Bounds, ControlField};
pub use adjoint::{bilinear_b_star, solve_adjoint, step_backward, terminal_condition, AdjointOptions, AdjointTrajectory};
pub use config::{Preset, RunConfig, RunManifest, Scenario};
pub use cost::{
    evaluate_cost, optimality_residual, project_admissible, reduced_gradient, CostBreakdown, Gammas,
    ProblemConfig, Target,
};
pub use error::{Error, Result};
pub use forward::{
    bilinear_b, linearized_bu, solve_forward, solve_linearized, step_forward, ModelParams, StateTrajectory,
};
pub use optimizer::{projected_gradient, OptimizationResult, OptimizerOptions, Termination};
pub use spectral::{
    apply_helmholtz, apply_stokes, da_dual_norm, da_norm, invert_helmholtz, l2_inner, leray_project,
    to_physical, to_spectral, v_inner, Dealias, Grid, GridSpec, PhysicalField, SpectralField,
};
pub use verification::CheckReport;
