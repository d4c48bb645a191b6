//! Tracking cost, reduced gradient, admissible-set projection and the
//! first-order optimality residual.
//!
//! The discrete cost is
//!
//! ```text
//! J = γ₁/2 dt Σ_{n=0}^{N} c_n ‖A(û_n - u_d,n)‖²  +  γ₂/2 ‖û_N - u_T‖²
//!   + γ₃/2 dt Σ_{n=0}^{N-1} ‖v_n‖²
//! ```
//!
//! with trapezoidal weights `c_0 = c_N = 1/2`, `c_n = 1` otherwise.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::adjoint::{solve_adjoint, AdjointTrajectory};
use crate::control::{Bounds, ControlField};
use crate::error::{config_err, Result};
use crate::forward::{solve_forward, ModelParams, StateTrajectory};
use crate::spectral::{check_grids, da_norm, leray_project, to_physical, Grid, SpectralField};

/// Cost weights `γ₁` (tracking), `γ₂` (terminal), `γ₃` (control).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gammas {
    pub tracking: f64,
    pub terminal: f64,
    pub control: f64,
}

impl Gammas {
    pub fn new(tracking: f64, terminal: f64, control: f64) -> Self {
        Self {
            tracking,
            terminal,
            control,
        }
    }

    /// `γ₁, γ₂ ≥ 0` and `γ₃ > 0`.
    pub fn validate(&self) -> Result<()> {
        for (name, g) in [("gamma1", self.tracking), ("gamma2", self.terminal)] {
            if !(g.is_finite() && g >= 0.0) {
                return config_err(format!("{name} must be >= 0, got {g}"));
            }
        }
        if !(self.control.is_finite() && self.control > 0.0) {
            return config_err(format!("gamma3 must be > 0, got {}", self.control));
        }
        Ok(())
    }
}

/// Tracking target `u_d`: constant in time or one field per time node.
#[derive(Clone, Debug)]
pub enum Target {
    Constant(SpectralField),
    Trajectory(Vec<SpectralField>),
}

impl Target {
    pub fn at(&self, n: usize) -> &SpectralField {
        match self {
            Target::Constant(f) => f,
            Target::Trajectory(v) => &v[n],
        }
    }

    pub(crate) fn check_len(&self, n_steps: usize) -> Result<()> {
        match self {
            Target::Constant(_) => Ok(()),
            Target::Trajectory(v) if v.len() == n_steps + 1 => Ok(()),
            Target::Trajectory(v) => config_err(format!(
                "tracking target has {} slices, expected {}",
                v.len(),
                n_steps + 1
            )),
        }
    }

    fn fields(&self) -> Box<dyn Iterator<Item = &SpectralField> + '_> {
        match self {
            Target::Constant(f) => Box::new(std::iter::once(f)),
            Target::Trajectory(v) => Box::new(v.iter()),
        }
    }

    fn projected(self) -> Target {
        match self {
            Target::Constant(f) => Target::Constant(ingest(f, "u_d")),
            Target::Trajectory(v) => Target::Trajectory(v.into_iter().map(|f| ingest(f, "u_d")).collect()),
        }
    }
}

fn ingest(f: SpectralField, name: &str) -> SpectralField {
    if f.is_divergence_free() {
        return f;
    }
    let p = leray_project(&f);
    let dropped = (&f - &p).l2_norm();
    if dropped > 1e-12 * f.l2_norm().max(1e-300) {
        log::warn!("{name} is not solenoidal; projected (removed l2 part {dropped:.3e})");
    }
    p
}

/// Everything that defines one control problem.
#[derive(Clone, Debug)]
pub struct ProblemConfig {
    pub grid: Arc<Grid>,
    pub model: ModelParams,
    pub gammas: Gammas,
    pub u0: SpectralField,
    pub u_d: Target,
    pub u_t: SpectralField,
    pub bounds: Option<Bounds>,
}

impl ProblemConfig {
    /// Validates parameters and Leray-projects the targets. A non-solenoidal
    /// initial condition is rejected rather than projected.
    pub fn new(
        grid: &Arc<Grid>,
        model: ModelParams,
        gammas: Gammas,
        u0: SpectralField,
        u_d: Target,
        u_t: SpectralField,
        bounds: Option<Bounds>,
    ) -> Result<Self> {
        let p = Self {
            grid: grid.clone(),
            model,
            gammas,
            u0,
            u_d: u_d.projected(),
            u_t: ingest(u_t, "u_T"),
            bounds,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.gammas.validate()?;
        self.u0.require_divergence_free("initial condition")?;
        check_grids(&self.u0, &SpectralField::zeros(&self.grid))?;
        check_grids(&self.u_t, &self.u0)?;
        self.u_d.check_len(self.grid.spec().n_steps)?;
        for f in self.u_d.fields() {
            check_grids(f, &self.u0)?;
        }
        if let Some(b) = &self.bounds {
            b.validate()?;
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.grid.spec().dt
    }

    pub fn n_steps(&self) -> usize {
        self.grid.spec().n_steps
    }

    pub fn solve_state(&self, control: &ControlField) -> Result<StateTrajectory> {
        solve_forward(&self.u0, control, &self.model)
    }

    /// `J(v)` with the state eliminated.
    pub fn reduced_cost(&self, control: &ControlField) -> Result<CostBreakdown> {
        let traj = self.solve_state(control)?;
        evaluate_cost(&traj, control, self)
    }

    /// One forward and one adjoint solve.
    pub fn evaluate(&self, control: &ControlField) -> Result<Evaluation> {
        let traj = self.solve_state(control)?;
        let cost = evaluate_cost(&traj, control, self)?;
        let adjoint = solve_adjoint(&traj, self)?;
        let gradient = reduced_gradient(control, &adjoint, self.gammas.control)?;
        Ok(Evaluation {
            state: traj,
            cost,
            adjoint,
            gradient,
        })
    }
}

/// State, cost, adjoint and reduced gradient at one control.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub state: StateTrajectory,
    pub cost: CostBreakdown,
    pub adjoint: AdjointTrajectory,
    pub gradient: ControlField,
}

/// The three cost terms and their sum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub tracking: f64,
    pub terminal: f64,
    pub control: f64,
    pub total: f64,
}

impl CostBreakdown {
    pub fn new(tracking: f64, terminal: f64, control: f64) -> Self {
        Self {
            tracking,
            terminal,
            control,
            total: tracking + terminal + control,
        }
    }
}

/// Trapezoidal weight of node `n` out of `0..=n_steps`.
pub fn trapezoid_weight(n: usize, n_steps: usize) -> f64 {
    if n == 0 || n == n_steps {
        0.5
    } else {
        1.0
    }
}

pub fn evaluate_cost(traj: &StateTrajectory, control: &ControlField, problem: &ProblemConfig) -> Result<CostBreakdown> {
    let n_steps = problem.n_steps();
    if traj.len() != n_steps + 1 || control.len() != n_steps {
        return config_err(format!(
            "shape mismatch: trajectory {} / control {} for {n_steps} steps",
            traj.len(),
            control.len()
        ));
    }
    problem.u_d.check_len(n_steps)?;
    let dt = problem.dt();
    let g = problem.gammas;
    let mut tracking = 0.0;
    for (n, u) in traj.snapshots().iter().enumerate() {
        check_grids(u, problem.u_d.at(n))?;
        let diff = leray_project(&(u - problem.u_d.at(n)));
        tracking += trapezoid_weight(n, n_steps) * da_norm(&diff).powi(2);
    }
    let tracking = 0.5 * g.tracking * dt * tracking;
    check_grids(traj.terminal(), &problem.u_t)?;
    let terminal = 0.5 * g.terminal * (traj.terminal() - &problem.u_t).l2_norm().powi(2);
    let control_term = 0.5 * g.control * control.norm().powi(2);
    Ok(CostBreakdown::new(tracking, terminal, control_term))
}

/// `γ₃ v_n + μ_n` per slice, with `μ_n` the adjoint multiplier of slice `n`.
pub fn reduced_gradient(control: &ControlField, adj: &AdjointTrajectory, gamma3: f64) -> Result<ControlField> {
    if adj.multipliers().len() != control.len() {
        return Err(crate::error::Error::Contract(format!(
            "adjoint has {} multipliers for {} control slices",
            adj.multipliers().len(),
            control.len()
        )));
    }
    control.map_slices(|n, v| Ok(to_physical(&adj.multipliers()[n]).axpy(gamma3, v)))
}

/// Pointwise, componentwise clamp into the box; identity without bounds.
pub fn project_admissible(v: &ControlField, bounds: Option<&Bounds>) -> Result<ControlField> {
    match bounds {
        None => Ok(v.clone()),
        Some(b) => {
            b.validate()?;
            v.map_slices(|n, s| b.clamp_slice(n, s))
        }
    }
}

/// `‖v - Proj(-μ/γ₃)‖` in the space-time l2 norm.
pub fn optimality_residual(
    control: &ControlField,
    adj: &AdjointTrajectory,
    gamma3: f64,
    bounds: Option<&Bounds>,
) -> Result<f64> {
    let zero = control.scaled(0.0);
    let target = reduced_gradient(&zero, adj, gamma3)?.scaled(-1.0 / gamma3);
    let projected = project_admissible(&target, bounds)?;
    Ok(control.axpy(-1.0, &projected)?.norm())
}
