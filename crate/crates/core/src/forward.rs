//! State solver: the LANS-α nonlinearity, the IMEX time stepper and the
//! tangent (linearized) solver.
//!
//! With `H = I - αΔ` (diagonal `1 + α|κ|²`) and `D = (1 + ν dt |κ|²)⁻¹` the
//! scheme advances
//!
//! ```text
//! u_{n+1} = D [ u_n + dt H⁻¹ P (v_n - B(u_n, u_n)) ]
//! ```
//!
//! which is first order, implicit in the linear terms and explicit in `B`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::control::ControlField;
use crate::error::{config_err, Error, Result};
use crate::spectral::{
    add_into, apply_helmholtz, check_grids, leray_project, to_spectral, v_norm, Grid, PaddedView,
    PhysicalField, SpectralField,
};

/// Filter width `α` and viscosity `ν`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub alpha: f64,
    pub nu: f64,
}

impl ModelParams {
    pub fn new(alpha: f64, nu: f64) -> Result<Self> {
        let p = Self { alpha, nu };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return config_err(format!("alpha must be >= 0, got {}", self.alpha));
        }
        if !(self.nu.is_finite() && self.nu > 0.0) {
            return config_err(format!("nu must be > 0, got {}", self.nu));
        }
        Ok(())
    }
}

/// Snapshots `u(t_n)`, `n = 0..=n_steps`.
#[derive(Clone, Debug)]
pub struct StateTrajectory {
    grid: Arc<Grid>,
    snapshots: Vec<SpectralField>,
    params: ModelParams,
}

impl StateTrajectory {
    pub fn from_snapshots(
        grid: &Arc<Grid>,
        snapshots: Vec<SpectralField>,
        params: ModelParams,
    ) -> Result<Self> {
        let expect = grid.spec().n_steps + 1;
        if snapshots.len() != expect {
            return config_err(format!("trajectory has {} snapshots, expected {expect}", snapshots.len()));
        }
        for s in &snapshots {
            s.require_divergence_free("trajectory snapshot")?;
        }
        Ok(Self {
            grid: grid.clone(),
            snapshots,
            params,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn snapshots(&self) -> &[SpectralField] {
        &self.snapshots
    }

    pub fn params(&self) -> ModelParams {
        self.params
    }

    pub fn initial(&self) -> &SpectralField {
        &self.snapshots[0]
    }

    pub fn terminal(&self) -> &SpectralField {
        self.snapshots.last().expect("non-empty trajectory")
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn energy_rows(&self) -> Vec<EnergyRow> {
        let dt = self.grid.spec().dt;
        self.snapshots
            .iter()
            .enumerate()
            .map(|(n, u)| EnergyRow::of(n as f64 * dt, u, self.params.alpha))
            .collect()
    }
}

/// Energy diagnostics of one snapshot.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyRow {
    pub t: f64,
    /// `‖u‖²`
    pub l2_sq: f64,
    /// `α‖∇u‖²`
    pub alpha_grad_sq: f64,
    /// `‖∇u‖²`
    pub grad_sq: f64,
    /// `‖Au‖²`
    pub stokes_sq: f64,
}

impl EnergyRow {
    pub fn of(t: f64, u: &SpectralField, alpha: f64) -> Self {
        let grad_sq = v_norm(u).powi(2);
        Self {
            t,
            l2_sq: u.l2_norm().powi(2),
            alpha_grad_sq: alpha * grad_sq,
            grad_sq,
            stokes_sq: crate::spectral::da_norm(u).powi(2),
        }
    }

    /// Filtered energy `‖u‖² + α‖∇u‖²`.
    pub fn filtered(&self) -> f64 {
        self.l2_sq + self.alpha_grad_sq
    }
}

/// `‖u‖² + α‖∇u‖² = (Hu, u)`.
pub fn filtered_energy(u: &SpectralField, alpha: f64) -> f64 {
    u.l2_norm().powi(2) + alpha * v_norm(u).powi(2)
}

/// Riesz representative of `B(u, v)`:
/// `(u·∇)m + (∇u)*·m` with `m = (I - αΔ) v`, truncated to resolved modes and
/// *not* Leray-projected.
pub fn bilinear_b(u: &SpectralField, v: &SpectralField, alpha: f64) -> Result<SpectralField> {
    check_grids(u, v)?;
    u.require_divergence_free("bilinear_b(u)")?;
    v.require_divergence_free("bilinear_b(v)")?;
    let grid = u.grid();
    let m = apply_helmholtz(v, alpha);
    let pu = grid.padded_view(u.coeffs(), true);
    let pm = grid.padded_view(m.coeffs(), true);
    let mut out = PaddedView::convective(&pu, &pm);
    add_into(&mut out, &PaddedView::transpose_gradient(&pu, &pm), 1.0);
    Ok(SpectralField::raw(grid, grid.from_padded(&out), false))
}

/// Derivative of `u ↦ B(u, u)` at `û` in direction `w`: `B(û, w) + B(w, û)`.
pub fn linearized_bu(u_hat: &SpectralField, w: &SpectralField, alpha: f64) -> Result<SpectralField> {
    Ok(&bilinear_b(u_hat, w, alpha)? + &bilinear_b(w, u_hat, alpha)?)
}

/// Control slice as it enters the state equation: `P v̂`.
pub fn project_control_slice(v: &PhysicalField) -> Result<SpectralField> {
    Ok(leray_project(&to_spectral(v)?))
}

/// `D [ u + dt H⁻¹ r ]` for a solenoidal right-hand side `r`.
pub(crate) fn imex_update(u: &SpectralField, rhs: &SpectralField, params: &ModelParams) -> SpectralField {
    let dt = u.grid().spec().dt;
    let (alpha, nu) = (params.alpha, params.nu);
    let forced = u.axpy(dt, &rhs.scale_modes(|k2| 1.0 / (1.0 + alpha * k2)));
    forced.scale_modes(|k2| 1.0 / (1.0 + nu * dt * k2))
}

fn advance(
    u_n: &SpectralField,
    v_n: &SpectralField,
    params: &ModelParams,
    step: usize,
) -> Result<SpectralField> {
    check_grids(u_n, v_n)?;
    u_n.require_divergence_free("step_forward(u)")?;
    let nonlinear = leray_project(&bilinear_b(u_n, u_n, params.alpha)?);
    let rhs = &leray_project(v_n) - &nonlinear;
    let next = imex_update(u_n, &rhs, params);
    if !next.is_finite() {
        return Err(Error::BlowUp {
            step,
            reason: "non-finite coefficients".into(),
        });
    }
    Ok(next)
}

/// One IMEX step driven by the spectral control `v_n` (projected here if it
/// is not already solenoidal).
pub fn step_forward(u_n: &SpectralField, v_n: &SpectralField, params: &ModelParams) -> Result<SpectralField> {
    advance(u_n, v_n, params, 0)
}

/// Integrate the state equation over `n_steps` steps of the grid.
pub fn solve_forward(u0: &SpectralField, control: &ControlField, params: &ModelParams) -> Result<StateTrajectory> {
    params.validate()?;
    u0.require_divergence_free("solve_forward(u0)")?;
    let grid = u0.grid().clone();
    let n_steps = grid.spec().n_steps;
    if control.len() != n_steps {
        return config_err(format!("control has {} slices, grid has {n_steps} steps", control.len()));
    }
    crate::spectral::check_physical_grids(&grid, control.grid())?;
    let limit = 1e6 * u0.l2_norm() + 1.0;
    let mut snapshots = Vec::with_capacity(n_steps + 1);
    snapshots.push(u0.clone());
    for (n, slice) in control.slices().iter().enumerate() {
        let v_n = project_control_slice(slice)?;
        let next = advance(&snapshots[n], &v_n, params, n)?;
        let norm = next.l2_norm();
        if norm > limit {
            return Err(Error::BlowUp {
                step: n,
                reason: format!("amplitude {norm:.3e} exceeds guard {limit:.3e}"),
            });
        }
        snapshots.push(next);
    }
    Ok(StateTrajectory {
        grid,
        snapshots,
        params: *params,
    })
}

/// Tangent solve `w_{n+1} = D [ w_n + dt H⁻¹ P (g_n - B_u(û_n) w_n) ]`,
/// `w_0 = 0`, along a stored state trajectory.
pub fn solve_linearized(traj: &StateTrajectory, g: &[SpectralField]) -> Result<StateTrajectory> {
    let n_steps = traj.grid.spec().n_steps;
    if g.len() != n_steps {
        return config_err(format!("tangent source has {} slices, expected {n_steps}", g.len()));
    }
    let params = traj.params;
    let mut snapshots = Vec::with_capacity(n_steps + 1);
    snapshots.push(SpectralField::zeros(&traj.grid));
    for (n, g_n) in g.iter().enumerate() {
        check_grids(g_n, &snapshots[n])?;
        let w_n = &snapshots[n];
        let coupling = leray_project(&linearized_bu(&traj.snapshots[n], w_n, params.alpha)?);
        let rhs = &leray_project(g_n) - &coupling;
        let next = imex_update(w_n, &rhs, &params);
        if !next.is_finite() {
            return Err(Error::BlowUp {
                step: n,
                reason: "non-finite tangent".into(),
            });
        }
        snapshots.push(next);
    }
    Ok(StateTrajectory {
        grid: traj.grid.clone(),
        snapshots,
        params,
    })
}
