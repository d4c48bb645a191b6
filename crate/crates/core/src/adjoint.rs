//! Backward-in-time adjoint solver.
//!
//! The sweep is the algebraic transpose of the tangent scheme in
//! [`crate::forward`]. For a functional `Φ(w) = Σ_n ⟨r_n, w_n⟩` of the
//! tangent trajectory, the co-states `p_n` obey `p_N = r_N`,
//! `p_n = r_n + M_nᵀ p_{n+1}` with `M_n = D (I - dt H⁻¹ P B_u(û_n))`.
//! Writing `λ_n = H⁻¹ p_n` this becomes
//!
//! ```text
//! μ_n = D λ_{n+1}
//! λ_n = μ_n - dt H⁻¹ B*(û_n) μ_n + H⁻¹ r_n
//! ```
//!
//! and `Φ = dt Σ_n ⟨μ_n, P g_n⟩`, so `μ_n` is the multiplier paired with
//! control slice `n`. The stored terminal snapshot is
//! `λ_N = H⁻¹ γ₂ P(û(T) - u_T)`; the endpoint share of the tracking term
//! is added when seeding the first backward step.

use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::control::hex_digest;
use crate::cost::{trapezoid_weight, ProblemConfig, Target};
use crate::error::{config_err, Error, Result};
use crate::forward::{ModelParams, StateTrajectory};
use crate::spectral::{
    add_into, apply_helmholtz, check_grids, invert_helmholtz, leray_project, Grid, PaddedView, SpectralField,
};

/// Adjoint of `w ↦ P B_u(û) w` on solenoidal fields:
///
/// ```text
/// B*(û)λ = P[ -û·∇λ + αΔ(û·∇λ) - αΔ(λ·∇û) - (∇λ)*·(I - αΔ)û + α λ·∇Δû ]
/// ```
pub fn bilinear_b_star(u_hat: &SpectralField, lambda: &SpectralField, alpha: f64) -> Result<SpectralField> {
    check_grids(u_hat, lambda)?;
    u_hat.require_divergence_free("bilinear_b_star(u_hat)")?;
    lambda.require_divergence_free("bilinear_b_star(lambda)")?;
    let grid = u_hat.grid();
    let pu = grid.padded_view(u_hat.coeffs(), true);
    let pl = grid.padded_view(lambda.coeffs(), true);
    let pm = grid.padded_view(apply_helmholtz(u_hat, alpha).coeffs(), false);
    let plap = grid.padded_view(u_hat.scale_modes(|k2| -k2).coeffs(), true);

    let u_grad_l = SpectralField::raw(grid, grid.from_padded(&PaddedView::convective(&pu, &pl)), false);
    let l_grad_u = SpectralField::raw(grid, grid.from_padded(&PaddedView::convective(&pl, &pu)), false);
    let mut rest = PaddedView::transpose_gradient(&pl, &pm);
    for c in rest.iter_mut() {
        c.mapv_inplace(|x| -x);
    }
    add_into(&mut rest, &PaddedView::convective(&pl, &plap), alpha);
    let rest = SpectralField::raw(grid, grid.from_padded(&rest), false);

    // -(I - αΔ)(û·∇λ) - αΔ(λ·∇û)
    let out = &(&(-&apply_helmholtz(&u_grad_l, alpha)) + &l_grad_u.scale_modes(|k2| alpha * k2)) + &rest;
    Ok(leray_project(&out))
}

/// `λ(T) = H⁻¹ P γ₂ (û(T) - u_T)`.
pub fn terminal_condition(
    u_t_state: &SpectralField,
    u_t_target: &SpectralField,
    gamma2: f64,
    alpha: f64,
) -> Result<SpectralField> {
    check_grids(u_t_state, u_t_target)?;
    let diff = leray_project(&(u_t_state - u_t_target));
    Ok(invert_helmholtz(&diff.scaled(gamma2), alpha))
}

/// Tracking source `γ₁ c dt A²(û - u_d)`, the l2 representative of the
/// tracking term's derivative at one time node with quadrature weight `c`.
fn tracking_source(u_hat: &SpectralField, u_d: &SpectralField, gamma1_weighted: f64) -> Result<SpectralField> {
    check_grids(u_hat, u_d)?;
    let dt = u_hat.grid().spec().dt;
    let diff = leray_project(&(u_hat - u_d));
    Ok(diff.scale_modes(|k2| gamma1_weighted * dt * k2 * k2))
}

fn backward_update(
    lambda_next: &SpectralField,
    u_hat_n: &SpectralField,
    source: Option<&SpectralField>,
    params: &ModelParams,
    coupling_sign: f64,
) -> Result<(SpectralField, SpectralField)> {
    check_grids(lambda_next, u_hat_n)?;
    lambda_next.require_divergence_free("step_backward(lambda)")?;
    let dt = u_hat_n.grid().spec().dt;
    let (alpha, nu) = (params.alpha, params.nu);
    let mu = lambda_next.scale_modes(|k2| 1.0 / (1.0 + nu * dt * k2));
    let coupling = bilinear_b_star(u_hat_n, &mu, alpha)?;
    let mut rhs = coupling.scaled(-dt * coupling_sign);
    if let Some(r) = source {
        rhs = &rhs + &leray_project(r);
    }
    let lambda = &mu + &invert_helmholtz(&rhs, alpha);
    if !lambda.is_finite() {
        return Err(Error::BlowUp {
            step: 0,
            reason: "non-finite adjoint".into(),
        });
    }
    Ok((lambda, mu))
}

/// One backward step `λ_{n+1} ↦ λ_n` driven by the state `û_n` and the
/// tracking target `u_d,n`. `gamma1_weighted` is `γ₁` times the time
/// quadrature weight of node `n`.
pub fn step_backward(
    lambda_next: &SpectralField,
    u_hat_n: &SpectralField,
    u_d_n: &SpectralField,
    gamma1_weighted: f64,
    params: &ModelParams,
) -> Result<SpectralField> {
    let source = tracking_source(u_hat_n, u_d_n, gamma1_weighted)?;
    Ok(backward_update(lambda_next, u_hat_n, Some(&source), params, 1.0)?.0)
}

/// Identifies the data an adjoint trajectory was computed from.
#[derive(Clone, Debug, PartialEq)]
pub struct AdjointMeta {
    pub gamma1: f64,
    pub gamma2: f64,
    pub state_hash: String,
    pub target_hash: String,
}

/// Adjoint snapshots `λ_n`, `n = 0..=n_steps`, and the control multipliers
/// `μ_n`, `n = 0..n_steps`.
#[derive(Clone, Debug)]
pub struct AdjointTrajectory {
    grid: Arc<Grid>,
    snapshots: Vec<SpectralField>,
    multipliers: Vec<SpectralField>,
    meta: AdjointMeta,
}

impl AdjointTrajectory {
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn snapshots(&self) -> &[SpectralField] {
        &self.snapshots
    }

    /// `μ_n`: the adjoint evaluated where control slice `n` enters the
    /// scheme. The reduced gradient of slice `n` is `γ₃ v_n + μ_n`.
    pub fn multipliers(&self) -> &[SpectralField] {
        &self.multipliers
    }

    pub fn terminal(&self) -> &SpectralField {
        self.snapshots.last().expect("non-empty adjoint")
    }

    pub fn meta(&self) -> &AdjointMeta {
        &self.meta
    }
}

/// Knobs for diagnostics; the default is the exact transpose.
#[derive(Clone, Copy, Debug, Default)]
pub struct AdjointOptions {
    /// Flip the sign of the `B*` coupling. Produces a wrong gradient on
    /// purpose; used as a negative control by the gradient checker.
    pub corrupt_coupling_sign: bool,
}

fn sweep(
    traj: &StateTrajectory,
    terminal_snapshot: SpectralField,
    seed: SpectralField,
    mut source: impl FnMut(usize) -> Result<Option<SpectralField>>,
    options: AdjointOptions,
) -> Result<(Vec<SpectralField>, Vec<SpectralField>)> {
    let n_steps = traj.grid().spec().n_steps;
    let params = traj.params();
    let sign = if options.corrupt_coupling_sign { -1.0 } else { 1.0 };
    let mut snapshots = vec![SpectralField::zeros(traj.grid()); n_steps + 1];
    let mut multipliers = vec![SpectralField::zeros(traj.grid()); n_steps];
    snapshots[n_steps] = terminal_snapshot;
    let mut next = seed;
    for n in (0..n_steps).rev() {
        let r = source(n)?;
        let (lambda, mu) = backward_update(&next, &traj.snapshots()[n], r.as_ref(), &params, sign)
            .map_err(|e| match e {
                Error::BlowUp { reason, .. } => Error::BlowUp { step: n, reason },
                other => other,
            })?;
        multipliers[n] = mu;
        snapshots[n] = lambda.clone();
        next = lambda;
    }
    Ok((snapshots, multipliers))
}

fn hash_fields<'a>(fields: impl IntoIterator<Item = &'a SpectralField>) -> String {
    let mut h = Sha256::new();
    for f in fields {
        for c in f.coeffs().iter() {
            h.update(c.re.to_le_bytes());
            h.update(c.im.to_le_bytes());
        }
    }
    hex_digest(h)
}

/// Adjoint of the discrete cost: tracking target `u_d`, terminal target
/// `u_T`, weights from `problem.gammas`.
pub fn solve_adjoint(traj: &StateTrajectory, problem: &ProblemConfig) -> Result<AdjointTrajectory> {
    solve_adjoint_with(traj, problem, AdjointOptions::default())
}

pub fn solve_adjoint_with(
    traj: &StateTrajectory,
    problem: &ProblemConfig,
    options: AdjointOptions,
) -> Result<AdjointTrajectory> {
    let n_steps = traj.grid().spec().n_steps;
    if traj.len() != n_steps + 1 {
        return config_err("state trajectory is incomplete");
    }
    problem.u_d.check_len(n_steps)?;
    let alpha = traj.params().alpha;
    let g = problem.gammas;
    let terminal = terminal_condition(traj.terminal(), &problem.u_t, g.terminal, alpha)?;
    let end_tracking = tracking_source(
        traj.terminal(),
        problem.u_d.at(n_steps),
        g.tracking * trapezoid_weight(n_steps, n_steps),
    )?;
    let seed = &terminal + &invert_helmholtz(&end_tracking, alpha);
    let (snapshots, multipliers) = sweep(
        traj,
        terminal,
        seed,
        |n| {
            let w = g.tracking * trapezoid_weight(n, n_steps);
            Ok(Some(tracking_source(&traj.snapshots()[n], problem.u_d.at(n), w)?))
        },
        options,
    )?;
    let target_hash = match &problem.u_d {
        Target::Constant(f) => hash_fields([f, &problem.u_t]),
        Target::Trajectory(v) => hash_fields(v.iter().chain([&problem.u_t])),
    };
    Ok(AdjointTrajectory {
        grid: traj.grid().clone(),
        snapshots,
        multipliers,
        meta: AdjointMeta {
            gamma1: g.tracking,
            gamma2: g.terminal,
            state_hash: hash_fields(traj.snapshots()),
            target_hash,
        },
    })
}

/// Adjoint for a general linear functional of the tangent trajectory,
/// `Φ(w) = ⟨terminal, w_N⟩ + Σ_{n<N} ⟨interior_n, w_n⟩`. Then
/// `Φ(solve_linearized(traj, g)) = dt Σ_n ⟨μ_n, P g_n⟩`.
pub fn solve_adjoint_for_functional(
    traj: &StateTrajectory,
    terminal: &SpectralField,
    interior: &[SpectralField],
) -> Result<AdjointTrajectory> {
    let n_steps = traj.grid().spec().n_steps;
    if interior.len() != n_steps {
        return config_err(format!("expected {n_steps} interior sources, got {}", interior.len()));
    }
    let alpha = traj.params().alpha;
    let lam_t = invert_helmholtz(&leray_project(terminal), alpha);
    let (snapshots, multipliers) = sweep(
        traj,
        lam_t.clone(),
        lam_t,
        |n| Ok(Some(interior[n].clone())),
        AdjointOptions::default(),
    )?;
    Ok(AdjointTrajectory {
        grid: traj.grid().clone(),
        snapshots,
        multipliers,
        meta: AdjointMeta {
            gamma1: 0.0,
            gamma2: 1.0,
            state_hash: hash_fields(traj.snapshots()),
            target_hash: hash_fields(std::iter::once(terminal).chain(interior)),
        },
    })
}
