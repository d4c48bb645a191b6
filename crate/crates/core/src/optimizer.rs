//! Projected gradient descent with Armijo backtracking.
//!
//! Each iteration performs one forward and one adjoint solve at the current
//! control, then backtracks along the projected path
//! `v(s) = Proj(v - s ∇J(v))` until the sufficient-decrease condition
//! `J(v(s)) ≤ J(v) - (c/s) ‖v(s) - v‖²` holds. Trial points only need the
//! cost, so a rejected step costs one forward solve.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::adjoint::AdjointTrajectory;
use crate::control::ControlField;
use crate::cost::{
    evaluate_cost, optimality_residual, project_admissible, CostBreakdown, Evaluation, ProblemConfig,
};
use crate::error::{config_err, Error, Result};
use crate::forward::{bilinear_b, StateTrajectory};
use crate::spectral::{apply_helmholtz, l2_inner, leray_project, to_physical};

/// Relative cost decrease below which an iteration counts as stalled.
pub const STAGNATION_RTOL: f64 = 1e-12;
/// Number of consecutive iterations inspected for stagnation.
pub const STAGNATION_WINDOW: usize = 5;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerOptions {
    pub max_iter: usize,
    /// Initial trial step of every line search; `None` means `1/γ₃`.
    pub step0: Option<f64>,
    pub armijo_c: f64,
    pub shrink: f64,
    /// Absolute tolerance on the optimality residual.
    pub residual_tol: f64,
    /// Tolerance relative to the residual at the starting control. The run
    /// stops when either tolerance is met.
    pub residual_rtol: f64,
    pub max_shrinks: usize,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            step0: None,
            armijo_c: 1e-4,
            shrink: 0.5,
            residual_tol: 1e-8,
            residual_rtol: 0.0,
            max_shrinks: 40,
        }
    }
}

impl OptimizerOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return config_err(format!("armijo_c must lie in (0, 1), got {}", self.armijo_c));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return config_err(format!("shrink must lie in (0, 1), got {}", self.shrink));
        }
        if let Some(s) = self.step0 {
            if !(s > 0.0 && s.is_finite()) {
                return config_err(format!("step0 must be positive, got {s}"));
            }
        }
        if !(self.residual_tol >= 0.0) || !(self.residual_rtol >= 0.0) {
            return config_err("residual tolerances must be non-negative");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ResidualTol,
    MaxIter,
    LineSearchFail,
    Stagnation,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::ResidualTol => "residual_tol",
            Termination::MaxIter => "max_iter",
            Termination::LineSearchFail => "line_search_fail",
            Termination::Stagnation => "stagnation",
        }
    }
}

/// One row of the iteration log. Iteration 0 is the starting control.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub cost: CostBreakdown,
    pub residual: f64,
    /// Accepted step; 0 for the starting row.
    pub step_size: f64,
    pub wall_ms: f64,
}

impl IterationRecord {
    pub const CSV_HEADER: &'static str = "iter,tracking,terminal,control,total,residual,step_size,wall_ms";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.3}",
            self.iter,
            self.cost.tracking,
            self.cost.terminal,
            self.cost.control,
            self.cost.total,
            self.residual,
            self.step_size,
            self.wall_ms
        )
    }
}

#[derive(Clone, Debug)]
pub struct OptimizationResult {
    pub final_control: ControlField,
    pub cost_history: Vec<CostBreakdown>,
    pub residual_history: Vec<f64>,
    pub iterations: usize,
    pub termination: Termination,
    pub records: Vec<IterationRecord>,
    /// State, adjoint and gradient at `final_control`.
    pub final_evaluation: Evaluation,
}

/// Decide whether to stop after the latest iterate. `costs` holds the total
/// cost of every accepted iterate including the start; `iter` is the number
/// of completed iterations.
pub fn check_convergence(
    costs: &[f64],
    residual: f64,
    tol: f64,
    iter: usize,
    max_iter: usize,
) -> Option<Termination> {
    if residual <= tol {
        return Some(Termination::ResidualTol);
    }
    if iter >= max_iter {
        return Some(Termination::MaxIter);
    }
    if costs.len() > STAGNATION_WINDOW {
        let last = costs[costs.len() - 1];
        let first = costs[costs.len() - 1 - STAGNATION_WINDOW];
        let scale = first.abs().max(f64::MIN_POSITIVE);
        if (first - last) / scale < STAGNATION_RTOL {
            return Some(Termination::Stagnation);
        }
    }
    None
}

/// Minimize the reduced cost over the admissible box, starting from
/// `Proj(initial)` (or `Proj(0)`). `observer` sees every accepted iterate.
pub fn projected_gradient(
    problem: &ProblemConfig,
    opts: &OptimizerOptions,
    initial: Option<&ControlField>,
    mut observer: impl FnMut(&IterationRecord),
) -> Result<OptimizationResult> {
    problem.validate()?;
    opts.validate()?;
    let started = Instant::now();
    let bounds = problem.bounds.as_ref();
    let gamma3 = problem.gammas.control;
    let step0 = opts.step0.unwrap_or(1.0 / gamma3);

    let start = match initial {
        Some(v) => v.clone(),
        None => ControlField::zeros(&problem.grid),
    };
    let mut control = project_admissible(&start, bounds)?;
    let mut eval = problem.evaluate(&control)?;
    let mut residual = optimality_residual(&control, &eval.adjoint, gamma3, bounds)?;
    let tol = opts.residual_tol.max(opts.residual_rtol * residual);

    let mut records = Vec::new();
    let mut costs = vec![eval.cost.total];
    let push = |records: &mut Vec<IterationRecord>, r: IterationRecord, obs: &mut dyn FnMut(&IterationRecord)| {
        obs(&r);
        records.push(r);
    };
    push(
        &mut records,
        IterationRecord {
            iter: 0,
            cost: eval.cost,
            residual,
            step_size: 0.0,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        },
        &mut observer,
    );

    let mut iter = 0;
    let termination = loop {
        if let Some(t) = check_convergence(&costs, residual, tol, iter, opts.max_iter) {
            break t;
        }
        let Some((next, step)) = line_search(problem, opts, &control, &eval, step0)? else {
            break Termination::LineSearchFail;
        };
        if next.axpy(-1.0, &control)?.max_abs() == 0.0 {
            break Termination::Stagnation;
        }
        control = next;
        eval = problem.evaluate(&control)?;
        residual = optimality_residual(&control, &eval.adjoint, gamma3, bounds)?;
        iter += 1;
        costs.push(eval.cost.total);
        log::debug!(
            "iter {iter}: J = {:.6e}, residual = {residual:.3e}, step = {step:.3e}",
            eval.cost.total
        );
        push(
            &mut records,
            IterationRecord {
                iter,
                cost: eval.cost,
                residual,
                step_size: step,
                wall_ms: started.elapsed().as_secs_f64() * 1e3,
            },
            &mut observer,
        );
    };
    log::info!(
        "projected gradient finished after {iter} iterations: {}",
        termination.as_str()
    );
    Ok(OptimizationResult {
        final_control: control,
        cost_history: records.iter().map(|r| r.cost).collect(),
        residual_history: records.iter().map(|r| r.residual).collect(),
        iterations: iter,
        termination,
        records,
        final_evaluation: eval,
    })
}

/// Backtracking along the projected path. Returns the accepted control and
/// step, or `None` once the shrink budget is exhausted. Trial points where
/// the state solve blows up count as rejections.
fn line_search(
    problem: &ProblemConfig,
    opts: &OptimizerOptions,
    control: &ControlField,
    eval: &Evaluation,
    step0: f64,
) -> Result<Option<(ControlField, f64)>> {
    let bounds = problem.bounds.as_ref();
    let mut step = step0;
    for _ in 0..=opts.max_shrinks {
        let trial = project_admissible(&control.axpy(-step, &eval.gradient)?, bounds)?;
        let moved = trial.axpy(-1.0, control)?.norm();
        let accepted = match problem.reduced_cost(&trial) {
            Ok(c) => c.total <= eval.cost.total - opts.armijo_c / step * moved * moved,
            Err(Error::BlowUp { .. }) => false,
            Err(e) => return Err(e),
        };
        if accepted {
            return Ok(Some((trial, step)));
        }
        step *= opts.shrink;
    }
    Ok(None)
}

/// Discrete Lagrangian `J(û, v) - Σ_n ⟨F_n(û, v), μ_n⟩` where
/// `F_n = H D⁻¹ û_{n+1} - H û_n + dt P(B(û_n, û_n) - v_n)` is the residual
/// of step `n` of the state scheme (scaled by `H`), evaluated at a fixed
/// state and adjoint.
pub fn discrete_lagrangian(
    problem: &ProblemConfig,
    state: &StateTrajectory,
    adjoint: &AdjointTrajectory,
    control: &ControlField,
) -> Result<f64> {
    let n_steps = problem.n_steps();
    if adjoint.multipliers().len() != n_steps || state.len() != n_steps + 1 {
        return config_err("state/adjoint length does not match the grid");
    }
    let cost = evaluate_cost(state, control, problem)?.total;
    let dt = problem.dt();
    let (alpha, nu) = (problem.model.alpha, problem.model.nu);
    let mut coupling = 0.0;
    for n in 0..n_steps {
        let u_n = &state.snapshots()[n];
        let u_next = &state.snapshots()[n + 1];
        let mu = &adjoint.multipliers()[n];
        let implicit = u_next.scale_modes(|k2| (1.0 + alpha * k2) * (1.0 + nu * dt * k2));
        let explicit = apply_helmholtz(u_n, alpha);
        let nonlinear = leray_project(&bilinear_b(u_n, u_n, alpha)?).scaled(dt);
        let state_part = l2_inner(&(&(&implicit - &explicit) + &nonlinear), mu)?;
        let control_part = dt * to_physical(mu).inner(&control.slices()[n])?;
        coupling += state_part - control_part;
    }
    Ok(cost - coupling)
}
