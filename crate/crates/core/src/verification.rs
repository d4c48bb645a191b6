//! Executable checks of the operator identities and inequalities behind
//! the solver. Every check is deterministic given its seed and reports a
//! measured quantity against a tolerance; `passed` is `measured ≤ tolerance`.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::adjoint::{bilinear_b_star, solve_adjoint_with, AdjointOptions};
use crate::control::ControlField;
use crate::cost::{evaluate_cost, reduced_gradient, Gammas, ProblemConfig, Target};
use crate::error::Result;
use crate::forward::{bilinear_b, linearized_bu, solve_forward, solve_linearized, EnergyRow, ModelParams};
use crate::random::{random_smooth_physical, random_solenoidal};
use crate::spectral::{
    apply_helmholtz, apply_stokes, da_dual_norm, da_norm, l2_inner, leray_project, v_norm, Grid, GridSpec,
    SpectralField,
};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CheckReport {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub context: BTreeMap<String, Value>,
}

impl CheckReport {
    pub fn new(name: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            tolerance,
            passed: measured <= tolerance,
            context: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.context.insert(key.to_string(), value.into());
        self
    }

    /// One JSON object on a single line.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report is serializable")
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Normalized `|⟨B(u,v), u⟩| / (‖∇u‖ ‖Av‖ ‖u‖)` over random solenoidal
/// pairs; the trilinear form is antisymmetric in its first and third slots.
pub fn check_skew_symmetry(n_trials: usize, grid: &Arc<Grid>, alpha: f64, seed: u64) -> Result<CheckReport> {
    let mut rng = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..n_trials {
        let u = random_solenoidal(grid, &mut rng);
        let v = random_solenoidal(grid, &mut rng);
        let pairing = l2_inner(&bilinear_b(&u, &v, alpha)?, &u)?;
        let scale = v_norm(&u) * da_norm(&v) * u.l2_norm();
        if scale > 0.0 {
            worst = worst.max(pairing.abs() / scale);
        }
    }
    Ok(CheckReport::new("skew_symmetry", worst, 1e-12)
        .with("n", grid.n())
        .with("alpha", alpha)
        .with("trials", n_trials)
        .with("seed", seed))
}

fn transpose_defect(u: &SpectralField, h: &SpectralField, lam: &SpectralField, alpha: f64) -> Result<f64> {
    let bu = leray_project(&linearized_bu(u, h, alpha)?);
    let bs = bilinear_b_star(u, lam, alpha)?;
    let lhs = l2_inner(&bu, lam)?;
    let rhs = l2_inner(h, &bs)?;
    let scale = (bu.l2_norm() * lam.l2_norm()).max(h.l2_norm() * bs.l2_norm());
    Ok(if scale == 0.0 { (lhs - rhs).abs() } else { (lhs - rhs).abs() / scale })
}

/// `⟨P B_u(û) h, λ⟩ = ⟨h, B*(û) λ⟩` on random triples, relative defect.
pub fn check_adjoint_identity(n_trials: usize, grid: &Arc<Grid>, alpha: f64, seed: u64) -> Result<CheckReport> {
    let mut rng = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..n_trials {
        let u = random_solenoidal(grid, &mut rng);
        let h = random_solenoidal(grid, &mut rng);
        let lam = random_solenoidal(grid, &mut rng);
        worst = worst.max(transpose_defect(&u, &h, &lam, alpha)?);
    }
    Ok(CheckReport::new("adjoint_identity", worst, 1e-12)
        .with("n", grid.n())
        .with("alpha", alpha)
        .with("trials", n_trials)
        .with("seed", seed))
}

/// An l2-orthonormal basis of the real, resolved, solenoidal fields on
/// `grid`, built by Gram–Schmidt from projected single modes.
pub fn solenoidal_basis(grid: &Arc<Grid>) -> Result<Vec<SpectralField>> {
    let km = grid.kmax();
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let mut basis: Vec<SpectralField> = Vec::new();
    for kz in -km..=km {
        for ky in -km..=km {
            for kx in -km..=km {
                let k = [kx, ky, kz];
                // one representative of each ±k pair
                if (kz, ky, kx) <= (0, 0, 0) {
                    continue;
                }
                for part in [one, Complex64::new(0.0, 1.0)] {
                    for c in 0..3 {
                        let mut amp = [zero; 3];
                        amp[c] = part;
                        let mut e = leray_project(&SpectralField::single_mode(grid, k, amp)?);
                        // two passes of modified Gram–Schmidt
                        for _ in 0..2 {
                            for b in &basis {
                                e = e.axpy(-l2_inner(&e, b)?, b);
                            }
                        }
                        let norm = e.l2_norm();
                        if norm > 1e-8 {
                            basis.push(e.scaled(1.0 / norm));
                        }
                    }
                }
            }
        }
    }
    Ok(basis)
}

/// Dense-matrix form of the adjoint identity: in an orthonormal basis of
/// the solenoidal space, the matrix of `B*(û)` equals the transpose of the
/// matrix of `h ↦ P B_u(û) h` entrywise. Also checks that `B*(û)` maps the
/// space into itself (expansion residual).
pub fn check_dense_transpose(grid: &Arc<Grid>, alpha: f64, seed: u64) -> Result<CheckReport> {
    let mut rng = rng(seed);
    let u = random_solenoidal(grid, &mut rng);
    let basis = solenoidal_basis(grid)?;
    let m = basis.len();
    let forward: Vec<SpectralField> = basis
        .par_iter()
        .map(|e| Ok(leray_project(&linearized_bu(&u, e, alpha)?)))
        .collect::<Result<_>>()?;
    let backward: Vec<SpectralField> = basis
        .par_iter()
        .map(|e| bilinear_b_star(&u, e, alpha))
        .collect::<Result<_>>()?;
    let mut a = vec![vec![0.0; m]; m];
    let mut b = vec![vec![0.0; m]; m];
    let mut expansion = 0.0f64;
    for j in 0..m {
        let mut recon = SpectralField::zeros(grid);
        for i in 0..m {
            a[i][j] = l2_inner(&basis[i], &forward[j])?;
            b[i][j] = l2_inner(&basis[i], &backward[j])?;
            recon = recon.axpy(b[i][j], &basis[i]);
        }
        expansion = expansion.max((&backward[j] - &recon).l2_norm());
    }
    let scale = a.iter().flatten().fold(0.0f64, |s, x| s.max(x.abs()));
    let mut worst = 0.0f64;
    for i in 0..m {
        for j in 0..m {
            worst = worst.max((b[i][j] - a[j][i]).abs());
        }
    }
    let measured = if scale > 0.0 { worst.max(expansion) / scale } else { worst.max(expansion) };
    Ok(CheckReport::new("dense_transpose", measured, 1e-13)
        .with("n", grid.n())
        .with("alpha", alpha)
        .with("dimension", m)
        .with("max_entry", scale)
        .with("expansion_residual", expansion)
        .with("seed", seed))
}

/// `F(u) = A u + P B(u, u)` and its derivative `F_u w = A w + P B_u(u) w`.
fn state_operator(u: &SpectralField, alpha: f64) -> Result<SpectralField> {
    Ok(&apply_stokes(u)? + &leray_project(&bilinear_b(u, u, alpha)?))
}

fn frechet_remainder(u: &SpectralField, w: &SpectralField, alpha: f64) -> Result<SpectralField> {
    let f_uw = state_operator(&(u + w), alpha)?;
    let f_u = state_operator(u, alpha)?;
    let lin = &apply_stokes(w)? + &leray_project(&linearized_bu(u, w, alpha)?);
    Ok(&(&f_uw - &f_u) - &lin)
}

/// `F(u+w) - F(u) - F_u w = P B(w, w)` exactly, relative to `‖F(u+w)‖`.
pub fn check_frechet_remainder(grid: &Arc<Grid>, alpha: f64, seed: u64) -> Result<CheckReport> {
    let mut rng = rng(seed);
    let u = random_solenoidal(grid, &mut rng);
    let w = random_solenoidal(grid, &mut rng);
    let rem = frechet_remainder(&u, &w, alpha)?;
    let bww = leray_project(&bilinear_b(&w, &w, alpha)?);
    let scale = state_operator(&(&u + &w), alpha)?.l2_norm().max(bww.l2_norm());
    let defect = (&rem - &bww).l2_norm() / scale;
    Ok(CheckReport::new("frechet_remainder", defect, 1e-13)
        .with("n", grid.n())
        .with("alpha", alpha)
        .with("scale", scale)
        .with("seed", seed))
}

/// `‖r(2w)‖ / ‖r(w)‖ = 4` for the Fréchet remainder `r`.
pub fn check_quadratic_homogeneity(grid: &Arc<Grid>, alpha: f64, seed: u64) -> Result<CheckReport> {
    let mut rng = rng(seed);
    let u = random_solenoidal(grid, &mut rng);
    let w = random_solenoidal(grid, &mut rng);
    let r1 = frechet_remainder(&u, &w, alpha)?.l2_norm();
    let r2 = frechet_remainder(&u, &w.scaled(2.0), alpha)?.l2_norm();
    let ratio = r2 / r1;
    Ok(CheckReport::new("quadratic_homogeneity", (ratio - 4.0).abs(), 1e-8)
        .with("ratio", ratio)
        .with("alpha", alpha)
        .with("seed", seed))
}

/// Unforced energy decay. Measures the larger of
///
/// * the largest step-to-step increase of `‖u‖² + α‖∇u‖²`, and
/// * the excess of `E_n + dt Σ_{m=1..n} (ν‖∇u_m‖² + 2να‖Au_m‖²)` over `E_0`,
///
/// both relative to `E_0`. Strict decrease is recorded in the context.
pub fn check_energy_decay(u0: &SpectralField, params: &ModelParams) -> Result<CheckReport> {
    let grid = u0.grid();
    let traj = solve_forward(u0, &ControlField::zeros(grid), params)?;
    let dt = grid.spec().dt;
    let rows = traj.energy_rows();
    let e0 = rows[0].filtered();
    let scale = if e0 > 0.0 { e0 } else { 1.0 };
    let mut increase = f64::NEG_INFINITY;
    let mut excess = f64::NEG_INFINITY;
    let mut dissipated = 0.0;
    let mut strict = true;
    for pair in rows.windows(2) {
        let (a, b): (&EnergyRow, &EnergyRow) = (&pair[0], &pair[1]);
        increase = increase.max((b.filtered() - a.filtered()) / scale);
        strict &= e0 == 0.0 || b.filtered() < a.filtered();
        dissipated += dt * params.nu * (b.grad_sq + 2.0 * params.alpha * b.stokes_sq);
        excess = excess.max((b.filtered() + dissipated - e0) / scale);
    }
    let measured = increase.max(excess).max(0.0);
    Ok(CheckReport::new("energy_decay", measured, 0.0)
        .with("initial_energy", e0)
        .with("final_energy", rows.last().map(|r| r.filtered()).unwrap_or(e0))
        .with("max_relative_increase", increase)
        .with("summed_inequality_excess", excess)
        .with("strictly_decreasing", strict)
        .with("steps", rows.len() - 1))
}

/// `‖u‖_{D(A)′} ≤ ‖(I - αΔ)u‖_{D(A)′}`, strict for `α > 0`: the measured
/// value is the largest ratio minus one.
pub fn check_dual_norm_inequality(n_trials: usize, grid: &Arc<Grid>, alpha: f64, seed: u64) -> Result<CheckReport> {
    let mut rng = rng(seed);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..n_trials {
        let u = random_solenoidal(grid, &mut rng);
        let ratio = da_dual_norm(&u) / da_dual_norm(&apply_helmholtz(&u, alpha));
        worst = worst.max(ratio - 1.0);
    }
    let tolerance = if alpha > 0.0 { -f64::EPSILON } else { 0.0 };
    Ok(CheckReport::new("dual_norm_inequality", worst, tolerance)
        .with("alpha", alpha)
        .with("trials", n_trials)
        .with("seed", seed))
}

/// One row of a finite-difference sweep.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SweepRow {
    pub direction: usize,
    pub epsilon: f64,
    pub finite_difference: f64,
    pub adjoint: f64,
    pub relative_error: f64,
}

impl SweepRow {
    pub const CSV_HEADER: &'static str = "direction,epsilon,finite_difference,adjoint,relative_error";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.3e},{:.17e},{:.17e},{:.6e}",
            self.direction, self.epsilon, self.finite_difference, self.adjoint, self.relative_error
        )
    }
}

pub const DEFAULT_EPSILONS: [f64; 7] = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7];

/// Central differences of the reduced cost along `n_directions` random
/// smooth directions at `control`, against the adjoint gradient. For each
/// direction the best error over the ε-sweep (the plateau of the V-shaped
/// curve) is kept; the measured value is the worst plateau error.
pub fn fd_gradient_check(
    problem: &ProblemConfig,
    control: &ControlField,
    n_directions: usize,
    epsilons: &[f64],
    seed: u64,
    options: AdjointOptions,
) -> Result<(CheckReport, Vec<SweepRow>)> {
    let traj = problem.solve_state(control)?;
    let adjoint = solve_adjoint_with(&traj, problem, options)?;
    let gradient = reduced_gradient(control, &adjoint, problem.gammas.control)?;
    let mut rng = rng(seed);
    let directions: Vec<ControlField> = (0..n_directions)
        .map(|_| {
            let d = ControlField::from_slices(
                &problem.grid,
                (0..control.len()).map(|_| random_smooth_physical(&problem.grid, &mut rng)).collect(),
            )
            .expect("slice count");
            let norm = d.norm();
            d.scaled(1.0 / norm)
        })
        .collect();
    let cost_at = |v: &ControlField| -> Result<f64> { Ok(evaluate_cost(&problem.solve_state(v)?, v, problem)?.total) };
    let per_direction: Vec<Vec<SweepRow>> = directions
        .par_iter()
        .enumerate()
        .map(|(i, d)| {
            let adj = gradient.inner(d)?;
            epsilons
                .iter()
                .map(|&eps| {
                    let plus = cost_at(&control.axpy(eps, d)?)?;
                    let minus = cost_at(&control.axpy(-eps, d)?)?;
                    let fd = (plus - minus) / (2.0 * eps);
                    let denom = adj.abs().max(fd.abs()).max(f64::MIN_POSITIVE);
                    Ok(SweepRow {
                        direction: i,
                        epsilon: eps,
                        finite_difference: fd,
                        adjoint: adj,
                        relative_error: (fd - adj).abs() / denom,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let plateaus: Vec<f64> = per_direction
        .iter()
        .map(|rows| rows.iter().fold(f64::INFINITY, |m, r| m.min(r.relative_error)))
        .collect();
    let measured = plateaus.iter().fold(0.0f64, |m, &x| m.max(x));
    let report = CheckReport::new("fd_gradient", measured, 1e-6)
        .with("directions", n_directions)
        .with("epsilons", json!(epsilons))
        .with("plateau_errors", json!(plateaus))
        .with("gradient_norm", gradient.norm())
        .with("corrupted_adjoint", options.corrupt_coupling_sign)
        .with("seed", seed);
    Ok((report, per_direction.into_iter().flatten().collect()))
}

/// Tangent solution against central differences of the state: the worst
/// relative error over the trajectory at the best ε.
pub fn check_tangent_linearization(problem: &ProblemConfig, control: &ControlField, seed: u64) -> Result<CheckReport> {
    let grid = &problem.grid;
    let mut rng = rng(seed);
    let d = ControlField::from_slices(
        grid,
        (0..control.len()).map(|_| random_smooth_physical(grid, &mut rng)).collect(),
    )?;
    let traj = problem.solve_state(control)?;
    let g: Vec<SpectralField> = d
        .slices()
        .iter()
        .map(crate::forward::project_control_slice)
        .collect::<Result<_>>()?;
    let w = solve_linearized(&traj, &g)?;
    let mut best = f64::INFINITY;
    for eps in [1e-3, 1e-4, 1e-5, 1e-6] {
        let plus = problem.solve_state(&control.axpy(eps, &d)?)?;
        let minus = problem.solve_state(&control.axpy(-eps, &d)?)?;
        let mut worst = 0.0f64;
        for n in 1..traj.len() {
            let fd = (&plus.snapshots()[n] - &minus.snapshots()[n]).scaled(0.5 / eps);
            let wn = &w.snapshots()[n];
            worst = worst.max((&fd - wn).l2_norm() / wn.l2_norm().max(f64::MIN_POSITIVE));
        }
        best = best.min(worst);
    }
    Ok(CheckReport::new("tangent_linearization", best, 1e-6).with("seed", seed))
}

/// A small, fully specified control problem used by the default battery.
pub fn reference_problem(n: usize, n_steps: usize, seed: u64) -> Result<(ProblemConfig, ControlField)> {
    let grid = Grid::new(GridSpec::new(n, 0.02, n_steps))?;
    let mut rng = rng(seed);
    let u0 = random_solenoidal(&grid, &mut rng);
    let u_d = random_solenoidal(&grid, &mut rng).scaled(0.5);
    let u_t = random_solenoidal(&grid, &mut rng).scaled(0.5);
    let problem = ProblemConfig::new(
        &grid,
        ModelParams::new(0.1, 0.1)?,
        Gammas::new(1.0, 1.0, 0.1),
        u0,
        Target::Constant(u_d),
        u_t,
        None,
    )?;
    let control = ControlField::from_slices(
        &grid,
        (0..n_steps).map(|_| random_smooth_physical(&grid, &mut rng).scaled(0.5)).collect(),
    )?;
    Ok((problem, control))
}

/// Names accepted by [`run_battery`].
pub const CHECK_NAMES: [&str; 9] = [
    "skew_symmetry",
    "adjoint_identity",
    "dense_transpose",
    "frechet_remainder",
    "quadratic_homogeneity",
    "energy_decay",
    "dual_norm_inequality",
    "fd_gradient",
    "tangent_linearization",
];

/// Run the named checks (all of them for an empty selection) at desk
/// scale: n = 8 (n = 4 for the dense transpose), α ∈ {0, 0.1, 1}.
pub fn run_battery(selection: &[String], seed: u64) -> Result<Vec<CheckReport>> {
    for s in selection {
        if !CHECK_NAMES.contains(&s.as_str()) {
            return crate::error::config_err(format!("unknown check '{s}'"));
        }
    }
    let wanted = |name: &str| selection.is_empty() || selection.iter().any(|s| s == name);
    let grid = Grid::new(GridSpec::new(8, 0.01, 1))?;
    let alphas = [0.0, 0.1, 1.0];
    let mut out = Vec::new();
    for (i, &alpha) in alphas.iter().enumerate() {
        let s = seed.wrapping_add(i as u64);
        if wanted("skew_symmetry") {
            out.push(check_skew_symmetry(50, &grid, alpha, s)?);
        }
        if wanted("adjoint_identity") {
            out.push(check_adjoint_identity(50, &grid, alpha, s)?);
        }
        if wanted("dense_transpose") {
            let small = Grid::new(GridSpec::new(4, 0.01, 1))?;
            out.push(check_dense_transpose(&small, alpha, s)?);
        }
        if wanted("frechet_remainder") {
            out.push(check_frechet_remainder(&grid, alpha, s)?);
        }
        if wanted("quadratic_homogeneity") {
            out.push(check_quadratic_homogeneity(&grid, alpha, s)?);
        }
        if wanted("dual_norm_inequality") {
            out.push(check_dual_norm_inequality(100, &grid, alpha, s)?);
        }
        if wanted("energy_decay") {
            let g = Grid::new(GridSpec::new(8, 0.02, 16))?;
            let u0 = random_solenoidal(&g, &mut rng(s));
            out.push(check_energy_decay(&u0, &ModelParams::new(alpha, 0.05)?)?.with("alpha", alpha));
        }
    }
    if wanted("fd_gradient") || wanted("tangent_linearization") {
        let (problem, control) = reference_problem(8, 16, seed)?;
        if wanted("fd_gradient") {
            out.push(fd_gradient_check(&problem, &control, 5, &DEFAULT_EPSILONS, seed, AdjointOptions::default())?.0);
        }
        if wanted("tangent_linearization") {
            out.push(check_tangent_linearization(&problem, &control, seed)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Arc<Grid> {
        Grid::new(GridSpec::new(n, 0.02, 4)).unwrap()
    }

    #[test]
    fn report_passed_matches_tolerance() {
        assert!(CheckReport::new("x", 1.0, 1.0).passed);
        assert!(!CheckReport::new("x", 1.0 + 1e-15, 1.0).passed);
        let line = CheckReport::new("x", 0.5, 1.0).with("k", 3).to_json_line();
        let back: CheckReport = serde_json::from_str(&line).unwrap();
        assert_eq!(back.context["k"], json!(3));
        assert!(!line.contains('\n'));
    }

    #[test]
    fn basis_dimension_at_n4() {
        // kmax = 1: 26 nonzero wavevectors, two polarizations each
        let b = solenoidal_basis(&grid(4)).unwrap();
        assert_eq!(b.len(), 52);
        for i in [0, 17, 51] {
            assert!((b[i].l2_norm() - 1.0).abs() < 1e-14);
            assert!(l2_inner(&b[i], &b[(i + 5) % 52]).unwrap().abs() < 1e-14);
        }
    }

    #[test]
    fn energy_check_on_zero_field() {
        let g = grid(8);
        let r = check_energy_decay(&SpectralField::zeros(&g), &ModelParams::new(0.1, 0.1).unwrap()).unwrap();
        assert!(r.passed);
        assert_eq!(r.measured, 0.0);
    }

    #[test]
    fn dual_norm_equality_at_zero_alpha() {
        let r = check_dual_norm_inequality(10, &grid(8), 0.0, 1).unwrap();
        assert_eq!(r.measured, 0.0);
        assert!(r.passed);
    }

    #[test]
    fn control_penalty_only_gradient_is_exact() {
        let g = Grid::new(GridSpec::new(8, 0.05, 4)).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(9);
        let u0 = random_solenoidal(&g, &mut r);
        let problem = ProblemConfig::new(
            &g,
            ModelParams::new(0.1, 0.1).unwrap(),
            Gammas::new(0.0, 0.0, 2.0),
            u0,
            Target::Constant(SpectralField::zeros(&g)),
            SpectralField::zeros(&g),
            None,
        )
        .unwrap();
        let v = ControlField::broadcast(&g, random_smooth_physical(&g, &mut r)).unwrap();
        let (rep, rows) = fd_gradient_check(&problem, &v, 2, &[1e-2, 1e-3], 3, AdjointOptions::default()).unwrap();
        assert!(rep.measured < 1e-10, "{rep:?}");
        assert_eq!(rows.len(), 4);
    }

    #[test]
    fn unknown_check_name_is_config_error() {
        let err = run_battery(&["nope".to_string()], 0).unwrap_err();
        assert!(matches!(err, crate::error::Error::Config(_)));
    }
}
