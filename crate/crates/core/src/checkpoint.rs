//! Trajectory checkpoints: a directory of spectral snapshots
//! `snap_NNNNN.bin` plus `manifest.toml`.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::adjoint::AdjointTrajectory;
use crate::cost::Gammas;
use crate::error::{Error, Result};
use crate::forward::{ModelParams, StateTrajectory};
use crate::snapshot::{read_spectral, write_spectral};
use crate::spectral::{Grid, GridSpec, SpectralField};

pub const MANIFEST_NAME: &str = "manifest.toml";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointKind {
    State,
    Adjoint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub kind: CheckpointKind,
    pub alpha: f64,
    pub nu: f64,
    pub dt: f64,
    pub n_steps: usize,
    /// SHA-256 of the control that produced the state.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub control_hash: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gammas: Option<Gammas>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub state_hash: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_hash: Option<String>,
    pub files: Vec<String>,
    pub grid: GridSpec,
}

fn snapshot_name(n: usize) -> String {
    format!("snap_{n:05}.bin")
}

fn write_all(dir: &Path, snapshots: &[SpectralField], manifest: &CheckpointManifest) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (name, s) in manifest.files.iter().zip(snapshots) {
        write_spectral(&dir.join(name), s)?;
    }
    let text = toml::to_string(manifest).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(dir.join(MANIFEST_NAME), text)?;
    Ok(())
}

pub fn write_state_checkpoint(dir: &Path, traj: &StateTrajectory, control_hash: &str) -> Result<CheckpointManifest> {
    let spec = traj.grid().spec().clone();
    let p = traj.params();
    let manifest = CheckpointManifest {
        kind: CheckpointKind::State,
        alpha: p.alpha,
        nu: p.nu,
        dt: spec.dt,
        n_steps: spec.n_steps,
        control_hash: Some(control_hash.to_string()),
        gammas: None,
        state_hash: None,
        target_hash: None,
        files: (0..traj.len()).map(snapshot_name).collect(),
        grid: spec,
    };
    write_all(dir, traj.snapshots(), &manifest)?;
    Ok(manifest)
}

pub fn write_adjoint_checkpoint(
    dir: &Path,
    adj: &AdjointTrajectory,
    params: &ModelParams,
    gammas: &Gammas,
) -> Result<CheckpointManifest> {
    let spec = adj.grid().spec().clone();
    let manifest = CheckpointManifest {
        kind: CheckpointKind::Adjoint,
        alpha: params.alpha,
        nu: params.nu,
        dt: spec.dt,
        n_steps: spec.n_steps,
        control_hash: None,
        gammas: Some(*gammas),
        state_hash: Some(adj.meta().state_hash.clone()),
        target_hash: Some(adj.meta().target_hash.clone()),
        files: (0..adj.snapshots().len()).map(snapshot_name).collect(),
        grid: spec,
    };
    write_all(dir, adj.snapshots(), &manifest)?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<CheckpointManifest> {
    let text = fs::read_to_string(dir.join(MANIFEST_NAME))?;
    toml::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", MANIFEST_NAME)))
}

/// Solenoidal snapshot read back exactly; rejects data with a divergence
/// or unresolved modes.
fn read_solenoidal(path: &Path, grid: &Arc<Grid>) -> Result<SpectralField> {
    let raw = read_spectral(path, grid)?;
    let projected = crate::spectral::leray_project(&raw);
    let scale = raw.max_abs_coeff().max(f64::MIN_POSITIVE);
    if (&raw - &projected).max_abs_coeff() > 1e-12 * scale {
        return Err(Error::Format(format!("{} is not a solenoidal resolved field", path.display())));
    }
    Ok(SpectralField::raw(grid, raw.coeffs().clone(), true))
}

/// Load a state checkpoint; the grid is rebuilt from the manifest.
pub fn read_state_checkpoint(dir: &Path) -> Result<(StateTrajectory, CheckpointManifest)> {
    let manifest = read_manifest(dir)?;
    if manifest.kind != CheckpointKind::State {
        return Err(Error::Format("not a state checkpoint".into()));
    }
    let grid = Grid::new(manifest.grid.clone())?;
    let snapshots = manifest
        .files
        .iter()
        .map(|f| read_solenoidal(&dir.join(f), &grid))
        .collect::<Result<Vec<_>>>()?;
    let traj = StateTrajectory::from_snapshots(&grid, snapshots, ModelParams::new(manifest.alpha, manifest.nu)?)?;
    Ok((traj, manifest))
}

/// Load the adjoint snapshots `λ_0..λ_N` of an adjoint checkpoint.
pub fn read_adjoint_snapshots(dir: &Path) -> Result<(Vec<SpectralField>, CheckpointManifest)> {
    let manifest = read_manifest(dir)?;
    if manifest.kind != CheckpointKind::Adjoint {
        return Err(Error::Format("not an adjoint checkpoint".into()));
    }
    let grid = Grid::new(manifest.grid.clone())?;
    let snapshots = manifest
        .files
        .iter()
        .map(|f| read_solenoidal(&dir.join(f), &grid))
        .collect::<Result<Vec<_>>>()?;
    Ok((snapshots, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adjoint::solve_adjoint;
    use crate::control::ControlField;
    use crate::cost::{ProblemConfig, Target};
    use crate::forward::solve_forward;
    use crate::random::random_solenoidal;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn state_checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::new(GridSpec::new(8, 0.05, 3)).unwrap();
        let p = ModelParams::new(0.2, 0.1).unwrap();
        let u0 = random_solenoidal(&g, &mut ChaCha8Rng::seed_from_u64(1));
        let control = ControlField::zeros(&g);
        let traj = solve_forward(&u0, &control, &p).unwrap();
        let m = write_state_checkpoint(dir.path(), &traj, &control.content_hash()).unwrap();
        let (back, m2) = read_state_checkpoint(dir.path()).unwrap();
        assert_eq!(m, m2);
        assert_eq!(back.params(), p);
        for (a, b) in back.snapshots().iter().zip(traj.snapshots()) {
            assert_eq!(a.coeffs(), b.coeffs());
            assert!(a.is_divergence_free());
        }
        assert_eq!(m2.control_hash.as_deref(), Some(control.content_hash().as_str()));
    }

    #[test]
    fn adjoint_manifest_records_weights_and_hashes() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::new(GridSpec::new(8, 0.05, 2)).unwrap();
        let p = ModelParams::new(0.2, 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u0 = random_solenoidal(&g, &mut rng);
        let problem = ProblemConfig::new(
            &g,
            p,
            Gammas::new(1.0, 2.0, 0.5),
            u0,
            Target::Constant(random_solenoidal(&g, &mut rng)),
            random_solenoidal(&g, &mut rng),
            None,
        )
        .unwrap();
        let traj = problem.solve_state(&ControlField::zeros(&g)).unwrap();
        let adj = solve_adjoint(&traj, &problem).unwrap();
        write_adjoint_checkpoint(dir.path(), &adj, &p, &problem.gammas).unwrap();
        let (snaps, m) = read_adjoint_snapshots(dir.path()).unwrap();
        assert_eq!(m.gammas, Some(problem.gammas));
        assert_eq!(m.target_hash.as_deref(), Some(adj.meta().target_hash.as_str()));
        assert_eq!(snaps.len(), 3);
        assert_eq!(snaps[0].coeffs(), adj.snapshots()[0].coeffs());
        assert!(read_state_checkpoint(dir.path()).is_err());
    }
}
