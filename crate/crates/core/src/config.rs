//! Run configuration (TOML), scenario presets and run manifests.
//!
//! ```toml
//! [grid]
//! n = 8
//! dt = 0.02
//! n_steps = 16
//!
//! [model]
//! alpha = 0.1
//! nu = 0.1
//!
//! [cost]
//! gamma1 = 1.0
//! gamma2 = 1.0
//! gamma3 = 0.01
//!
//! [scenario]
//! preset = "taylor_green"
//! amplitude = 1.0
//! seed = 0
//! ```
//!
//! The model and cost weights have no defaults. `[bounds]` and
//! `[optimizer]` are optional.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::control::{Bounds, ControlField};
use crate::cost::{Gammas, ProblemConfig, Target};
use crate::error::{config_err, Error, Result};
use crate::forward::{solve_forward, ModelParams};
use crate::optimizer::OptimizerOptions;
use crate::random::random_smooth_physical;
use crate::snapshot::{read_any, read_physical};
use crate::spectral::{leray_project, to_spectral, Dealias, Grid, GridSpec, PhysicalField, SpectralField};
use crate::verification::DEFAULT_EPSILONS;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n: usize,
    pub dt: f64,
    pub n_steps: usize,
    #[serde(default = "default_length")]
    pub domain_length: f64,
    #[serde(default = "default_dealias")]
    pub dealias: Dealias,
}

fn default_length() -> f64 {
    TAU
}

fn default_dealias() -> Dealias {
    Dealias::ThreeHalves
}

impl GridSection {
    pub fn spec(&self) -> GridSpec {
        GridSpec {
            n_per_axis: self.n,
            domain_length: self.domain_length,
            dealias_padding: self.dealias,
            dt: self.dt,
            n_steps: self.n_steps,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub alpha: f64,
    pub nu: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSection {
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Zero initial state and targets.
    Zero,
    /// Taylor–Green initial vortex, targets at rest.
    TaylorGreen,
    /// Targets generated by a known control `v*` from a Taylor–Green start.
    Manufactured,
    /// Taylor–Green start, targets at rest, strictly negative upper bounds.
    ConstrainedDemo,
}

impl Preset {
    pub const NAMES: [&'static str; 4] = ["zero", "taylor_green", "manufactured", "constrained_demo"];

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "zero" => Ok(Preset::Zero),
            "taylor_green" => Ok(Preset::TaylorGreen),
            "manufactured" => Ok(Preset::Manufactured),
            "constrained_demo" => Ok(Preset::ConstrainedDemo),
            other => config_err(format!("unknown preset '{other}' (expected one of {:?})", Self::NAMES)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub preset: Preset,
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default)]
    pub seed: u64,
    /// Snapshot files overriding the preset's fields.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u0_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ud_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ut_file: Option<PathBuf>,
}

fn one() -> f64 {
    1.0
}

/// A bound given as one scalar for all components or one per component.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BoundValue {
    Scalar(f64),
    Vector([f64; 3]),
}

impl BoundValue {
    fn expand(self) -> [f64; 3] {
        match self {
            BoundValue::Scalar(x) => [x; 3],
            BoundValue::Vector(v) => v,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<BoundValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<BoundValue>,
    /// Physical snapshot files, broadcast over time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper_file: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradientCheckSection {
    #[serde(default = "default_directions")]
    pub directions: usize,
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
}

fn default_directions() -> usize {
    5
}

fn default_epsilons() -> Vec<f64> {
    DEFAULT_EPSILONS.to_vec()
}

impl Default for GradientCheckSection {
    fn default() -> Self {
        Self {
            directions: default_directions(),
            epsilons: default_epsilons(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSection,
    pub model: ModelSection,
    pub cost: CostSection,
    pub scenario: ScenarioSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoundsSection>,
    #[serde(default)]
    pub optimizer: OptimizerOptions,
    #[serde(default)]
    pub gradient_check: GradientCheckSection,
}

/// A fully built problem plus the controls that go with it.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub problem: ProblemConfig,
    /// Starting control for optimization and the control used by
    /// `solve-forward`: zero.
    pub initial_control: ControlField,
    /// The control that generated the targets (manufactured preset only).
    pub reference_control: Option<ControlField>,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Relative snapshot paths are resolved against the config file's
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        Ok(cfg)
    }

    fn resolve_paths(&mut self, dir: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = dir.join(&*path);
                }
            }
        };
        fix(&mut self.scenario.u0_file);
        fix(&mut self.scenario.ud_file);
        fix(&mut self.scenario.ut_file);
        if let Some(b) = &mut self.bounds {
            fix(&mut b.lower_file);
            fix(&mut b.upper_file);
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is serializable")
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.spec().validate()?;
        ModelParams::new(self.model.alpha, self.model.nu)?;
        self.gammas().validate()?;
        self.optimizer.validate()?;
        if !(self.scenario.amplitude.is_finite() && self.scenario.amplitude >= 0.0) {
            return config_err("scenario.amplitude must be a non-negative number");
        }
        if let Some(b) = &self.bounds {
            if b.lower.is_some() && b.lower_file.is_some() || b.upper.is_some() && b.upper_file.is_some() {
                return config_err("give each bound either as a value or as a file, not both");
            }
            if let (Some(lo), Some(hi)) = (b.lower, b.upper) {
                Bounds::constant(lo.expand(), hi.expand())?;
            }
        }
        if self.gradient_check.epsilons.iter().any(|&e| !(e > 0.0)) || self.gradient_check.epsilons.is_empty() {
            return config_err("gradient_check.epsilons must be non-empty and positive");
        }
        Ok(())
    }

    pub fn gammas(&self) -> Gammas {
        Gammas::new(self.cost.gamma1, self.cost.gamma2, self.cost.gamma3)
    }

    pub fn model(&self) -> Result<ModelParams> {
        ModelParams::new(self.model.alpha, self.model.nu)
    }

    fn build_bounds(&self, grid: &Arc<Grid>) -> Result<Option<Bounds>> {
        let amp = self.scenario.amplitude;
        let Some(b) = &self.bounds else {
            return Ok(match self.scenario.preset {
                Preset::ConstrainedDemo => Some(Bounds::constant([-amp; 3], [-0.1 * amp; 3])?),
                _ => None,
            });
        };
        if b.lower_file.is_none() && b.upper_file.is_none() {
            let lo = b.lower.map(BoundValue::expand).unwrap_or([f64::NEG_INFINITY; 3]);
            let hi = b.upper.map(BoundValue::expand).unwrap_or([f64::INFINITY; 3]);
            return Ok(Some(Bounds::constant(lo, hi)?));
        }
        let field = |file: &Option<PathBuf>, value: Option<BoundValue>, default: f64| -> Result<PhysicalField> {
            match file {
                Some(p) => read_physical(p, grid),
                None => Ok(PhysicalField::constant(grid, value.map(BoundValue::expand).unwrap_or([default; 3]))),
            }
        };
        let lower = field(&b.lower_file, b.lower, f64::NEG_INFINITY)?;
        let upper = field(&b.upper_file, b.upper, f64::INFINITY)?;
        let bounds = Bounds::Fields {
            lower: vec![lower],
            upper: vec![upper],
        };
        bounds.validate()?;
        Ok(Some(bounds))
    }

    /// Build the grid, fields and problem described by the configuration.
    pub fn build(&self) -> Result<Scenario> {
        self.validate()?;
        let grid = Grid::new(self.grid.spec())?;
        let model = self.model()?;
        let amp = self.scenario.amplitude;
        let zero = SpectralField::zeros(&grid);
        let bounds = self.build_bounds(&grid)?;

        let preset_u0 = match self.scenario.preset {
            Preset::Zero => zero.clone(),
            _ => taylor_green(&grid, amp)?,
        };
        let u0 = match &self.scenario.u0_file {
            Some(p) => leray_project(&read_any(p, &grid)?),
            None => preset_u0,
        };

        let mut reference_control = None;
        let mut u_d = Target::Constant(zero.clone());
        let mut u_t = zero.clone();
        if self.scenario.preset == Preset::Manufactured {
            let mut rng = ChaCha8Rng::seed_from_u64(self.scenario.seed);
            let shape = random_smooth_physical(&grid, &mut rng);
            let scale = amp / shape.max_abs().max(f64::MIN_POSITIVE);
            let v_star = ControlField::broadcast(&grid, shape.scaled(scale))?;
            let v_star = crate::cost::project_admissible(&v_star, bounds.as_ref())?;
            let traj = solve_forward(&u0, &v_star, &model)?;
            u_d = Target::Trajectory(traj.snapshots().to_vec());
            u_t = traj.terminal().clone();
            reference_control = Some(v_star);
        }
        if let Some(p) = &self.scenario.ud_file {
            u_d = Target::Constant(read_any(p, &grid)?);
        }
        if let Some(p) = &self.scenario.ut_file {
            u_t = read_any(p, &grid)?;
        }

        let problem = ProblemConfig::new(&grid, model, self.gammas(), u0, u_d, u_t, bounds)?;
        let initial_control = ControlField::zeros(&grid);
        Ok(Scenario {
            problem,
            initial_control,
            reference_control,
        })
    }

    /// The built-in configuration of a preset at desk scale.
    pub fn preset_default(preset: Preset) -> Self {
        let (gammas, optimizer) = match preset {
            Preset::Manufactured => (
                CostSection {
                    gamma1: 100.0,
                    gamma2: 100.0,
                    gamma3: 1e-3,
                },
                OptimizerOptions {
                    max_iter: 2000,
                    residual_tol: 0.0,
                    residual_rtol: 1e-4,
                    ..OptimizerOptions::default()
                },
            ),
            Preset::ConstrainedDemo => (
                CostSection {
                    gamma1: 1.0,
                    gamma2: 1.0,
                    gamma3: 0.1,
                },
                OptimizerOptions {
                    max_iter: 500,
                    residual_tol: 1e-4,
                    ..OptimizerOptions::default()
                },
            ),
            Preset::Zero | Preset::TaylorGreen => (
                CostSection {
                    gamma1: 1.0,
                    gamma2: 1.0,
                    gamma3: 0.1,
                },
                OptimizerOptions::default(),
            ),
        };
        RunConfig {
            grid: GridSection {
                n: 8,
                dt: 0.02,
                n_steps: 16,
                domain_length: TAU,
                dealias: Dealias::ThreeHalves,
            },
            model: ModelSection { alpha: 0.1, nu: 0.1 },
            cost: gammas,
            scenario: ScenarioSection {
                preset,
                amplitude: 1.0,
                seed: 0,
                u0_file: None,
                ud_file: None,
                ut_file: None,
            },
            bounds: None,
            optimizer,
            gradient_check: GradientCheckSection::default(),
        }
    }
}

/// `A (sin x cos y cos z, -cos x sin y cos z, 0)` in scaled coordinates
/// `x ↦ 2πx/L`.
pub fn taylor_green(grid: &Arc<Grid>, amplitude: f64) -> Result<SpectralField> {
    let s = TAU / grid.spec().domain_length;
    let f = PhysicalField::from_fn(grid, |p| {
        let (x, y, z) = (s * p[0], s * p[1], s * p[2]);
        [
            amplitude * x.sin() * y.cos() * z.cos(),
            -amplitude * x.cos() * y.sin() * z.cos(),
            0.0,
        ]
    });
    Ok(leray_project(&to_spectral(&f)?))
}

/// Everything needed to reproduce a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub code_version: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub seed: u64,
    pub threads: usize,
    pub outputs: Vec<String>,
    pub termination: String,
    pub config: RunConfig,
}

impl RunManifest {
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("manifest is serializable")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Format(e.to_string()))
    }
}

pub fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[grid]
n = 8
dt = 0.02
n_steps = 4

[model]
alpha = 0.1
nu = 0.1

[cost]
gamma1 = 1.0
gamma2 = 1.0
gamma3 = 0.01

[scenario]
preset = "taylor_green"
"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let c = RunConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(c.grid.domain_length, TAU);
        assert_eq!(c.scenario.amplitude, 1.0);
        assert_eq!(c.optimizer, OptimizerOptions::default());
        assert!(c.bounds.is_none());
    }

    #[test]
    fn physical_parameters_have_no_defaults() {
        for key in ["alpha = 0.1", "nu = 0.1", "gamma3 = 0.01"] {
            let text = MINIMAL.replace(key, "");
            assert!(matches!(RunConfig::from_toml_str(&text), Err(Error::Config(_))), "{key}");
        }
    }

    #[test]
    fn unknown_keys_and_presets_are_rejected() {
        assert!(RunConfig::from_toml_str(&format!("{MINIMAL}\nfoo = 1\n")).is_err());
        assert!(RunConfig::from_toml_str(&MINIMAL.replace("taylor_green", "vortex")).is_err());
        assert!(Preset::parse("vortex").is_err());
    }

    #[test]
    fn inverted_bounds_are_rejected() {
        let text = format!("{MINIMAL}\n[bounds]\nlower = 1.0\nupper = -1.0\n");
        assert!(matches!(RunConfig::from_toml_str(&text), Err(Error::Config(_))));
    }

    #[test]
    fn config_round_trips_through_toml() {
        let mut c = RunConfig::from_toml_str(MINIMAL).unwrap();
        c.bounds = Some(BoundsSection {
            lower: Some(BoundValue::Scalar(-1.0)),
            upper: Some(BoundValue::Vector([1.0, 2.0, 3.0])),
            ..Default::default()
        });
        let back = RunConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(back, c);
        for p in Preset::NAMES {
            let d = RunConfig::preset_default(Preset::parse(p).unwrap());
            assert_eq!(RunConfig::from_toml_str(&d.to_toml_string()).unwrap(), d);
        }
    }

    #[test]
    fn taylor_green_is_solenoidal_and_resolved() {
        let g = Grid::new(GridSpec::new(8, 0.1, 1)).unwrap();
        let tg = taylor_green(&g, 1.0).unwrap();
        let raw = to_spectral(&PhysicalField::from_fn(&g, |p| {
            [p[0].sin() * p[1].cos() * p[2].cos(), -p[0].cos() * p[1].sin() * p[2].cos(), 0.0]
        }))
        .unwrap();
        assert!((&tg - &raw).l2_norm() < 1e-13 * raw.l2_norm());
    }

    #[test]
    fn manufactured_targets_come_from_reference_control() {
        let mut c = RunConfig::preset_default(Preset::Manufactured);
        c.grid.n_steps = 3;
        let s = c.build().unwrap();
        let v = s.reference_control.as_ref().unwrap();
        let traj = s.problem.solve_state(v).unwrap();
        let cost = crate::cost::evaluate_cost(&traj, v, &s.problem).unwrap();
        assert!(cost.tracking < 1e-20 && cost.terminal < 1e-20);
        assert!(cost.control > 0.0);
    }

    #[test]
    fn constrained_demo_excludes_zero() {
        let s = RunConfig::preset_default(Preset::ConstrainedDemo).build().unwrap();
        assert!(!s.problem.bounds.as_ref().unwrap().contains_zero());
    }

    #[test]
    fn manifest_round_trip() {
        let m = RunManifest {
            command: "optimize".into(),
            code_version: "0.1.0".into(),
            started_unix: 1,
            finished_unix: 2,
            seed: 7,
            threads: 1,
            outputs: vec!["iterations.csv".into()],
            termination: "residual_tol".into(),
            config: RunConfig::preset_default(Preset::ConstrainedDemo),
        };
        assert_eq!(RunManifest::from_toml_str(&m.to_toml_string()).unwrap(), m);
    }
}
