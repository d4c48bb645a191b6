//! `lansa`: batch front end for the LANS-α control solvers.
//!
//! Exit codes: 0 success, 1 failed check, 2 configuration error,
//! 3 state blow-up, 4 optimizer hit `max_iter`, 5 line search failed,
//! 6 optimizer stagnated.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use lansa_core::checkpoint::{write_adjoint_checkpoint, write_state_checkpoint};
use lansa_core::config::{unix_now, Preset, RunConfig, RunManifest};
use lansa_core::optimizer::{projected_gradient, IterationRecord, Termination};
use lansa_core::snapshot::write_physical;
use lansa_core::verification::{fd_gradient_check, run_battery, SweepRow, CHECK_NAMES};
use lansa_core::{AdjointOptions, ControlField, Error};

#[derive(Parser, Debug)]
#[command(
    name = "lansa",
    version,
    about = "Optimal control of the LANS-alpha equations on a periodic box",
    after_help = "Exit codes: 0 ok, 1 check failed, 2 configuration error, 3 blow-up, \
                  4 max_iter, 5 line search failed, 6 stagnation"
)]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run directory; every output goes below it.
    #[arg(long, global = true, default_value = "lansa-run")]
    out: PathBuf,
    /// Overrides `scenario.seed`; also seeds the verification battery.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for data-parallel kernels (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Scenario preset; used alone or to override the config's preset.
    #[arg(long, global = true)]
    preset: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate the state equation with zero control.
    SolveForward,
    /// Minimize the tracking cost by projected gradient descent.
    Optimize,
    /// Run the verification battery (all checks unless some are named).
    Verify {
        /// Check names.
        checks: Vec<String>,
    },
    /// Compare the adjoint gradient with central finite differences.
    CheckGradient {
        /// Flip the sign of the adjoint coupling (negative control).
        #[arg(long)]
        corrupt_adjoint: bool,
    },
}

/// Failure classes with stable exit codes.
enum Failure {
    Config(String),
    BlowUp(String),
    Other(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::BlowUp { .. } => Failure::BlowUp(e.to_string()),
            Error::Config(_) | Error::Format(_) | Error::Contract(_) => Failure::Config(e.to_string()),
            Error::Io(_) => Failure::Other(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Other(e.to_string())
    }
}

type Outcome = Result<u8, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    let outcome = match &cli.command {
        Command::SolveForward => solve_forward(&cli),
        Command::Optimize => optimize(&cli),
        Command::Verify { checks } => verify(&cli, checks),
        Command::CheckGradient { corrupt_adjoint } => check_gradient(&cli, *corrupt_adjoint),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Config(m)) => {
            log::error!("configuration error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::BlowUp(m)) => {
            log::error!("{m}");
            ExitCode::from(3)
        }
        Err(Failure::Other(m)) => {
            log::error!("{m}");
            ExitCode::from(1)
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let preset = cli.preset.as_deref().map(Preset::parse).transpose()?;
    let mut cfg = match (&cli.config, preset) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, Some(p)) => RunConfig::preset_default(p),
        (None, None) => return Err(Failure::Config("give --config PATH or --preset NAME".into())),
    };
    if let (Some(p), Some(_)) = (preset, &cli.config) {
        cfg.scenario.preset = p;
    }
    if let Some(seed) = cli.seed {
        cfg.scenario.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn threads(cli: &Cli) -> usize {
    cli.threads.unwrap_or_else(rayon::current_num_threads)
}

fn write_manifest(
    cli: &Cli,
    command: &str,
    started: u64,
    cfg: &RunConfig,
    outputs: Vec<String>,
    termination: &str,
) -> Result<(), Failure> {
    let manifest = RunManifest {
        command: command.to_string(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        started_unix: started,
        finished_unix: unix_now(),
        seed: cfg.scenario.seed,
        threads: threads(cli),
        outputs,
        termination: termination.to_string(),
        config: cfg.clone(),
    };
    fs::write(cli.out.join("manifest.toml"), manifest.to_toml_string())?;
    Ok(())
}

fn create_out(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn solve_forward(cli: &Cli) -> Outcome {
    let started = unix_now();
    let cfg = load_config(cli)?;
    let scenario = cfg.build()?;
    create_out(&cli.out)?;
    let control = &scenario.initial_control;
    let traj = scenario.problem.solve_state(control)?;
    write_state_checkpoint(&cli.out.join("trajectory"), &traj, &control.content_hash())?;
    let mut csv = BufWriter::new(File::create(cli.out.join("energy.csv"))?);
    writeln!(csv, "t,l2_sq,alpha_grad_sq,grad_sq,stokes_sq")?;
    for r in traj.energy_rows() {
        writeln!(
            csv,
            "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
            r.t, r.l2_sq, r.alpha_grad_sq, r.grad_sq, r.stokes_sq
        )?;
    }
    csv.flush()?;
    write_manifest(
        cli,
        "solve-forward",
        started,
        &cfg,
        vec!["trajectory".into(), "energy.csv".into()],
        "completed",
    )?;
    log::info!("wrote {} snapshots to {}", traj.len(), cli.out.display());
    Ok(0)
}

fn write_control(dir: &Path, control: &ControlField) -> Result<(), Failure> {
    fs::create_dir_all(dir)?;
    for (n, s) in control.slices().iter().enumerate() {
        write_physical(&dir.join(format!("control_{n:05}.bin")), s)?;
    }
    fs::write(dir.join("hash.txt"), control.content_hash() + "\n")?;
    Ok(())
}

fn optimize(cli: &Cli) -> Outcome {
    let started = unix_now();
    let cfg = load_config(cli)?;
    let scenario = cfg.build()?;
    create_out(&cli.out)?;
    let mut csv = BufWriter::new(File::create(cli.out.join("iterations.csv"))?);
    writeln!(csv, "{}", IterationRecord::CSV_HEADER)?;
    let mut io_error = None;
    let result = projected_gradient(&scenario.problem, &cfg.optimizer, Some(&scenario.initial_control), |r| {
        if let Err(e) = writeln!(csv, "{}", r.csv_row()) {
            io_error.get_or_insert(e);
        }
        log::info!(
            "iter {:4}  J = {:.6e}  residual = {:.3e}  step = {:.3e}",
            r.iter,
            r.cost.total,
            r.residual,
            r.step_size
        );
    })?;
    if let Some(e) = io_error {
        return Err(e.into());
    }
    csv.flush()?;
    write_control(&cli.out.join("final_control"), &result.final_control)?;
    let eval = &result.final_evaluation;
    write_state_checkpoint(&cli.out.join("state"), &eval.state, &result.final_control.content_hash())?;
    write_adjoint_checkpoint(
        &cli.out.join("adjoint"),
        &eval.adjoint,
        &scenario.problem.model,
        &scenario.problem.gammas,
    )?;
    write_manifest(
        cli,
        "optimize",
        started,
        &cfg,
        vec![
            "iterations.csv".into(),
            "final_control".into(),
            "state".into(),
            "adjoint".into(),
        ],
        result.termination.as_str(),
    )?;
    Ok(match result.termination {
        Termination::ResidualTol => 0,
        Termination::MaxIter => 4,
        Termination::LineSearchFail => 5,
        Termination::Stagnation => 6,
    })
}

fn verify(cli: &Cli, checks: &[String]) -> Outcome {
    if let Some(bad) = checks.iter().find(|c| !CHECK_NAMES.contains(&c.as_str())) {
        return Err(Failure::Config(format!("unknown check '{bad}'; known: {}", CHECK_NAMES.join(", "))));
    }
    let seed = cli.seed.unwrap_or(0);
    let reports = run_battery(checks, seed)?;
    create_out(&cli.out)?;
    let mut jsonl = BufWriter::new(File::create(cli.out.join("verify.jsonl"))?);
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for r in &reports {
        let line = r.to_json_line();
        writeln!(out, "{line}")?;
        writeln!(jsonl, "{line}")?;
    }
    jsonl.flush()?;
    let failed = reports.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        log::error!("{failed} of {} checks failed", reports.len());
        Ok(1)
    } else {
        log::info!("all {} checks passed", reports.len());
        Ok(0)
    }
}

fn check_gradient(cli: &Cli, corrupt: bool) -> Outcome {
    let started = unix_now();
    let cfg = load_config(cli)?;
    let scenario = cfg.build()?;
    create_out(&cli.out)?;
    let options = AdjointOptions {
        corrupt_coupling_sign: corrupt,
    };
    let (report, rows) = fd_gradient_check(
        &scenario.problem,
        &scenario.initial_control,
        cfg.gradient_check.directions,
        &cfg.gradient_check.epsilons,
        cfg.scenario.seed,
        options,
    )?;
    let mut csv = BufWriter::new(File::create(cli.out.join("gradient_sweep.csv"))?);
    writeln!(csv, "{}", SweepRow::CSV_HEADER)?;
    for r in &rows {
        writeln!(csv, "{}", r.csv_row())?;
    }
    csv.flush()?;
    println!("{}", report.to_json_line());
    write_manifest(
        cli,
        "check-gradient",
        started,
        &cfg,
        vec!["gradient_sweep.csv".into()],
        if report.passed { "passed" } else { "failed" },
    )?;
    Ok(if report.passed { 0 } else { 1 })
}
