use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lansa_core::config::{RunConfig, RunManifest};

fn lansa(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lansa"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("run.toml");
    std::fs::write(&p, body).unwrap();
    p
}

fn base_config(preset: &str, extra: &str) -> String {
    format!(
        r#"
[grid]
n = 8
dt = 0.02
n_steps = 8

[model]
alpha = 0.1
nu = 0.1

[cost]
gamma1 = 1.0
gamma2 = 1.0
gamma3 = 0.1

[scenario]
preset = "{preset}"
amplitude = 1.0
seed = 3
{extra}
"#
    )
}

fn csv_column(path: &Path, col: usize) -> Vec<f64> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(col).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn zero_preset_gives_zero_energy() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &base_config("zero", ""));
    let out = dir.path().join("run");
    let o = lansa(&["solve-forward", "--config", cfg.to_str().unwrap()], &out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out.join("energy.csv")).unwrap();
    assert!(text.starts_with("t,l2_sq,alpha_grad_sq,grad_sq,stokes_sq\n"));
    for col in 1..5 {
        assert!(csv_column(&out.join("energy.csv"), col).iter().all(|&x| x == 0.0));
    }
    assert_eq!(text.lines().count(), 1 + 9);
    assert!(out.join("trajectory/manifest.toml").exists());
    assert!(out.join("trajectory/snap_00008.bin").exists());
}

#[test]
fn taylor_green_energy_is_monotone_and_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &base_config("taylor_green", ""));
    let out = dir.path().join("run");
    let o = lansa(&["solve-forward", "--config", cfg.to_str().unwrap()], &out);
    assert_eq!(code(&o), 0);
    let l2 = csv_column(&out.join("energy.csv"), 1);
    let agrad = csv_column(&out.join("energy.csv"), 2);
    let e: Vec<f64> = l2.iter().zip(&agrad).map(|(a, b)| a + b).collect();
    assert!(e[0] > 0.0);
    assert!(e.windows(2).all(|w| w[1] < w[0]), "{e:?}");
    let m = RunManifest::from_toml_str(&std::fs::read_to_string(out.join("manifest.toml")).unwrap()).unwrap();
    let original = RunConfig::load(&cfg).unwrap();
    assert_eq!(m.config, original);
    assert_eq!(m.command, "solve-forward");
}

#[test]
fn missing_config_is_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = lansa(&["solve-forward", "--config", "/nonexistent/run.toml"], dir.path());
    assert_eq!(code(&o), 2);
    let o = lansa(&["solve-forward"], dir.path());
    assert_eq!(code(&o), 2);
    let o = lansa(&["solve-forward", "--preset", "vortex"], dir.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn blow_up_is_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let body = base_config("taylor_green", "")
        .replace("dt = 0.02", "dt = 5.0")
        .replace("nu = 0.1", "nu = 1e-4")
        .replace("amplitude = 1.0", "amplitude = 50.0");
    let cfg = write_config(dir.path(), &body);
    let o = lansa(&["solve-forward", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn optimize_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let body = base_config("taylor_green", "[optimizer]\nmax_iter = 0\nresidual_tol = 0.0\n");
    let cfg = write_config(dir.path(), &body);
    let out = dir.path().join("a");
    let o = lansa(&["optimize", "--config", cfg.to_str().unwrap()], &out);
    assert_eq!(code(&o), 4);
    let rows = std::fs::read_to_string(out.join("iterations.csv")).unwrap();
    assert_eq!(rows.lines().next().unwrap(), "iter,tracking,terminal,control,total,residual,step_size,wall_ms");
    assert_eq!(rows.lines().count(), 2);
    assert!(out.join("final_control/control_00007.bin").exists());

    let body = base_config("taylor_green", "[bounds]\nlower = 1.0\nupper = -1.0\n");
    let cfg = write_config(dir.path(), &body);
    let o = lansa(&["optimize", "--config", cfg.to_str().unwrap()], &dir.path().join("b"));
    assert_eq!(code(&o), 2);
}

#[test]
fn optimize_manufactured_converges() {
    let dir = tempfile::tempdir().unwrap();
    let body = base_config("manufactured", "[optimizer]\nmax_iter = 500\nresidual_tol = 0.0\nresidual_rtol = 1e-4\n")
        .replace("gamma1 = 1.0", "gamma1 = 100.0")
        .replace("gamma2 = 1.0", "gamma2 = 100.0")
        .replace("gamma3 = 0.1", "gamma3 = 1e-3")
        .replace("n_steps = 8", "n_steps = 4");
    let cfg = write_config(dir.path(), &body);
    let out = dir.path().join("run");
    let o = lansa(&["optimize", "--config", cfg.to_str().unwrap()], &out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let total = csv_column(&out.join("iterations.csv"), 4);
    assert!(total.windows(2).all(|w| w[1] <= w[0]));
    let m = RunManifest::from_toml_str(&std::fs::read_to_string(out.join("manifest.toml")).unwrap()).unwrap();
    assert_eq!(m.termination, "residual_tol");
}

#[test]
fn verify_selection_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let a = lansa(&["verify", "skew_symmetry", "dual_norm_inequality", "--seed", "11"], dir.path());
    let b = lansa(&["verify", "skew_symmetry", "dual_norm_inequality", "--seed", "11"], dir.path());
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    assert_eq!(text.lines().count(), 6);
    assert!(text.lines().all(|l| l.starts_with('{') && l.contains("\"passed\":true")));
    assert!(dir.path().join("verify.jsonl").exists());
    let o = lansa(&["verify", "no_such_check"], dir.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn verify_default_battery_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = lansa(&["verify"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn check_gradient_full_and_penalty_only() {
    let dir = tempfile::tempdir().unwrap();
    let full = write_config(dir.path(), &base_config("taylor_green", "").replace("n_steps = 8", "n_steps = 16"));
    let out = dir.path().join("full");
    let o = lansa(&["check-gradient", "--config", full.to_str().unwrap()], &out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let sweep = std::fs::read_to_string(out.join("gradient_sweep.csv")).unwrap();
    assert_eq!(sweep.lines().next().unwrap(), "direction,epsilon,finite_difference,adjoint,relative_error");
    assert_eq!(sweep.lines().count(), 1 + 5 * 7);

    let sub = dir.path().join("penalty");
    std::fs::create_dir_all(&sub).unwrap();
    let body = base_config("taylor_green", "")
        .replace("gamma1 = 1.0", "gamma1 = 0.0")
        .replace("gamma2 = 1.0", "gamma2 = 0.0");
    let cfg = write_config(&sub, &body);
    let o = lansa(&["check-gradient", "--config", cfg.to_str().unwrap()], &sub.join("run"));
    assert_eq!(code(&o), 0);
}

#[test]
fn corrupted_adjoint_fails_gradient_check() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &base_config("taylor_green", "").replace("amplitude = 1.0", "amplitude = 3.0"));
    let o = lansa(
        &["check-gradient", "--corrupt-adjoint", "--config", cfg.to_str().unwrap()],
        &dir.path().join("run"),
    );
    assert_ne!(code(&o), 0);
}
