//! Black-box checks of the `kec` binary: determinism, exit codes, workflow
//! guards. Everything runs against throwaway configs in a temp dir.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_kec"))
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("kec-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("scenario.toml");
    std::fs::write(&path, body).unwrap();
    path
}

const MACRO_CONFIG: &str = r#"
[contact]
mu = 0.5
sigma2 = 0.1
tau = 1.0e-3
epsilon = 0.01

[uncertainty]
law = "bernoulli"
p = 0.5
delta_map = "affine_flip"
order = 1

[epi]
beta = 0.02
zeta = 0.30120481927710846
gamma = 0.1

[time]
dt = 0.05
t_end = 5.0

[initial]
rho0 = [0.97, 0.01, 0.01, 0.01]
m0 = 10.0
"#;

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary ran")
}

#[test]
fn macro_output_is_byte_identical_across_runs() {
    let dir = tmp_dir("determinism");
    let config = write_config(&dir, MACRO_CONFIG);
    for sub in ["a", "b"] {
        let out_dir = dir.join(sub);
        std::fs::create_dir_all(&out_dir).unwrap();
        let out = run(bin()
            .arg("macro")
            .arg("--config")
            .arg(&config)
            .arg("--out-dir")
            .arg(&out_dir));
        assert!(
            out.status.success(),
            "macro run failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let a = std::fs::read(dir.join("a/macro_stats.csv")).unwrap();
    let b = std::fs::read(dir.join("b/macro_stats.csv")).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b, "repeat runs differ");
    let head = String::from_utf8_lossy(&a[..200.min(a.len())]).to_string();
    assert!(head.starts_with("# config_hash="), "missing provenance header: {head}");
}

#[test]
fn malformed_config_exits_2() {
    let dir = tmp_dir("badconfig");
    let config = write_config(&dir, "[contact]\nmu = \"not a number\"\n");
    let out = run(bin().arg("macro").arg("--config").arg(&config).arg("--out-dir").arg(&dir));
    assert_eq!(out.status.code(), Some(2), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = tmp_dir("unknownkey");
    let config = write_config(&dir, &format!("{MACRO_CONFIG}\n[contact_typo]\nmu = 1.0\n"));
    let out = run(bin().arg("macro").arg("--config").arg(&config).arg("--out-dir").arg(&dir));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_config_file_exits_2() {
    let dir = tmp_dir("nofile");
    let out = run(bin()
        .arg("macro")
        .arg("--config")
        .arg(dir.join("does_not_exist.toml"))
        .arg("--out-dir")
        .arg(&dir));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn calibrate_targets_without_pre_stage_exits_2() {
    // the targets stage consumes fit_result.json from the pre stage; running
    // it cold must fail loudly instead of inventing parameters
    let dir = tmp_dir("stageguard");
    let config = write_config(
        &dir,
        r#"
[calibrate]
format = "simple"
data = "does_not_matter.csv"
region = "synthetic"
t0 = "2020-02-24"
lockdown = "2020-03-09"
t_final = "2020-03-23"
"#,
    );
    let out = run(bin()
        .arg("calibrate")
        .arg("--stage")
        .arg("targets")
        .arg("--config")
        .arg(&config)
        .arg("--out-dir")
        .arg(&dir));
    assert_eq!(out.status.code(), Some(2), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn failed_scenario_assertion_exits_4() {
    // an equilibrium run cut off after a single step cannot meet a 1e-12
    // L1 tolerance; --assert must turn that into exit code 4
    let dir = tmp_dir("assert");
    let config = write_config(
        &dir,
        r#"
[contact]
mu = 0.5
sigma2 = 0.1
tau = 1.0
epsilon = 0.01

[grid]
x_max = 50.0
n_points = 501

[equilibrium]
delta = 1.0
m = 10.0
t_end = 0.1
dt = 0.1
l1_tol = 1.0e-12
"#,
    );
    let out = run(bin()
        .arg("equilibrium")
        .arg("--assert")
        .arg("--config")
        .arg(&config)
        .arg("--out-dir")
        .arg(&dir));
    assert_eq!(out.status.code(), Some(4), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    // without --assert the same scenario still writes its output and exits 0
    let out = run(bin().arg("equilibrium").arg("--config").arg(&config).arg("--out-dir").arg(&dir));
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.join("equilibrium.csv").exists());
}
