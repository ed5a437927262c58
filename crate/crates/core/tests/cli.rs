use std::path::Path;
use std::process::{Command, Output};

use structacoustic::experiments::RunSummary;

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_structacoustic"))
        .arg("--out-dir")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("scenario.toml");
    std::fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

const QUICK_IDENTITY: &str = r#"
scenario = "identity-check"
n_wave = 4
n_plate = 4
p = 3.0
rho_w = 1.0
a = 0.5
t_end = 0.5
dt = 1e-3
stride = 5
"#;

#[test]
fn basis_passes_and_writes_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["basis"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("summary.json")).unwrap();
    let s = RunSummary::from_json(&text).unwrap();
    assert!(s.pass);
    assert_eq!(s.scenario, "basis");
    assert!(String::from_utf8_lossy(&out.stdout).contains("PASS"));
}

#[test]
fn simulate_writes_energy_and_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), QUICK_IDENTITY);
    let out = run(&["simulate", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let energy = std::fs::read_to_string(dir.path().join("energy.csv")).unwrap();
    let header = energy.lines().next().unwrap();
    assert!(header.starts_with("t,Ek_wave,Ep_wave"));
    assert!(header.ends_with("residual"));
    assert_eq!(energy.lines().count(), 1 + 101);
    let traj = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert!(traj.lines().next().unwrap().starts_with("t,u_0"));
}

#[test]
fn failed_property_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("{QUICK_IDENTITY}identity_tol = 1e-300\n");
    let cfg = write_config(dir.path(), &body);
    let out = run(&["--quiet", "identity-check", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("FAIL energy_identity"));
    assert!(!stdout.contains("PASS"));
}

#[test]
fn bad_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bogus_key = 1\n");
    let out = run(&["identity-check", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus_key"));

    let out = run(&["converge", "--truncations", "8,4"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn seed_flag_changes_random_data() {
    let body = r#"
scenario = "identity-check"
n_wave = 4
n_plate = 4
preset = "random-smooth"
t_end = 0.01
dt = 1e-3
"#;
    let first_row = |seed: &str| {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write_config(dir.path(), body);
        let out = run(&["--seed", seed, "simulate", "--config", &cfg], dir.path());
        assert_eq!(out.status.code(), Some(0));
        let traj = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
        traj.lines().nth(1).unwrap().to_string()
    };
    assert_eq!(first_row("3"), first_row("3"));
    assert_ne!(first_row("3"), first_row("4"));
}
