use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_kerrflow"))
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let p = dir.join("run.toml");
    std::fs::write(&p, body).unwrap();
    p
}

const SMALL: &str = "
[model]
delta = 1.0
u = 1.0
g = 0.4
f = 0.5
kappa = 0.1
[grid]
delta_min = 1.0
delta_max = 1.0
n_delta = 1
f_min = 0.5
f_max = 0.5
n_f = 1
[ensemble]
n_traj = 2
t_burn = 10
t_total = 40
dim = 12
[spectrum]
max_lag = 20
n_omega = 21
";

fn run(cmd: &str, cfg: &Path, out: &Path, extra: &[&str]) -> std::process::Output {
    bin().arg(cmd).arg("--config").arg(cfg).arg("--out").arg(out).args(["--workers", "1"]).args(extra).output().unwrap()
}

#[test]
fn single_cell_phase_diagram() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("pd");
    let o = run("phase-diagram", &cfg, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("phase_diagram.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2, "{csv}");
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "ok");
    assert_eq!(manifest["command"], "phase-diagram");
    assert!(manifest["outputs"].as_array().unwrap().iter().any(|v| v == "phase_diagram.csv"));
    assert!(manifest["tolerances"]["tail_tol"].is_number());
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = run("trajectories", &cfg, out, &["--seed", "7", "--save-trajectories"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let mut names: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.iter().any(|n| n == "trajectories_0000.krcx"));
    for n in names {
        // the manifest records no paths or timestamps, so it matches too
        let (x, y) = (std::fs::read(a.join(&n)).unwrap(), std::fs::read(b.join(&n)).unwrap());
        assert_eq!(x, y, "{n:?} differs");
    }
}

#[test]
fn bad_config_exits_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[model]\nu = 1.0\nkappa = 0.1\nbogus = 3\n");
    let o = run("steady-state", &cfg, &dir.path().join("o"), &[]);
    assert_eq!(o.status.code(), Some(2));

    let cfg = write_config(dir.path(), "[model]\nu = 1.0\nkappa = -0.1\n");
    let o = run("steady-state", &cfg, &dir.path().join("o"), &[]);
    assert_eq!(o.status.code(), Some(2));

    let o = bin().arg("steady-state").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn resource_cap_exits_with_code_4() {
    let dir = tempfile::tempdir().unwrap();
    let body = "[model]\ndelta = 1.0\nu = 1.0\nf = 1.0\nkappa = 0.1\naleph = 50\n[hilbert]\nmax_dim = 8\n";
    let cfg = write_config(dir.path(), body);
    let out = dir.path().join("o");
    let o = run("steady-state", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "partial");
    assert_eq!(manifest["failures"][0]["exit_code"], 4);
}

#[test]
fn steady_state_and_liouvillian_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{SMALL}[sweep]\ndelta = [0.0, 1.0]\n[hilbert]\nsave_states = true\n"));
    let out = dir.path().join("ss");
    assert!(run("steady-state", &cfg, &out, &[]).status.success());
    let csv = std::fs::read_to_string(out.join("steady_state.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(out.join("rho_0001.krcx").exists() && out.join("rho_0001.json").exists());

    let out = dir.path().join("lv");
    assert!(run("liouvillian", &cfg, &out, &[]).status.success());
    let modes = std::fs::read_to_string(out.join("liouvillian_modes.csv")).unwrap();
    // first mode of each point is the steady state
    let first: Vec<&str> = modes.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(first[4], "0");
    assert!(first[5].parse::<f64>().unwrap().abs() < 1e-10);
}
