//! End-to-end tests of the command-line surface: parsing, outputs, and the
//! exit-code contract (0 ok, 2 input error, 3 solver termination,
//! 4 verification failure).

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn sklab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sklab"))
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("sklab-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write(path: &Path, text: &str) {
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    std::fs::write(path, text).unwrap();
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

const IDENTITY_ORTHANT: &str = r#"{
  "dimension": 2,
  "faces": [
    { "normal": [1.0, 0.0], "offset": 0.0, "direction": [1.0, 0.0] },
    { "normal": [0.0, 1.0], "offset": 0.0, "direction": [0.0, 1.0] }
  ]
}"#;

const STEEP_ORTHANT: &str = r#"{
  "dimension": 2,
  "faces": [
    { "normal": [1.0, 0.0], "offset": 0.0, "direction": [1.0, -2.0] },
    { "normal": [0.0, 1.0], "offset": 0.0, "direction": [-2.0, 1.0] }
  ]
}"#;

const HALF_LINE: &str = r#"{
  "dimension": 1,
  "faces": [ { "normal": [1.0], "offset": 0.0, "direction": [1.0] } ]
}"#;

fn run_config(domain_file: &str, paths: usize, seed: u64) -> String {
    format!(
        r#"{{
  "domain": "{domain_file}",
  "coefficients": {{ "name": "constant", "drift": [-1.0], "sigma": [[1.0]] }},
  "sim": {{ "step": 0.002, "horizon": 4.0, "paths": {paths}, "seed": {seed}, "initial_point": [0.0] }},
  "battery": [
    {{ "kind": "linear", "v": [1.0] }},
    {{ "kind": "bump", "center": [0.0], "radius": 0.8, "sign": -1.0 }}
  ],
  "verify": {{ "time_pairs": [[1.0, 2.0], [2.0, 4.0]], "bins": 2 }},
  "stationary": {{ "burn_in": 0.5, "thin": 20, "bridge_reflection": true }}
}}"#
    )
}

#[test]
fn geometry_reports_completely_s() {
    let dir = temp_dir("geom");
    write(&dir.join("identity.json"), IDENTITY_ORTHANT);
    let out = sklab()
        .args(["geometry", "--domain"])
        .arg(dir.join("identity.json"))
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("completely-S: true"), "{text}");
    let report = std::fs::read_to_string(dir.join("geometry_report.json")).unwrap();
    assert!(report.contains("\"completely_s\": true"));
}

#[test]
fn geometry_reports_witness() {
    let dir = temp_dir("geom-witness");
    write(&dir.join("steep.json"), STEEP_ORTHANT);
    let out = sklab()
        .args(["geometry", "--domain"])
        .arg(dir.join("steep.json"))
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("completely-S: false, witness [0, 1]"), "{text}");
    assert!(text.contains("InV"), "{text}");
}

#[test]
fn geometry_rejects_malformed_file() {
    let dir = temp_dir("geom-bad");
    write(&dir.join("bad.json"), "{ not json");
    let out = sklab()
        .args(["geometry", "--domain"])
        .arg(dir.join("bad.json"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn solve_writes_eta_column() {
    let dir = temp_dir("solve");
    write(&dir.join("halfline.json"), HALF_LINE);
    write(&dir.join("psi.csv"), "t,x1\n0,1\n0.5,-1\n1,0\n");
    let out_dir = dir.join("out");
    let out = sklab()
        .args(["solve", "--domain"])
        .arg(dir.join("halfline.json"))
        .arg("--psi")
        .arg(dir.join("psi.csv"))
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let eta = std::fs::read_to_string(out_dir.join("eta.csv")).unwrap();
    let values: Vec<&str> = eta.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(values, ["0", "1", "1"]);
    assert!(out_dir.join("phi.csv").exists());
    assert!(out_dir.join("local_times.csv").exists());
    assert!(out_dir.join("diagnostics.json").exists());
    assert!(out_dir.join("manifest.json").exists());
}

#[test]
fn solve_interior_path_has_zero_eta() {
    let dir = temp_dir("solve-interior");
    write(&dir.join("halfline.json"), HALF_LINE);
    write(&dir.join("psi.csv"), "t,x1\n0,1\n1,2\n2,1.5\n");
    let out_dir = dir.join("out");
    let out = sklab()
        .args(["solve", "--domain"])
        .arg(dir.join("halfline.json"))
        .arg("--psi")
        .arg(dir.join("psi.csv"))
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success());
    let eta = std::fs::read_to_string(out_dir.join("eta.csv")).unwrap();
    for line in eta.lines().skip(1) {
        assert_eq!(line.split(',').nth(1).unwrap(), "0");
    }
}

#[test]
fn solve_rejects_outside_start() {
    let dir = temp_dir("solve-outside");
    write(&dir.join("halfline.json"), HALF_LINE);
    write(&dir.join("psi.csv"), "t,x1\n0,-0.5\n1,0\n");
    let out = sklab()
        .args(["solve", "--domain"])
        .arg(dir.join("halfline.json"))
        .arg("--psi")
        .arg(dir.join("psi.csv"))
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_rejects_zero_paths() {
    let dir = temp_dir("sim-zero");
    write(&dir.join("halfline.json"), HALF_LINE);
    write(&dir.join("run.json"), &run_config("halfline.json", 0, 1));
    let out = sklab()
        .args(["simulate", "--config"])
        .arg(dir.join("run.json"))
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_round_trip_and_tamper_detection() {
    let dir = temp_dir("verify");
    write(&dir.join("halfline.json"), HALF_LINE);
    write(&dir.join("run.json"), &run_config("halfline.json", 128, 3));
    let run_dir = dir.join("out");
    let out = sklab()
        .args(["simulate", "--config"])
        .arg(dir.join("run.json"))
        .arg("--out")
        .arg(&run_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let out = sklab().args(["verify", "--run"]).arg(&run_dir).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("verification: PASS"));

    // Push one recorded state outside the domain: containment must fail
    // and the exit code flips to the verification-failure contract.
    let victim = run_dir.join("paths/path_00000.csv");
    let text = std::fs::read_to_string(&victim).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut fields: Vec<String> = lines[40].split(',').map(String::from).collect();
    fields[1] = "-5.0".into();
    lines[40] = fields.join(",");
    std::fs::write(&victim, lines.join("\n") + "\n").unwrap();

    let out = sklab().args(["verify", "--run"]).arg(&run_dir).output().unwrap();
    assert_eq!(out.status.code(), Some(4));
    assert!(stdout(&out).contains("check containment: FAIL"), "{}", stdout(&out));
}

#[test]
fn pipeline_writes_manifest_last_and_passes() {
    let dir = temp_dir("pipeline");
    write(&dir.join("halfline.json"), HALF_LINE);
    write(&dir.join("run.json"), &run_config("halfline.json", 128, 5));
    let run_dir = dir.join("out");
    let out = sklab()
        .args(["pipeline", "--config"])
        .arg(dir.join("run.json"))
        .arg("--out")
        .arg(&run_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("pipeline: PASS"));
    let manifest = std::fs::read_to_string(run_dir.join("manifest.json")).unwrap();
    assert!(manifest.contains("config_hash"));
    assert!(manifest.contains("stats.json"));
    assert!(run_dir.join("verify_report.json").exists());
    assert!(run_dir.join("stationary_report.json").exists());
    assert!(run_dir.join("histogram_x1.csv").exists());
}

#[test]
fn workers_env_fallback_is_accepted() {
    let dir = temp_dir("workers-env");
    write(&dir.join("identity.json"), IDENTITY_ORTHANT);
    let out = sklab()
        .env("SKLAB_WORKERS", "2")
        .args(["geometry", "--domain"])
        .arg(dir.join("identity.json"))
        .output()
        .unwrap();
    assert!(out.status.success());
}
