use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_swarm-relax"));
    c.env_remove("SWARM_RELAX_LOG");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn with_config(text: &str, args: &[&str]) -> Output {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("config.json");
    std::fs::write(&path, text).unwrap();
    let mut all = vec!["--config", path.to_str().unwrap()];
    all.extend_from_slice(args);
    run(&all)
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).expect("JSON on stdout")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn help_matches_golden_file() {
    let o = run(&["--help"]);
    assert!(o.status.success());
    let golden = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/help.txt")).unwrap();
    assert_eq!(String::from_utf8(o.stdout).unwrap(), golden);
}

#[test]
fn empty_config_gives_defaults() {
    let o = with_config("{}", &["show-config"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v = stdout_json(&o);
    assert_eq!(v["relax"]["kappa"], 20.0);
    assert_eq!(v["vision"]["a"], 5.0);
    assert!(v["vision"]["c_norm"].as_f64().unwrap() > 0.0);
    assert_eq!(v["scenario"], "synthetic-rp");
    assert!(v["synthetic"].is_null());
}

#[test]
fn config_values_are_echoed_with_derived_c_norm() {
    let o = with_config(r#"{"sweep":{"eps_list":[1e-2,1e-3]}, "vision":{"a":6,"b":4}}"#, &["show-config"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v = stdout_json(&o);
    assert_eq!(v["sweep"]["eps_list"], serde_json::json!([1e-2, 1e-3]));
    assert_eq!(v["vision"]["a"], 6.0);
    assert_eq!(v["vision"]["b"], 4.0);
    let c = swarm_relax::kernels::VisionParams::new(6.0, 4.0).unwrap().c_norm();
    assert_eq!(v["vision"]["c_norm"].as_f64().unwrap(), c);
}

#[test]
fn invalid_vision_exits_2_with_path() {
    let o = with_config(r#"{"vision":{"b":-1}}"#, &["show-config"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("vision.b"), "{}", stderr(&o));
}

#[test]
fn malformed_json_exits_2_with_position() {
    let o = with_config("{\"seed\": 1,,}", &["show-config"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 1, column"), "{}", stderr(&o));
}

#[test]
fn flags_override_the_file() {
    let o = with_config(r#"{"relax":{"kappa":30}}"#, &["show-config", "--kappa", "50", "--relax.alpha", "0.3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v = stdout_json(&o);
    assert_eq!(v["relax"]["kappa"], 50.0);
    assert_eq!(v["relax"]["alpha"], 0.3);
}

#[test]
fn roots_of_the_synthetic_field() {
    let o = run(&["roots"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v = stdout_json(&o);
    let roots = v["roots"]["roots"].as_array().unwrap();
    assert!(roots.iter().any(|r| (r["theta"].as_f64().unwrap() + 0.57).abs() < 1e-9));
}

#[test]
fn single_epsilon_sweep_has_no_fit() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["scaling-2d", "--eps-list", "[1e-3]", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("fit unavailable"), "{}", stderr(&o));
    assert!(dir.path().join("fit.json").exists());
}

#[test]
fn negative_a_star_is_unsupported() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["simulate-relax", "--synthetic.coupling", "[-0.84,0.54]", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn fixed_seed_runs_are_bit_identical() {
    let bytes = || {
        let dir = tempfile::tempdir().unwrap();
        let o = run(&["simulate-relax", "--seed", "7", "--epsilon", "1e-3", "--out", dir.path().to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        (o.stdout, std::fs::read(dir.path().join("relax.csv")).unwrap())
    };
    assert_eq!(bytes(), bytes());
}
