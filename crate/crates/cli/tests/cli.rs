use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use netac_cli::config::parse_config;
use tempfile::TempDir;

const EDGE: &str = r#"{
  "graph": {"vertices": 2, "edges": [[1, 2]]},
  "vertex_matrix": [[-1.0, 0.0], [0.0, -1.0]],
  "drift": {"allen_cahn": {"betas": [1.0]}},
  "diffusion": {"g": "0.3 * cos(u)", "lipschitz": [[1e9, 0.3]], "growth": 0.3},
  "mesh": {"interior_nodes": 15},
  "solver": {"dt": 0.002, "t_end": 0.1, "snapshot_stride": 5},
  "initial": "0.5 * sin(pi * x) + 0.2",
  "experiment": {"simulate": {"trajectories": 3}}
}"#;

fn write_config(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, body).unwrap();
    p
}

fn netac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_netac")).args(args).output().unwrap()
}

fn run(cmd: &str, config: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--config", config.to_str().unwrap()];
    args.extend_from_slice(extra);
    netac(&args)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn validate_ok_config_passes_and_writes_nothing() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, "ok.json", EDGE);
    let out = tmp.path().join("out");
    let o = run("validate", &cfg, &["--output-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["passed"], true);
    assert!(report["checks"].as_array().unwrap().iter().all(|c| c["passed"] == true || c["mandatory"] == false));
    assert!(!out.exists());
}

#[test]
fn validate_reports_indefinite_vertex_matrix() {
    let tmp = TempDir::new().unwrap();
    let body = EDGE.replace("[[-1.0, 0.0], [0.0, -1.0]]", "[[-1.0, 0.0], [0.0, 0.5]]");
    let o = run("validate", &write_config(&tmp, "bad.json", &body), &[]);
    assert_eq!(o.status.code(), Some(1));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let failed: Vec<&str> = report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["passed"] == false)
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    assert!(failed.contains(&"vertex_matrix.negative_semidefinite"), "{failed:?}");
    assert!(stderr(&o).contains("negative_semidefinite"));
}

#[test]
fn simulation_refuses_a_failing_vertex_matrix() {
    let tmp = TempDir::new().unwrap();
    let body = EDGE.replace("[[-1.0, 0.0], [0.0, -1.0]]", "[[0.0, 0.0], [0.0, 0.0]]");
    let o = run("simulate", &write_config(&tmp, "zero.json", &body), &["--output-dir", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nonzero"));
    let allowed = body.replace("\"mesh\"", "\"allow_zero_vertex_matrix\": true, \"mesh\"");
    let o = run("validate", &write_config(&tmp, "allowed.json", &allowed), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn hypothesis_violations_in_fields_exit_one() {
    let tmp = TempDir::new().unwrap();
    let body = EDGE.replace("\"mesh\"", "\"fields\": {\"c\": \"x - 0.5\"}, \"mesh\"");
    let o = run("validate", &write_config(&tmp, "c.json", &body), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("conductance_positive"));
}

#[test]
fn misspelled_key_is_a_schema_violation_with_path() {
    let tmp = TempDir::new().unwrap();
    let o = run("validate", &write_config(&tmp, "typo.json", &EDGE.replace("\"betas\"", "\"beta_s\"")), &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("kind=schema_violation"), "{err}");
    assert!(err.contains("drift.allen_cahn"), "{err}");
}

#[test]
fn bad_expression_reports_position() {
    let tmp = TempDir::new().unwrap();
    let o = run("simulate", &write_config(&tmp, "expr.json", &EDGE.replace("0.3 * cos(u)", "u^^3")), &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("kind=expression_parse_error"), "{err}");
    assert!(err.contains("diffusion.g, position 3"), "{err}");
}

#[test]
fn runtime_errors_exit_two() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(netac(&["validate", "--config", "/nonexistent/cfg.json"]).status.code(), Some(2));
    let o = run("simulate", &write_config(&tmp, "dt.json", &EDGE.replace("0.002", "0.003")), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("not an integer"));
    let o = run("holder", &write_config(&tmp, "h.json", EDGE), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("experiment.holder"));
}

#[test]
fn simulate_is_bitwise_reproducible() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, "sim.json", EDGE);
    let dirs: Vec<PathBuf> = ["a", "b", "c"].iter().map(|d| tmp.path().join(d)).collect();
    for (d, threads) in dirs.iter().zip(["1", "3", "1"]) {
        let o = run("simulate", &cfg, &["--seed", "7", "--threads", threads, "--output-dir", d.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let a = dir_contents(&dirs[0]);
    assert_eq!(a.len(), 6, "{:?}", a.iter().map(|f| &f.0).collect::<Vec<_>>());
    assert_eq!(a, dir_contents(&dirs[1]));
    assert_eq!(a, dir_contents(&dirs[2]));

    let other = tmp.path().join("seed8");
    run("simulate", &cfg, &["--seed", "8", "--output-dir", other.to_str().unwrap()]);
    assert_ne!(fs::read(dirs[0].join("trajectory_0000.csv")).unwrap(), fs::read(other.join("trajectory_0000.csv")).unwrap());
}

#[test]
fn snapshot_table_has_vertex_values_on_each_edge() {
    let tmp = TempDir::new().unwrap();
    let body = EDGE
        .replace("\"vertices\": 2, \"edges\": [[1, 2]]", "\"vertices\": 3, \"edges\": [[1, 2], [2, 3]]")
        .replace("[[-1.0, 0.0], [0.0, -1.0]]", "[[-1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]]")
        .replace("[1.0]", "[1.0, 1.0]")
        .replace("0.5 * sin(pi * x) + 0.2", "0.2");
    let cfg = write_config(&tmp, "two.json", &body);
    let out = tmp.path().join("o");
    let o = run("simulate", &cfg, &["--trajectories", "1", "--output-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let mut rdr = csv::Reader::from_path(out.join("trajectory_0000.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap(), vec!["t", "edge", "x", "value"]);
    let rows: Vec<(f64, usize, f64, f64)> = rdr.deserialize().map(|r| r.unwrap()).collect();
    // 11 snapshots, 2 edges, 17 nodes per edge
    assert_eq!(rows.len(), 11 * 2 * 17);
    for (t, _, _, _) in rows.iter().filter(|r| r.1 == 1 && r.2 == 1.0) {
        let end = rows.iter().find(|r| r.0 == *t && r.1 == 1 && r.2 == 1.0).unwrap().3;
        let start = rows.iter().find(|r| r.0 == *t && r.1 == 2 && r.2 == 0.0).unwrap().3;
        assert_eq!(end.to_bits(), start.to_bits());
    }
}

#[test]
fn spectrum_manifest_records_config_hash() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, "eig.json", EDGE);
    let out = tmp.path().join("o");
    let o = run("spectrum", &cfg, &["--seed", "3", "--output-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config_hash"], parse_config(&cfg).unwrap().hash());
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["version"], env!("CARGO_PKG_VERSION"));
    let mut rdr = csv::Reader::from_path(out.join("spectrum.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap(), vec!["k", "lambda_k"]);
    let lambdas: Vec<f64> = rdr.records().map(|r| r.unwrap()[1].parse().unwrap()).collect();
    assert_eq!(lambdas.len(), 10);
    assert!(lambdas.windows(2).all(|w| w[0] >= w[1]));
    assert!(lambdas[0] < 0.0);
}

#[test]
fn reformatted_config_keeps_its_hash() {
    let tmp = TempDir::new().unwrap();
    let a = parse_config(&write_config(&tmp, "a.json", EDGE)).unwrap();
    let pretty = serde_json::to_string_pretty(&serde_json::from_str::<serde_json::Value>(EDGE).unwrap()).unwrap();
    let b = parse_config(&write_config(&tmp, "b.json", &pretty)).unwrap();
    let c = parse_config(&write_config(&tmp, "c.json", &a.canonical_json())).unwrap();
    assert_eq!(a.hash(), b.hash());
    assert_eq!(a.hash(), c.hash());
}
