//! End-to-end tests of the `gwising` binary.

use std::path::Path;
use std::process::{Command, Output};

use gwising::tree::Tree;

fn gwising(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gwising"))
        .args(args)
        .current_dir(dir)
        .env_remove("GWISING_WORKERS")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn file_names(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> =
        std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    names.sort();
    names
}

const MAGNETIZATION: &str = r#"{
    "schema_version": 1,
    "mode": "magnetization",
    "base_pmf": {"entries": [[1, 0.5], [3, 0.5]]},
    "beta": 0.8,
    "p_schedule": {"kind": "threshold", "c": 1.0},
    "n_grid": [4, 7],
    "replicas": 200,
    "field_mode": "leaves_only",
    "master_seed": 9
}"#;

#[test]
fn validate_passes_and_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = gwising(&["validate", "--seed", "42", "--out", "out", "--quiet"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("out/validation_report.json")).unwrap();
    let report: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(report["master_seed"], 42);
    let suites = report["suites"].as_array().unwrap();
    assert!(suites.len() >= 5);
    for s in suites {
        assert!(s["suite"].is_string() && s["instances"].as_u64().unwrap() > 0);
        assert!(s["max_error"].is_number());
        assert_eq!(s["pass"], true);
    }
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(gwising(&["frobnicate"], dir.path()).status.code(), Some(2));
    assert_eq!(gwising(&[], dir.path()).status.code(), Some(2));
    assert_eq!(gwising(&["magnetization-scan"], dir.path()).status.code(), Some(2));
    assert_eq!(gwising(&["validate", "--seed", "minus-one"], dir.path()).status.code(), Some(2));
    let empty = write(dir.path(), "empty.json", "");
    assert_eq!(gwising(&["magnetization-scan", "--config", &empty], dir.path()).status.code(), Some(2));
    assert_eq!(gwising(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn malformed_config_names_the_field_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let typo = write(dir.path(), "typo.json", &MAGNETIZATION.replace("\"replicas\"", "\"replica\""));
    let out = gwising(&["magnetization-scan", "--config", &typo], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("replica") && err.contains("line"), "{err}");
    let wrong_mode = write(dir.path(), "gamma.json", MAGNETIZATION);
    assert_eq!(gwising(&["gamma-profile", "--config", &wrong_mode], dir.path()).status.code(), Some(2));
}

#[test]
fn prune_demo_writes_tree_pruning_and_overlay() {
    let dir = tempfile::tempdir().unwrap();
    let out = gwising(&["prune-demo", "--pmf", "dirac2", "--n", "8", "--p", "0.3", "--out", "demo"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let demo = dir.path().join("demo");
    assert_eq!(file_names(&demo), vec!["overlay.dot", "pruned.json", "tree.json"]);
    let text = std::fs::read_to_string(demo.join("tree.json")).unwrap();
    let tree: Tree = serde_json::from_str(&text).unwrap();
    assert_eq!(tree.len(), 511);
    assert_eq!(serde_json::to_string(&tree).unwrap() + "\n", text);
    let pruned: Option<Tree> = serde_json::from_str(&std::fs::read_to_string(demo.join("pruned.json")).unwrap()).unwrap();
    assert!(pruned.is_some_and(|t| t.depth() == 8 && t.len() < 511));
    assert!(std::fs::read_to_string(demo.join("overlay.dot")).unwrap().starts_with("digraph"));
}

#[test]
fn scans_are_identical_for_any_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "m.json", MAGNETIZATION);
    let one = gwising(&["magnetization-scan", "--config", &cfg, "--out", "a", "--workers", "1"], dir.path());
    assert_eq!(one.status.code(), Some(0), "{}", String::from_utf8_lossy(&one.stderr));
    let three = Command::new(env!("CARGO_BIN_EXE_gwising"))
        .args(["magnetization-scan", "--config", &cfg, "--out", "b", "--quiet"])
        .current_dir(dir.path())
        .env("GWISING_WORKERS", "3")
        .output()
        .unwrap();
    assert_eq!(three.status.code(), Some(0));
    assert!(three.stdout.is_empty());
    let names = file_names(&dir.path().join("a"));
    assert_eq!(names, vec!["magnetization.csv", "magnetization_summary.csv"]);
    for name in names {
        let a = std::fs::read(dir.path().join("a").join(&name)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(&name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
    let other_seed = gwising(&["magnetization-scan", "--config", &cfg, "--out", "c", "--seed", "10"], dir.path());
    assert_eq!(other_seed.status.code(), Some(0));
    assert_ne!(
        std::fs::read(dir.path().join("a/magnetization.csv")).unwrap(),
        std::fs::read(dir.path().join("c/magnetization.csv")).unwrap()
    );
}

#[test]
fn gamma_capacity_and_tv_scans_write_their_tables() {
    let dir = tempfile::tempdir().unwrap();
    let gamma = write(
        dir.path(),
        "g.json",
        &MAGNETIZATION.replace("\"magnetization\"", "\"gamma\"").replace("[4, 7]", "[12]"),
    );
    let out = gwising(&["gamma-profile", "--config", &gamma, "--out", "g"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let table = std::fs::read_to_string(dir.path().join("g/gamma_n12.csv")).unwrap();
    assert!(table.starts_with("k,gamma_k,one_minus_gamma_k,nu_star_k,sigma_q_star_k,M_star_0k,k_star\n"));
    assert_eq!(table.lines().count(), 14);
    assert!(dir.path().join("g/gamma_bounds.json").exists());

    let cap = write(dir.path(), "c.json", &MAGNETIZATION.replace("\"magnetization\"", "\"capacity\""));
    let out = gwising(&["capacity-scan", "--config", &cap, "--out", "c"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let table = std::fs::read_to_string(dir.path().join("c/capacity.csv")).unwrap();
    assert!(table.starts_with("n,p_n,replica,capacity_p,alpha_n,ratio\n"));
    assert_eq!(table.lines().count(), 1 + 2 * 200);

    let tv = write(
        dir.path(),
        "t.json",
        &MAGNETIZATION.replace("\"magnetization\"", "\"tv\"").replace("[4, 7]", "[30]").replace(
            "{\"kind\": \"threshold\", \"c\": 1.0}",
            "{\"kind\": \"geometric\", \"lambda\": 0.7071067811865476}",
        ),
    );
    let out = gwising(&["tv-scan", "--config", &tv, "--out", "t"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(file_names(&dir.path().join("t")), vec!["tv_n30.csv", "tv_summary.csv"]);
    let summary = std::fs::read_to_string(dir.path().join("t/tv_summary.csv")).unwrap();
    assert!(summary.lines().nth(1).unwrap().ends_with(",true"), "{summary}");
}
