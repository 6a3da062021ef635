use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use blendopt::cli::{EXIT_AUDIT, EXIT_INFEASIBLE, EXIT_INPUT, EXIT_ITERATION_LIMIT, EXIT_OK};

fn blendopt(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_blendopt"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("BLENDOPT_OUT")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn data(rel: &str) -> String {
    format!("{}/data/{rel}", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn bundled_files_run_and_write_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let net = data("single_pipe/network.json");
    let sc = data("single_pipe/scenario.json");
    let o = blendopt(
        &["--network", &net, "--scenario", &sc, "--iter-log", "--export-nlp"],
        tmp.path(),
    );
    assert_eq!(code(&o), EXIT_OK, "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "nodes.csv",
        "edges.csv",
        "transfers.csv",
        "objective.csv",
        "summary.json",
        "audit.json",
        "audit.txt",
        "iterations.csv",
        "nlp/variables.csv",
        "nlp/constraints.csv",
        "nlp/jacobian.csv",
    ] {
        assert!(tmp.path().join(f).exists(), "{f}");
    }
    // 48 steps, 5 nodes after segmentation.
    let nodes = fs::read_to_string(tmp.path().join("nodes.csv")).unwrap();
    assert_eq!(nodes.lines().count(), 1 + 48 * 5);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["size"]["variables"], 1392);
    assert_eq!(summary["audit_passed"], true);
}

#[test]
fn eight_node_holds_c3_at_its_cap() {
    let tmp = tempfile::tempdir().unwrap();
    let o = blendopt(&["--case", "eight-node"], tmp.path());
    assert_eq!(code(&o), EXIT_OK, "{}", String::from_utf8_lossy(&o.stderr));
    let mut r = csv::Reader::from_path(tmp.path().join("edges.csv")).unwrap();
    let mut seen = 0;
    for rec in r.records() {
        let rec = rec.unwrap();
        if &rec[1] == "C3" {
            let f: f64 = rec[3].parse().unwrap();
            assert!((f - 140.0).abs() < 0.14, "{f}");
            seen += 1;
        }
    }
    assert_eq!(seen, 24);
}

#[test]
fn missing_network_exits_with_input_code() {
    let tmp = tempfile::tempdir().unwrap();
    let o = blendopt(&["--network", "nope.json", "--scenario", "nope.json"], tmp.path());
    assert_eq!(code(&o), EXIT_INPUT);
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.json"));
}

#[test]
fn bad_flags_exit_with_input_code() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&blendopt(&["--case", "single-pipe", "--mode", "fast"], tmp.path())), EXIT_INPUT);
    assert_eq!(code(&blendopt(&["--case", "single-pipe", "--dt", "0.7"], tmp.path())), EXIT_INPUT);
    assert_eq!(code(&blendopt(&["--case", "single-pipe", "--tol", "-1"], tmp.path())), EXIT_INPUT);
    assert_eq!(code(&blendopt(&["--case", "nowhere"], tmp.path())), EXIT_INPUT);
    assert_eq!(code(&blendopt(&[], tmp.path())), EXIT_INPUT);
}

#[test]
fn malformed_network_exits_with_input_code() {
    let tmp = tempfile::tempdir().unwrap();
    let net = tmp.path().join("net.json");
    fs::write(&net, r#"{"nodes": [{"id": "A", "role": "slack"}], "pipes": [], "compressors": [}"#).unwrap();
    let sc = data("single_pipe/scenario.json");
    let o = blendopt(&["--network", net.to_str().unwrap(), "--scenario", &sc], &tmp.path().join("out"));
    assert_eq!(code(&o), EXIT_INPUT);
    assert!(String::from_utf8_lossy(&o.stderr).contains("network"));
}

#[test]
fn overloaded_demand_exits_infeasible() {
    let tmp = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(data("single_pipe/network.json")).unwrap();
    let net = tmp.path().join("net.json");
    fs::write(&net, text.replace("\"gE_max\": 8000.0", "\"gE_fixed\": 60000.0")).unwrap();
    let sc = data("single_pipe/scenario.json");
    let o = blendopt(
        &["--network", net.to_str().unwrap(), "--scenario", &sc, "--mode", "steady"],
        &tmp.path().join("out"),
    );
    assert_eq!(code(&o), EXIT_INFEASIBLE, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn iteration_cap_exits_with_its_code() {
    let tmp = tempfile::tempdir().unwrap();
    let o = blendopt(&["--case", "single-pipe", "--max-iter", "3"], tmp.path());
    assert_eq!(code(&o), EXIT_ITERATION_LIMIT);
}

#[test]
fn validate_only_audits_an_existing_solution() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&blendopt(&["--case", "single-pipe"], tmp.path())), EXIT_OK);
    assert_eq!(
        code(&blendopt(&["--case", "single-pipe", "--mode", "validate-only"], tmp.path())),
        EXIT_OK
    );

    // Raise the densities of one N3 row by 10%, breaking its balance rows.
    let path = tmp.path().join("nodes.csv");
    let text = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let k = lines.iter().position(|l| l.contains(",N3,")).unwrap();
    let mut cols: Vec<String> = lines[k].split(',').map(String::from).collect();
    for c in [2, 3] {
        let v: f64 = cols[c].parse().unwrap();
        cols[c] = format!("{:.16e}", v * 1.1);
    }
    lines[k] = cols.join(",");
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    let o = blendopt(&["--case", "single-pipe", "--mode", "validate-only"], tmp.path());
    assert_eq!(code(&o), EXIT_AUDIT, "{}", String::from_utf8_lossy(&o.stderr));
    let audit = fs::read_to_string(tmp.path().join("audit.txt")).unwrap();
    assert!(audit.contains("FAIL  residuals"), "{audit}");
}

#[test]
fn output_directory_comes_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_blendopt"))
        .args(["--case", "single-pipe", "--mode", "steady"])
        .env("BLENDOPT_OUT", tmp.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), EXIT_OK);
    assert!(tmp.path().join("nodes.csv").exists());
}

#[test]
fn steady_mode_writes_one_step() {
    let tmp = tempfile::tempdir().unwrap();
    let o = blendopt(&["--case", "eight-node", "--mode", "steady"], tmp.path());
    assert_eq!(code(&o), EXIT_OK);
    let nodes = fs::read_to_string(tmp.path().join("nodes.csv")).unwrap();
    assert_eq!(nodes.lines().count(), 1 + 15);
}

#[test]
fn overrides_change_the_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let o = blendopt(&["--case", "single-pipe", "--dt", "1", "--dl", "15000", "--xi", "0.6"], tmp.path());
    assert_eq!(code(&o), EXIT_OK, "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["size"]["time_steps"], 24);
    assert_eq!(summary["size"]["segments"], 2);
}
