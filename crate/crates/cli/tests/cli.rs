//! Exit codes and output layout of the `graph-approx` binary.

use std::fs;
use std::path::Path;
use std::process::Command;

use graph_approx::bounds::BoundCheckReport;
use graph_approx_cli::output::read_numeric_csv;

fn run(args: &[&str]) -> i32 {
    let status = Command::new(env!("CARGO_BIN_EXE_graph-approx"))
        .args(args)
        .output()
        .expect("binary runs")
        .status;
    status.code().expect("exit code")
}

fn small_verify_config(dir: &Path) -> String {
    let path = dir.join("verify.json");
    fs::write(&path, r#"{"verify": {"min_nodes": 4, "max_nodes": 10}}"#).unwrap();
    path.display().to_string()
}

#[test]
fn verify_passes_and_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_verify_config(dir.path());
    let out = dir.path().join("out");
    let code = run(&[
        "verify",
        "--config",
        &config,
        "--instances",
        "3",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["violated"], false);
    let jackson =
        BoundCheckReport::from_json(&fs::read_to_string(out.join("jackson.json")).unwrap())
            .unwrap();
    assert!(!jackson.violated && !jackson.records.is_empty());
}

#[test]
fn corrupted_constant_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_verify_config(dir.path());
    let out = dir.path().join("out");
    let code = run(&[
        "verify",
        "--config",
        &config,
        "--instances",
        "10",
        "--corrupt-constant",
        "Cr=0.5",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 1);
    let jackson: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("jackson.json")).unwrap()).unwrap();
    assert_eq!(jackson["violated"], true);
}

#[test]
fn configuration_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    let unknown = dir.path().join("unknown.json");
    fs::write(&unknown, r#"{"gcn": {"depht": 3}}"#).unwrap();
    let broken = dir.path().join("broken.json");
    fs::write(&broken, "{").unwrap();
    let missing_graph = dir.path().join("missing.txt");
    for args in [
        vec!["verify", "--instances", "0", "--out-dir", out],
        vec!["verify", "--corrupt-constant", "Q=2", "--out-dir", out],
        vec![
            "decay",
            "--config",
            unknown.to_str().unwrap(),
            "--out-dir",
            out,
        ],
        vec![
            "decay",
            "--config",
            broken.to_str().unwrap(),
            "--out-dir",
            out,
        ],
        vec![
            "decay",
            "--config",
            "/nonexistent/config.json",
            "--out-dir",
            out,
        ],
        vec![
            "decay",
            "--graph",
            missing_graph.to_str().unwrap(),
            "--out-dir",
            out,
        ],
        vec!["skip", "--jobs", "0", "--out-dir", out],
        vec!["frobnicate"],
        vec!["decay", "--trials", "many"],
    ] {
        assert_eq!(run(&args), 2, "{args:?}");
    }
}

fn csv_columns(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    assert!(text.starts_with("# graph-approx "), "{}", path.display());
    assert!(text.contains("# seed: 5\n") && text.contains("# config: {"));
    read_numeric_csv(&text).unwrap()
}

#[test]
fn decay_writes_traces_aggregates_and_figures() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let args = [
        "decay", "--seed", "5", "--nodes", "20", "--trials", "3", "--depth", "6", "--svg",
    ];
    let code = run(&[
        &args[..],
        &["--jobs", "2", "--out-dir", out.to_str().unwrap()],
    ]
    .concat());
    assert_eq!(code, 0);
    let (columns, rows) = csv_columns(&out.join("decay_gcn.csv"));
    assert_eq!(columns, ["layer", "mean_ln_Eh", "stderr_ln_Eh", "trials"]);
    assert_eq!(rows.len(), 7);
    assert!(rows.iter().all(|r| r[3] == 3.0));
    let (columns, rows) = csv_columns(&out.join("traces/decay_rw_trial0002.csv"));
    assert_eq!(columns, ["layer", "Eh", "ln_Eh", "frobenius_norm"]);
    assert_eq!(rows.len(), 7);
    assert!(fs::read_to_string(out.join("decay.svg"))
        .unwrap()
        .starts_with("<svg"));
    assert!(!out.join("decay_bound.json").exists());

    // Results do not depend on the worker count.
    let serial = dir.path().join("serial");
    let code = run(&[
        &args[..],
        &["--jobs", "1", "--out-dir", serial.to_str().unwrap()],
    ]
    .concat());
    assert_eq!(code, 0);
    assert_eq!(
        fs::read_to_string(out.join("decay_long.csv")).unwrap(),
        fs::read_to_string(serial.join("decay_long.csv")).unwrap()
    );
}

#[test]
fn unit_weights_produce_a_clean_bound_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let code = run(&[
        "surgery",
        "--seed",
        "5",
        "--nodes",
        "16",
        "--trials",
        "2",
        "--depth",
        "8",
        "--weight-frobenius",
        "1",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let report =
        BoundCheckReport::from_json(&fs::read_to_string(out.join("surgery_bound.json")).unwrap())
            .unwrap();
    assert!(report.applicable && !report.violated && report.worst_margin.is_some());
    for j in 1..=4 {
        assert!(out.join(format!("surgery_h{j}.csv")).exists());
    }
}

#[test]
fn skip_on_a_file_graph() {
    let dir = tempfile::tempdir().unwrap();
    let graph = dir.path().join("ring.txt");
    let edges: String = (0..12)
        .map(|i| format!("{i} {} 1\n", (i + 1) % 12))
        .collect();
    fs::write(&graph, edges).unwrap();
    let out = dir.path().join("out");
    let code = run(&[
        "skip",
        "--seed",
        "5",
        "--trials",
        "2",
        "--depth",
        "10",
        "--graph",
        graph.to_str().unwrap(),
        "--svg",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let text = fs::read_to_string(out.join("skip_table.csv")).unwrap();
    let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(
        body[0],
        "variant,K,median_ln_Eh,mean_ln_Eh,min_ln_Eh,max_ln_Eh,trials"
    );
    // Three variants at depths 1, 5 and 10.
    assert_eq!(body.len(), 1 + 3 * 3);
    let hist = fs::read_to_string(out.join("skip_histogram.csv")).unwrap();
    assert_eq!(hist.lines().filter(|l| l.starts_with("gcnii,")).count(), 12);
    assert!(out.join("skip_histogram_resgcn.svg").exists());
}
