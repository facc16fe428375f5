use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn prslab(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prslab")).args(args).arg("--out").arg(out).output().expect("run prslab")
}

fn rows(path: &Path) -> Vec<Vec<String>> {
    let mut reader = csv::Reader::from_path(path).unwrap();
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    let mut all = vec![header];
    all.extend(reader.records().map(|r| r.unwrap().iter().map(String::from).collect()));
    all
}

fn cell<'a>(table: &'a [Vec<String>], row: usize, column: &str) -> &'a str {
    let i = table[0].iter().position(|h| h == column).unwrap();
    &table[row][i]
}

#[test]
fn haar_tail_example_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = prslab(
        &["haar-tail", "--qubits", "2", "--thresholds", "0.25", "--trials", "100000", "--seed", "7"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = rows(&dir.path().join("haar-tail.csv"));
    assert_eq!(table.len(), 2);
    assert_eq!(cell(&table, 1, "claim"), "haar-tail");
    let estimate: f64 = cell(&table, 1, "estimate").parse().unwrap();
    assert!((estimate - 0.4219).abs() < 0.005);
    assert_eq!(cell(&table, 1, "bound"), "0.512");
    let report = fs::read_to_string(dir.path().join("haar-tail.report.json")).unwrap();
    assert!(report.contains("\"passed\": true"));
}

#[test]
fn parity_attack_and_delta_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = prslab(&["puzzle-attack", "--family", "parity", "--n", "3", "--trials", "10000"], dir.path());
    assert!(out.status.success());
    let table = rows(&dir.path().join("puzzle-attack.csv"));
    assert_eq!(cell(&table, 1, "success"), "1");

    let out =
        prslab(&["delta-table", "--n", "2,3,4,5,6,7,8", "--m", "2,3,4,5,6,7,8,9,10,11,12", "--f", "2"], dir.path());
    assert!(out.status.success());
    let table = rows(&dir.path().join("delta-table.csv"));
    assert_eq!(table.len(), 1 + 7 * 11);
    // With f = 2 the bound only drops below 3/4 once the key term is small.
    let below: Vec<(&str, &str)> = (1..table.len())
        .filter(|&r| cell(&table, r, "below_three_quarters") == "true")
        .map(|r| (cell(&table, r, "n"), cell(&table, r, "m")))
        .collect();
    assert!(below.contains(&("2", "4")));
    assert!(!below.contains(&("8", "4")));
}

#[test]
fn reduction_and_design_quality() {
    let dir = tempfile::tempdir().unwrap();
    let out = prslab(
        &["reduction", "--cells", "3:4", "--copies", "1", "--trials", "500", "--inverter", "measure-and-match"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    assert_eq!(rows(&dir.path().join("reduction.csv")).len(), 1 + 4);

    let out = prslab(&["design-quality", "--family", "constant", "--n", "3", "--m", "2", "--t", "1"], dir.path());
    assert!(out.status.success());
    let table = rows(&dir.path().join("design-quality.csv"));
    let eps: f64 = cell(&table, 1, "epsilon_hat").parse().unwrap();
    assert!((eps - 1.5).abs() < 1e-6);
    assert_eq!(cell(&table, 1, "mode"), "exact-over-keys");
}

#[test]
fn config_files_drive_runs() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("attack.json");
    fs::write(
        &config,
        r#"{"version": 1, "seed": 3, "trials": 400,
            "experiment": {"kind": "puzzle-attack", "oracle": {"mode": "pp-threshold", "failure_budget": 0.01},
                           "puzzles": [{"family": "hash-table", "n": 3, "seed": 2}]}}"#,
    )
    .unwrap();
    let out = prslab(&["puzzle-attack", "--config", config.to_str().unwrap()], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = rows(&dir.path().join("puzzle-attack.csv"));
    assert_eq!(cell(&table, 1, "oracle"), "pp-threshold");
    assert_eq!(cell(&table, 1, "trials"), "400");

    // A config for a different experiment is refused.
    let out = prslab(&["haar-tail", "--config", config.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    fs::write(&config, r#"{"version": 9, "seed": 3, "trials": 4, "experiment": {"kind": "delta-table", "n_values": [2], "m_values": [2], "f_values": [2.0]}}"#).unwrap();
    let out = prslab(&["delta-table", "--config", config.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("version"));
}

#[test]
fn same_seed_same_bytes() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        assert!(prslab(&["haar-tail", "--trials", "2000", "--seed", "11"], dir.path()).status.success());
    }
    assert_eq!(fs::read(a.path().join("haar-tail.csv")).unwrap(), fs::read(b.path().join("haar-tail.csv")).unwrap());
}
