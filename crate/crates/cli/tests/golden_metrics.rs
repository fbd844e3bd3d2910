//! Dataset metric tables for the fixture corpus, frozen byte for byte and
//! cross-checked against an independent Python computation
//! (`tests/oracles/level_metrics_oracle.py`).

mod common;

use cte_cli::{run_stage, Stage};
use std::collections::HashMap;

fn golden(name: &str) -> String {
    std::fs::read_to_string(common::repo_root().join("crates/cli/tests/golden").join(name)).unwrap()
}

fn table(text: &str) -> Vec<HashMap<String, String>> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    lines.map(|l| header.iter().map(|h| h.to_string()).zip(l.split(',').map(str::to_string)).collect()).collect()
}

#[test]
fn dataset_metrics_match_golden_and_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::fixture_config(dir.path());
    run_stage(Stage::Ingest, &cfg).unwrap();
    run_stage(Stage::Metrics, &cfg).unwrap();
    let levels = std::fs::read_to_string(dir.path().join("metrics/dataset_levels.csv")).unwrap();
    let summary = std::fs::read_to_string(dir.path().join("metrics/dataset_summary.csv")).unwrap();
    assert_eq!(levels, golden("dataset_levels.csv"));
    assert_eq!(summary, golden("dataset_summary.csv"));

    let ours = table(&levels);
    let oracle = table(&golden("oracle_metrics.csv"));
    assert_eq!(ours.len(), oracle.len());
    for o in &oracle {
        let row = ours.iter().find(|r| r["group"] == o["group"] && r["level"] == o["level"]).unwrap();
        for col in ["density", "interestingness", "enemy_sparsity"] {
            let (a, b): (f64, f64) = (row[col].parse().unwrap(), o[col].parse().unwrap());
            assert!((a - b).abs() <= 1e-12, "{} {} {col}: {a} vs {b}", o["group"], o["level"]);
        }
    }
}
