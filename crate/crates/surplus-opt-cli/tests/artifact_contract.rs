use std::path::Path;

use surplus_opt_cli::config::{parse_config, Mode};
use surplus_opt_cli::runner::execute;

fn write_config(dir: &Path, k_max: u64, stride: u64, seed: u64) -> std::path::PathBuf {
    let body = format!(
        r#"{{
            "graph": {{ "kind": "ring", "n": 4, "weights": [0.3, 0.6, 0.9, 0.45] }},
            "objective": {{
                "kind": "quadratic",
                "q": [[[1.0]], [[2.0]], [[3.0]], [[1.5]]],
                "c": [[-2.0], [-0.5], [1.0], [2.5]]
            }},
            "dim": 1,
            "t": 0.5,
            "schedule": {{ "kind": "harmonic", "alpha0": 1.0 }},
            "k_max": {k_max},
            "record_stride": {stride},
            "seed": {seed},
            "mode": "run"
        }}"#
    );
    let path = dir.join("cfg.json");
    std::fs::write(&path, body).unwrap();
    path
}

#[test]
fn stride_equal_to_k_max_yields_exactly_two_data_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = write_config(tmp.path(), 500, 500, 11);
    let cfg = parse_config(&cfg_path).unwrap();
    let out = tmp.path().join("artifacts");
    execute(&cfg, &out).unwrap();

    let csv = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3, "header plus two data rows, got: {}", lines.len());
    assert!(lines[1].starts_with("0,"));
    assert!(lines[2].starts_with("500,"));
}

#[test]
fn trajectory_header_lists_every_flattened_state_column() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = write_config(tmp.path(), 10, 5, 11);
    let cfg = parse_config(&cfg_path).unwrap();
    let out = tmp.path().join("artifacts");
    execute(&cfg, &out).unwrap();

    let csv = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    let mut expected = String::from("k,alpha_k");
    for i in 1..=4 {
        for part in ["r", "q", "y"] {
            expected.push_str(&format!(",{part}{i}_0"));
        }
    }
    expected.push_str(
        ",consensus_error,surplus_norm,velocity_norm,optimality_gap,conservation_residual",
    );
    assert_eq!(header, expected);

    // Row k = 0 has no conservation residual yet: the final field is empty.
    let first = csv.lines().nth(1).unwrap();
    assert!(first.ends_with(','), "row: {first}");
    let field_count = header.split(',').count();
    assert!(csv.lines().skip(1).all(|row| row.split(',').count() == field_count));
}

#[test]
fn identical_config_and_seed_give_byte_identical_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = write_config(tmp.path(), 300, 7, 99);
    let cfg = parse_config(&cfg_path).unwrap();
    let out_a = tmp.path().join("a");
    let out_b = tmp.path().join("b");
    execute(&cfg, &out_a).unwrap();
    execute(&cfg, &out_b).unwrap();

    for name in ["trajectory.csv", "report.json", "decay.csv"] {
        let a = std::fs::read(out_a.join(name)).unwrap();
        let b = std::fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
}

#[test]
fn different_seed_changes_the_trajectory() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_a = parse_config(&write_config(tmp.path(), 300, 7, 99)).unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let cfg_b = parse_config(&write_config(dir_b.path(), 300, 7, 100)).unwrap();
    let out_a = tmp.path().join("a");
    let out_b = tmp.path().join("b");
    execute(&cfg_a, &out_a).unwrap();
    execute(&cfg_b, &out_b).unwrap();
    let a = std::fs::read(out_a.join("trajectory.csv")).unwrap();
    let b = std::fs::read(out_b.join("trajectory.csv")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn decay_csv_rows_respect_the_fitted_envelope() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = write_config(tmp.path(), 10, 5, 11);
    let cfg = parse_config(&cfg_path).unwrap();
    let out = tmp.path().join("artifacts");
    execute(&cfg, &out).unwrap();

    let csv = std::fs::read_to_string(out.join("decay.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "k,e_k,bound");
    let mut rows = 0;
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols.len(), 3);
        let e: f64 = cols[1].parse().unwrap();
        let bound: f64 = cols[2].parse().unwrap();
        assert!(e <= bound * 1.1, "row {line}");
        rows += 1;
    }
    assert_eq!(rows, 200);
}

#[test]
fn nested_output_directories_are_created_on_demand() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = write_config(tmp.path(), 10, 5, 11);
    let cfg = parse_config(&cfg_path).unwrap();
    let out = tmp.path().join("deep").join("nested").join("dir");
    execute(&cfg, &out).unwrap();
    assert!(out.join("report.json").exists());
    assert!(out.join("config-echo.json").exists());
}

#[test]
fn compare_mode_emits_side_by_side_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = write_config(tmp.path(), 2000, 500, 11);
    let mut cfg = parse_config(&cfg_path).unwrap();
    cfg.mode = Mode::Compare;
    let out = tmp.path().join("cmp");
    execute(&cfg, &out).unwrap();

    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("comparison.json")).unwrap())
            .unwrap();
    assert!(doc["x_star"][0].as_f64().is_some());
    assert!(doc["surplus_on"]["dist_to_optimum"].as_f64().is_some());
    assert!(doc["surplus_off"]["dist_to_optimum"].as_f64().is_some());
    assert!(out.join("on").join("trajectory.csv").exists());
    assert!(out.join("off").join("trajectory.csv").exists());
    assert!(out.join("on").join("decay.csv").exists());
    assert!(!out.join("off").join("decay.csv").exists());
}
