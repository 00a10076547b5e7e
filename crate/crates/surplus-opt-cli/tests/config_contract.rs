use std::io::Write;

use surplus_opt_cli::config::{parse_config, resolve, CliError, EpsilonSpec, Mode};

fn write_temp_config(body: &str) -> tempfile::NamedTempFile {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    f.write_all(body.as_bytes()).unwrap();
    f.flush().unwrap();
    f
}

fn ring4_config(t: f64, epsilon: &str, exponent: Option<f64>) -> String {
    let schedule = match exponent {
        None => r#"{ "kind": "harmonic", "alpha0": 1.0 }"#.to_string(),
        Some(p) => format!(r#"{{ "kind": "power", "alpha0": 1.0, "exponent": {p} }}"#),
    };
    format!(
        r#"{{
            "graph": {{ "kind": "ring_uniform", "n": 4, "weight": 1.0 }},
            "objective": {{
                "kind": "quadratic",
                "q": [[[1.0]], [[2.0]], [[3.0]], [[1.5]]],
                "c": [[-2.0], [-0.5], [1.0], [2.5]]
            }},
            "dim": 1,
            "t": {t},
            "epsilon": {epsilon},
            "schedule": {schedule},
            "k_max": 1000,
            "seed": 3,
            "mode": "run"
        }}"#
    )
}

#[test]
fn auto_epsilon_resolves_to_half_the_admissible_bound() {
    let f = write_temp_config(&ring4_config(0.5, "\"auto\"", None));
    let cfg = parse_config(f.path()).unwrap();
    // Unit-weight ring at T = 0.5: ε_max = 1/T − 1 = 1, so auto gives 0.5.
    match cfg.epsilon {
        EpsilonSpec::Value(e) => assert!((e - 0.5).abs() <= 1e-15, "resolved ε = {e}"),
        other => panic!("epsilon not materialized: {other:?}"),
    }
}

#[test]
fn oversized_sampling_time_names_the_theorem_condition() {
    let f = write_temp_config(&ring4_config(10.0, "\"auto\"", None));
    let err = parse_config(f.path()).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("Theorem 1"), "message: {msg}");
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn square_summable_boundary_exponent_is_rejected() {
    let f = write_temp_config(&ring4_config(0.5, "\"auto\"", Some(0.5)));
    let err = parse_config(f.path()).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("Assumption 3"), "message: {msg}");
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn epsilon_at_or_above_the_bound_is_rejected() {
    let f = write_temp_config(&ring4_config(0.5, "1.0", None));
    let err = parse_config(f.path()).unwrap_err();
    assert!(err.to_string().contains("Theorem 1"), "message: {err}");
}

#[test]
fn unknown_fields_are_parse_errors() {
    let body = ring4_config(0.5, "\"auto\"", None)
        .replace("\"seed\": 3,", "\"seed\": 3, \"typo_field\": 1,");
    let f = write_temp_config(&body);
    let err = parse_config(f.path()).unwrap_err();
    assert!(matches!(err, CliError::Parse(_)), "got {err:?}");
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn config_echo_round_trips_to_an_identical_config() {
    let f = write_temp_config(&ring4_config(0.5, "\"auto\"", None));
    let cfg = parse_config(f.path()).unwrap();
    let echo = serde_json::to_string_pretty(&cfg).unwrap();
    let f2 = write_temp_config(&echo);
    let cfg2 = parse_config(f2.path()).unwrap();
    assert_eq!(cfg, cfg2);
}

#[test]
fn resolve_builds_a_consistent_bundle() {
    let f = write_temp_config(&ring4_config(0.5, "\"auto\"", None));
    let cfg = parse_config(f.path()).unwrap();
    assert_eq!(cfg.mode, Mode::Run);
    let res = resolve(&cfg).unwrap();
    assert_eq!(res.graph.n(), 4);
    assert_eq!(res.family.n(), 4);
    assert!((res.epsilon_max - 1.0).abs() <= 1e-15);
    assert!(res.system.is_some());
    assert_eq!(res.initial.n(), 4);
    assert_eq!(res.initial.dim(), 1);
}

#[test]
fn explicit_initial_state_is_honored_and_validated() {
    let base = ring4_config(0.5, "\"auto\"", None);
    let with_init = base.replace(
        "\"mode\": \"run\"",
        "\"mode\": \"run\", \"initial\": { \"r\": [[1.0], [2.0], [3.0], [4.0]] }",
    );
    let f = write_temp_config(&with_init);
    let cfg = parse_config(f.path()).unwrap();
    let res = resolve(&cfg).unwrap();
    assert_eq!(res.initial.agents[2].r, vec![3.0]);
    assert_eq!(res.initial.agents[2].q, vec![0.0]);

    let bad = base
        .replace("\"mode\": \"run\"", "\"mode\": \"run\", \"initial\": { \"r\": [[1.0], [2.0]] }");
    let f2 = write_temp_config(&bad);
    let err = parse_config(f2.path()).unwrap_err();
    assert!(matches!(err, CliError::Parse(_)));
}

#[test]
fn edge_list_graphs_load_through_the_config() {
    let mut edges = tempfile::NamedTempFile::new().unwrap();
    writeln!(edges, "# j i a_ij").unwrap();
    writeln!(edges, "1 2 0.4").unwrap();
    writeln!(edges, "2 1 0.4").unwrap();
    edges.flush().unwrap();
    let body = format!(
        r#"{{
            "graph": {{ "kind": "edge_list", "path": {} }},
            "objective": {{ "kind": "quartic", "centers": [[-1.0], [1.0]] }},
            "dim": 1,
            "t": 0.5,
            "schedule": {{ "kind": "harmonic", "alpha0": 1.0 }},
            "k_max": 100,
            "mode": "check"
        }}"#,
        serde_json::to_string(edges.path()).unwrap()
    );
    let f = write_temp_config(&body);
    let cfg = parse_config(f.path()).unwrap();
    let res = resolve(&cfg).unwrap();
    assert_eq!(res.graph.n(), 2);
    assert!((res.graph.weight(1, 0) - 0.4).abs() <= 1e-15);
    assert!((res.epsilon_max - 1.6).abs() <= 1e-12);
}

#[test]
fn missing_config_file_is_an_io_error() {
    let err = parse_config(std::path::Path::new("/nonexistent/cfg.json")).unwrap_err();
    assert!(matches!(err, CliError::Io(_)));
    assert_eq!(err.exit_code(), 4);
}
