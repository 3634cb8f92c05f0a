//! End-to-end tests of the `pograph` binary, including the determinism
//! acceptance criterion.

use std::fs;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pograph"))
}

const RUN_CONFIG: &str = r#"{
    "graph": {"topology": "path", "T": 128},
    "instance": {"instance": "coinflip", "L": 1.0, "B": 1.0},
    "algorithm": {"algorithm": "sequential_sgd"},
    "seeds": [1, 2, 3, 4, 5, 6, 7, 8],
    "reps": 1
}"#;

#[test]
fn acceptance_11_run_is_byte_identical_across_invocations() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("cfg.json");
    fs::write(&config, RUN_CONFIG).unwrap();
    let out1 = dir.path().join("a.csv");
    let out2 = dir.path().join("b.csv");
    // The second invocation runs single-threaded: output bytes must not
    // depend on parallelism either.
    for (out, threads) in [(&out1, None), (&out2, Some("1"))] {
        let mut cmd = bin();
        cmd.args(["run", "-c"]).arg(&config).arg("-o").arg(out);
        if let Some(t) = threads {
            cmd.env("POGRAPH_THREADS", t);
        }
        let status = cmd.status().unwrap();
        assert!(status.success());
    }
    let a = fs::read(&out1).unwrap();
    let b = fs::read(&out2).unwrap();
    let pass = a == b && !a.is_empty();
    println!(
        "acceptance 11 determinism: {}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "repeated `pograph run` emitted different CSV bytes");
}

#[test]
fn unknown_algorithm_exits_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("cfg.json");
    fs::write(
        &config,
        r#"{
            "graph": {"topology": "path", "T": 8},
            "instance": {"instance": "coinflip", "L": 1.0},
            "algorithm": {"algorithm": "definitely_not_an_algorithm"},
            "seeds": [0]
        }"#,
    )
    .unwrap();
    let status = bin().args(["run", "-c"]).arg(&config).status().unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn config_schema_violation_exits_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("cfg.json");
    fs::write(
        &config,
        r#"{
            "graph": {"topology": "path", "T": 8},
            "instance": {"instance": "coinflip", "L": 1.0},
            "algorithm": {"algorithm": "sequential_sgd"},
            "seeds": []
        }"#,
    )
    .unwrap();
    let status = bin().args(["run", "-c"]).arg(&config).status().unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn budget_failure_exits_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("cfg.json");
    // n = 64 needs 4 + inner rounds per stage but T = 2.
    fs::write(
        &config,
        r#"{
            "graph": {"topology": "intermittent", "T": 2, "K": 2, "M": 2},
            "instance": {"instance": "quadratic_chain", "H": 1.0, "D": 2, "m": 12},
            "algorithm": {"algorithm": "svrg", "n": 64, "I": 8},
            "seeds": [0]
        }"#,
    )
    .unwrap();
    let status = bin().args(["run", "-c"]).arg(&config).status().unwrap();
    assert_eq!(status.code(), Some(3));
}

#[test]
fn verify_passes() {
    let status = bin().arg("verify").status().unwrap();
    assert!(status.success());
}

#[test]
fn sweep_emits_slope_summary() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("cfg.json");
    fs::write(&config, RUN_CONFIG).unwrap();
    let out = dir.path().join("rows.csv");
    let output = bin()
        .args(["sweep", "-c"])
        .arg(&config)
        .args(["--axis", "T", "--values", "32,64,128"])
        .arg("-o")
        .arg(&out)
        .output()
        .unwrap();
    assert!(output.status.success());
    let summary: serde_json::Value =
        serde_json::from_slice(&output.stdout).expect("slope summary JSON on stdout");
    assert_eq!(summary["axis"], "T");
    assert!(summary["slope"].as_f64().unwrap() < 0.0);
    let rows = fs::read_to_string(&out).unwrap();
    assert!(rows.starts_with("graph,T,M,K,tau"));
    // 3 values x 8 seeds + header
    assert_eq!(rows.lines().count(), 25);
}

#[test]
fn progress_exports_one_json_record_per_node() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("cfg.json");
    fs::write(
        &config,
        r#"{
            "graph": {"topology": "path", "T": 6},
            "instance": {"instance": "moreau", "L": 1.0, "H": "inf", "D": 3, "m": 24},
            "algorithm": {"algorithm": "sequential_sgd"},
            "seeds": [3]
        }"#,
    )
    .unwrap();
    let out = dir.path().join("trace.jsonl");
    let status = bin()
        .args(["progress", "-c"])
        .arg(&config)
        .arg("-o")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let text = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 6);
    for (i, line) in lines.iter().enumerate() {
        let record: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(record["node"], i);
        assert!(record["depth"].as_u64().unwrap() >= 1);
        assert!(record["query"].is_array());
        assert!(record["grad_norm"].is_number());
        assert!(record["value"].is_number());
        assert!(record["z"].is_number());
    }
}

#[test]
fn regime_table_runs_and_is_order_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let config_a = dir.path().join("a.json");
    let config_b = dir.path().join("b.json");
    let cell_small = r#"{"graph": {"topology": "intermittent", "T": 3, "K": 2, "M": 2},

         "instance": {"instance": "quadratic_chain", "H": 1.0, "D": 2, "m": 24}}"#;
    let cell_large = r#"{"graph": {"topology": "intermittent", "T": 3, "K": 6, "M": 2},
         "instance": {"instance": "quadratic_chain", "H": 1.0, "D": 3, "m": 40}}"#;
    fs::write(
        &config_a,
        format!(r#"{{"cells": [{cell_small}, {cell_large}], "seeds": [1, 2]}}"#),
    )
    .unwrap();
    fs::write(
        &config_b,
        format!(r#"{{"cells": [{cell_large}, {cell_small}], "seeds": [1, 2]}}"#),
    )
    .unwrap();
    let out_a = bin()
        .args(["regime", "-c"])
        .arg(&config_a)
        .output()
        .unwrap();
    let out_b = bin()
        .args(["regime", "-c"])
        .arg(&config_b)
        .output()
        .unwrap();
    assert!(
        out_a.status.success(),
        "{}",
        String::from_utf8_lossy(&out_a.stderr)
    );
    assert!(out_b.status.success());
    let lines_a: Vec<String> = String::from_utf8(out_a.stdout)
        .unwrap()
        .lines()
        .skip(1)
        .map(String::from)
        .collect();
    let mut lines_b: Vec<String> = String::from_utf8(out_b.stdout)
        .unwrap()
        .lines()
        .skip(1)
        .map(String::from)
        .collect();
    lines_b.reverse();
    assert_eq!(lines_a, lines_b);
}
