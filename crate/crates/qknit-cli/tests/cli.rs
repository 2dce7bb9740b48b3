//! End-to-end tests of the `qknit` binary: documented example invocations,
//! exit codes, seed determinism, and thread-count invariance.

use std::io::Write;
use std::process::{Command, Output};

use serde_json::Value;

fn qknit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qknit"))
        .args(args)
        .env_remove("QKNIT_SEED")
        .output()
        .expect("spawn qknit")
}

fn json_stdout(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("JSON stdout")
}

fn bell_cut_file() -> tempfile::NamedTempFile {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    write!(
        f,
        r#"{{"qubits": 2, "sites": [
            {{"kind": "gate", "targets": [0], "payload": {{"name": "H"}}}},
            {{"kind": "blackbox_cut", "targets": [0, 1], "payload": {{"name": "CNOT", "cut": "cnot"}}}}
        ]}}"#
    )
    .unwrap();
    f
}

#[test]
fn extent_examples() {
    let doc = json_stdout(&qknit(&["extent", "--target", "T", "--set", "clifford1q"]));
    assert!((doc["gamma"].as_f64().unwrap() - 1.414214).abs() < 1e-6);
    assert_eq!(doc["seed"], 0);

    let doc = json_stdout(&qknit(&["extent", "--target", "H_state", "--set", "stab1"]));
    assert!((doc["gamma"].as_f64().unwrap() - 1.414214).abs() < 1e-6);

    let doc = json_stdout(&qknit(&["extent", "--target", "I", "--set", "clifford1q"]));
    assert!((doc["gamma"].as_f64().unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn extent_coefficients_flag_and_ptm_target() {
    let doc = json_stdout(&qknit(&[
        "extent",
        "--target",
        "ptm:1,-1,-1,-1",
        "--set",
        "endo16",
        "--coefficients",
    ]));
    assert!((doc["gamma"].as_f64().unwrap() - 2.0).abs() < 1e-7);
    assert_eq!(doc["coefficients"].as_array().unwrap().len(), 16);
}

#[test]
fn decompose_examples() {
    let doc = json_stdout(&qknit(&["decompose", "--kind", "wirecut_mpc", "--n", "1"]));
    assert_eq!(doc["term_count"], 8);
    assert!((doc["one_norm"].as_f64().unwrap() - 4.0).abs() < 1e-9);
    assert!(doc["residual"].as_f64().unwrap() < 1e-8);

    let doc = json_stdout(&qknit(&["decompose", "--kind", "pure_state", "--schmidt", "0.7071,0.7071"]));
    assert!((doc["one_norm"].as_f64().unwrap() - 3.0).abs() < 1e-6);
    assert!(doc["residual"].as_f64().unwrap() < 1e-7);

    let doc = json_stdout(&qknit(&["decompose", "--kind", "cr", "--theta", "3.14159265"]));
    assert!((doc["one_norm"].as_f64().unwrap() - 3.0).abs() < 1e-6);
    assert!(doc["residual"].as_f64().unwrap() < 1e-7);
}

#[test]
fn estimate_report_fields_and_oracle() {
    let f = bell_cut_file();
    let path = f.path().to_str().unwrap();
    let out = qknit(&[
        "estimate", "--circuit", path, "--obs", "ZZ", "--shots", "5000", "--seed", "11", "--oracle",
    ]);
    let doc = json_stdout(&out);
    for key in ["mean", "stderr", "shots", "one_norm", "seed", "wall_time_ms", "exact", "deviation"] {
        assert!(doc.get(key).is_some(), "missing field {}", key);
    }
    assert_eq!(doc["seed"], 11);
    assert!((doc["exact"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert!((doc["one_norm"].as_f64().unwrap() - 3.0).abs() < 1e-9);
    let dev = doc["deviation"].as_f64().unwrap().abs();
    assert!(dev < 5.0 * doc["stderr"].as_f64().unwrap().max(1e-3), "deviation {}", dev);
}

#[test]
fn estimate_same_seed_is_byte_identical_modulo_wall_time() {
    let f = bell_cut_file();
    let path = f.path().to_str().unwrap();
    let run = || {
        let out = qknit(&["estimate", "--circuit", path, "--obs", "ZZ", "--shots", "2000", "--seed", "3"]);
        assert!(out.status.success());
        String::from_utf8(out.stdout)
            .unwrap()
            .lines()
            .filter(|l| !l.contains("wall_time_ms"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(run(), run());
}

#[test]
fn estimate_thread_count_does_not_change_results() {
    let f = bell_cut_file();
    let path = f.path().to_str().unwrap();
    let run = |threads: &str| {
        let doc = json_stdout(&qknit(&[
            "estimate", "--circuit", path, "--obs", "ZZ", "--shots", "2000", "--seed", "5", "--threads", threads,
        ]));
        (doc["mean"].as_f64().unwrap(), doc["stderr"].as_f64().unwrap())
    };
    assert_eq!(run("1"), run("4"));
}

#[test]
fn qknit_seed_env_fallback() {
    let f = bell_cut_file();
    let path = f.path().to_str().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_qknit"))
        .args(["estimate", "--circuit", path, "--obs", "ZZ", "--shots", "100"])
        .env("QKNIT_SEED", "42")
        .output()
        .unwrap();
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["seed"], 42);
}

#[test]
fn exit_codes() {
    // Malformed circuit JSON: parse error, exit 2.
    let mut f = tempfile::NamedTempFile::new().unwrap();
    write!(f, "not json").unwrap();
    let out = qknit(&["estimate", "--circuit", f.path().to_str().unwrap(), "--obs", "Z"]);
    assert_eq!(out.status.code(), Some(2));

    // Unknown set and unknown kind: usage errors, exit 2.
    assert_eq!(qknit(&["extent", "--target", "T", "--set", "nope"]).status.code(), Some(2));
    assert_eq!(qknit(&["decompose", "--kind", "nope"]).status.code(), Some(2));

    // clap-level usage error (missing required flag).
    assert_eq!(qknit(&["extent", "--target", "T"]).status.code(), Some(2));

    // Resource cap: circuit over the qubit cap, exit 3.
    let mut big = String::from(r#"{"qubits": 11, "sites": ["#);
    big.push_str(r#"{"kind": "gate", "targets": [0], "payload": {"name": "H"}}"#);
    big.push_str("]}");
    let mut f = tempfile::NamedTempFile::new().unwrap();
    write!(f, "{}", big).unwrap();
    let out = qknit(&["estimate", "--circuit", f.path().to_str().unwrap(), "--obs", "ZIIIIIIIIII"]);
    assert_eq!(out.status.code(), Some(3), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    // Domain error: non-normalized probabilities are a constructor failure, exit 1.
    let mut f = tempfile::NamedTempFile::new().unwrap();
    write!(
        f,
        r#"{{"qubits": 1, "sites": [
            {{"kind": "prep", "targets": [0], "payload": {{"state": [[2.0, 0.0], [0.0, 0.0]]}}}}
        ]}}"#
    )
    .unwrap();
    let out = qknit(&["estimate", "--circuit", f.path().to_str().unwrap(), "--obs", "Z"]);
    assert_eq!(out.status.code(), Some(1), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn sweep_csv_shape_and_values() {
    let out = qknit(&["sweep", "--kind", "depolarizing"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "param,gamma_closed_form,gamma_lp_or_reconstructed,residual");
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols.len(), 4);
        let p: f64 = cols[0].parse().unwrap();
        let closed: f64 = cols[1].parse().unwrap();
        assert!((closed - (1.0 + p / 2.0) / (1.0 - p)).abs() < 1e-9);
        assert!(cols[3].parse::<f64>().unwrap() < 1e-10);
    }

    let out = qknit(&["sweep", "--kind", "factory"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let gammas: Vec<f64> =
        text.lines().skip(1).map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    assert_eq!(gammas.len(), 3);
    assert!(gammas[0] > gammas[1] && gammas[1] > gammas[2]);
}

#[test]
fn output_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.json");
    let out = qknit(&["extent", "--target", "T", "--set", "clifford1q", "--output", path.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert!((doc["gamma"].as_f64().unwrap() - 1.414214).abs() < 1e-6);
}

#[test]
fn help_documents_every_flag() {
    for (args, flags) in [
        (vec!["extent", "--help"], vec!["--target", "--set", "--coefficients", "--theta"]),
        (vec!["decompose", "--help"], vec!["--kind", "--n", "--d", "--schmidt", "--theta", "--p"]),
        (
            vec!["estimate", "--help"],
            vec!["--circuit", "--obs", "--shots", "--mode", "--factory-size", "--oracle"],
        ),
        (vec!["sweep", "--help"], vec!["--kind", "--points"]),
        (vec!["--help"], vec!["--seed", "--threads", "--output"]),
    ] {
        let out = qknit(&args);
        assert!(out.status.success());
        let text = String::from_utf8(out.stdout).unwrap();
        for flag in flags {
            assert!(text.contains(flag), "{:?} missing {}", args, flag);
        }
        // global flags appear in every subcommand help
        if args.len() > 1 {
            for flag in ["--seed", "--threads", "--output"] {
                assert!(text.contains(flag), "{:?} missing {}", args, flag);
            }
        }
    }
}
