//! Command-line behaviour: exit codes, error messages, piping and determinism.

mod common;

use common::{gen_file, qms, qms_ok, qms_stdin, real};
use serde_json::Value;

fn grid_json(n: usize) -> String {
    qms_ok(&["gen", "grid", "--n", &n.to_string()]).stdout
}

fn edit_space(n: usize, edit: impl FnOnce(&mut Value)) -> String {
    let mut space: Value = serde_json::from_str(&grid_json(n)).unwrap();
    edit(&mut space);
    space.to_string()
}

#[test]
fn mismatched_mass_vector_is_an_input_error() {
    let text = edit_space(3, |s| s["mu"] = serde_json::json!([1.0]));
    let run = qms_stdin(&["analyze"], Some(&text));
    assert_eq!(run.code, 3);
    assert!(run.stderr.contains("mu length"), "{}", run.stderr);
}

#[test]
fn degenerate_distance_is_an_input_error() {
    let text = edit_space(3, |s| s["rho"][0][1] = serde_json::json!(0.0));
    let run = qms_stdin(&["analyze"], Some(&text));
    assert_eq!(run.code, 3);
    assert!(run.stderr.contains("nondegeneracy"), "{}", run.stderr);
}

#[test]
fn missing_file_is_an_input_error() {
    let run = qms(&["analyze", "/definitely/not/here.json"]);
    assert_eq!(run.code, 3);
    assert!(run.stderr.starts_with("error:"));
    assert!(run.stdout.is_empty());
}

#[test]
fn wrong_function_length_is_an_input_error() {
    let run = qms_stdin(&["seminorm", "--s", "0.5", "--p", "1", "--u=0,1"], Some(&grid_json(3)));
    assert_eq!(run.code, 3);
    assert!(run.stderr.contains("length 2"), "{}", run.stderr);
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(qms(&["frobnicate"]).code, 2);
    assert_eq!(qms(&["gen"]).code, 2);
    assert_eq!(qms(&["seminorm", "--s", "0.5"]).code, 2);
    let bad_q = qms_stdin(
        &["seminorm", "--s", "0.5", "--p", "1", "--q", "abc", "--u=0,1,0"],
        Some(&grid_json(3)),
    );
    assert_eq!(bad_q.code, 2);
    assert!(bad_q.stderr.contains("inf"));
}

#[test]
fn regime_mismatch_exits_with_two() {
    let run = qms_stdin(
        &[
            "verify",
            "--theorem",
            "lb",
            "--mode",
            "holder",
            "--s",
            "0.5",
            "--p",
            "1",
            "--Q",
            "1",
        ],
        Some(&grid_json(5)),
    );
    assert_eq!(run.code, 2);
    assert!(run.stderr.contains("regime mismatch"), "{}", run.stderr);
}

#[test]
fn analyze_has_no_csv_form() {
    let run = qms_stdin(&["analyze", "--format", "csv"], Some(&grid_json(3)));
    assert_eq!(run.code, 2);
    assert!(run.stdout.is_empty());
}

#[test]
fn infinite_inner_exponent_is_accepted() {
    for q in ["inf", "INF", "+inf", "Infinity"] {
        let run = qms_stdin(&["seminorm", "--s", "0.5", "--p", "1", "--q", q, "--u=0,1,0"], Some(&grid_json(3)));
        assert_eq!(run.code, 0, "q = {q}: {}", run.stderr);
        assert_eq!(run.json()["spec"]["q"], "inf");
    }
}

#[test]
fn generated_space_pipes_into_analyze() {
    let run = qms_stdin(&["analyze", "-"], Some(&grid_json(16)));
    assert_eq!(run.code, 0, "{}", run.stderr);
    let report = run.json();
    assert_eq!(report["points"], 16);
    assert_eq!(real(&report["summary"]["c_rho"]), 2.0);
}

#[test]
fn output_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let space = gen_file(dir.path(), "random.json", &["random", "--n", "7", "--seed", "11"]);
    let path = space.to_str().unwrap();
    let commands: [&[&str]; 4] = [
        &["analyze", path],
        &["regularize", path],
        &["seminorm", path, "--s", "0.5", "--p", "2", "--q", "2", "--u=0,1,0,2,1,0,1"],
        &[
            "recover",
            path,
            "--theorem",
            "lb",
            "--mode",
            "sobolev",
            "--s",
            "0.25",
            "--p",
            "1",
            "--Q",
            "1",
        ],
    ];
    for args in commands {
        let first = qms(args);
        let second = qms(args);
        assert_eq!(first.code, second.code, "{args:?}");
        assert_eq!(first.stdout, second.stdout, "{args:?}");
    }
    assert_eq!(grid_json(9), grid_json(9));
}

#[test]
fn triviality_scan_writes_csv() {
    let run = qms_ok(&[
        "triviality",
        "--family",
        "line",
        "--resolutions",
        "2,4",
        "--s",
        "0.5,1.5",
        "--p",
        "1",
    ]);
    let mut lines = run.stdout.lines();
    assert_eq!(lines.next(), Some("resolution,s,value"));
    assert_eq!(lines.count(), 4);
}

#[test]
fn islands_refuse_recovery_from_a_poincare_inequality() {
    let islands = qms_ok(&["gen", "islands", "--sizes", "4,4", "--gap", "10"]).stdout;
    let run = qms_stdin(
        &[
            "recover",
            "--theorem",
            "lb",
            "--mode",
            "poincare",
            "--s",
            "0.5",
            "--p",
            "1",
            "--Q",
            "1",
        ],
        Some(&islands),
    );
    assert_eq!(run.code, 1);
    assert!(run.stderr.contains("not uniformly perfect"), "{}", run.stderr);
}

#[test]
fn out_flag_writes_the_report_to_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("report.json");
    let run = qms_stdin(&["regularize", "--out", target.to_str().unwrap()], Some(&grid_json(4)));
    assert_eq!(run.code, 0, "{}", run.stderr);
    assert!(run.stdout.is_empty());
    let report: Value = serde_json::from_str(&std::fs::read_to_string(target).unwrap()).unwrap();
    assert!(report.get("alpha0").is_some());
}
