//! End-to-end runs of the `isoball` binary.

use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Output, Stdio};

use serde_json::Value;

fn isoball(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_isoball")).args(args).stdin(Stdio::null()).output().expect("binary runs")
}

fn isoball_stdin(args: &[&str], input: &str) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_isoball"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("binary runs");
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout)
        .unwrap_or_else(|e| panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&out.stdout)))
}

fn scratch(name: &str) -> PathBuf {
    std::env::temp_dir().join(format!("isoball-cli-{}-{name}", std::process::id()))
}

#[test]
fn sheeting_of_third_root() {
    let out = isoball(&["sheeting", "--map", r#"{"kind":"pth_root","p":3}"#, "--k", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["schema"], "isoball/1");
    assert_eq!(r["result"]["n"], 3);
    assert_eq!(r["result"]["s"], serde_json::json!([3, 3, 3]));
    for id in ["sum_reciprocal", "divisibility", "range"] {
        assert_eq!(r["result"]["identities"][id], true, "{id}");
    }
}

#[test]
fn diagonal_verifies_with_its_constants() {
    let out = isoball(&["verify", "--map", r#"{"kind":"diagonal","p":2}"#, "--constants", "[1,1]", "--k", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["pass"], true);
    assert_eq!(r["config"]["samples"], 500);
    assert_eq!(r["config"]["tol"], 1e-10);
}

#[test]
fn wrong_source_constant_fails_the_check() {
    let out = isoball(&["verify", "--map", r#"{"kind":"diagonal","p":2}"#, "--constants", "[1,1]", "--k", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(report(&out)["pass"], false);
}

#[test]
fn solve_u_zeta_reports_residuals() {
    let out = isoball(&["solve", "--zeta", "0.2", "--order", "64"]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["config"]["order"], 64);
    assert_eq!(r["result"]["degree_r"], 3);
    assert_eq!(r["result"]["minimal_ball_dimension"], 2);
    let residuals = &r["result"]["solved"]["residuals"];
    for key in ["recursion", "polarized", "inverse_relation", "component_relation"] {
        assert!(residuals[key].as_f64().unwrap() < 1e-9, "{key}");
    }
}

#[test]
fn request_document_on_stdin() {
    let out = isoball_stdin(&["sheeting"], r#"{"map":{"kind":"pth_root","p":2},"k":1}"#);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(report(&out)["result"]["n"], 2);
}

#[test]
fn request_document_from_file_with_flag_override() {
    let path = scratch("request.json");
    std::fs::write(&path, r#"{"map":{"kind":"diagonal","p":3},"samples":10}"#).unwrap();
    let out = isoball(&["verify", "--input", path.to_str().unwrap(), "--samples", "20"]);
    std::fs::remove_file(&path).ok();
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["config"]["samples"], 20);
    assert_eq!(r["result"]["sample_count"], 20);
    assert_eq!(r["config"]["k"], 3.0);
}

#[test]
fn malformed_json_is_a_validation_error() {
    let out = isoball_stdin(&["verify"], "{ not json");
    assert_eq!(out.status.code(), Some(2));
    let r = report(&out);
    assert_eq!(r["status"], "error");
    assert_eq!(r["error"]["kind"], "validation");
}

#[test]
fn unknown_command_has_an_envelope() {
    let out = isoball(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    let r = report(&out);
    assert_eq!(r["schema"], "isoball/1");
    assert_eq!(r["error"]["operation"], "parse_arguments");
}

#[test]
fn out_of_range_parameter_names_the_operation() {
    let out = isoball(&["solve", "--zeta", "0.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(report(&out)["error"]["operation"], "u_zeta");
}

#[test]
fn unknown_request_fields_are_rejected() {
    let out = isoball_stdin(&["verify"], r#"{"map":{"kind":"identity"},"radious":0.5}"#);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let args = ["polarize", "--map", r#"{"kind":"pth_root","p":2}"#, "--samples", "100"];
    let a = isoball(&args);
    let b = isoball(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn emitted_samples_are_csv() {
    let path = scratch("samples.csv");
    let out = isoball(&[
        "metric",
        "--map",
        r#"{"kind":"pth_root","p":2}"#,
        "--samples",
        "30",
        "--emit-samples",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::remove_file(&path).ok();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("w_re,w_im,residual"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 30);
    assert!(rows.iter().all(|r| r.len() == 3 && r[2] < 1e-6));
}

#[test]
fn output_path_receives_the_report() {
    let path = scratch("report.json");
    let out = isoball(&[
        "construct",
        "--map",
        r#"{"kind":"catalog","form":"delta3-k2"}"#,
        "--output",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    std::fs::remove_file(&path).ok();
    assert_eq!(r["result"]["dimension"], 3);
    assert_eq!(r["result"]["source_constant"], 2.0);
}

#[test]
fn proper_ball_part_of_u_zeta() {
    let out = isoball(&["proper", "--map", r#"{"kind":"u_zeta","zeta":[0.2,0.0]}"#]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["config"]["factor"], 2);
    assert_eq!(r["result"]["strictly_increasing"], true);
}

#[test]
fn congruence_of_a_map_with_itself() {
    let m = r#"{"kind":"u_zeta","zeta":[0.2,0.1]}"#;
    let out = isoball(&["congruence", "--f", m, "--g", m]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(report(&out)["result"]["verdict"], "congruent");
}

#[test]
fn congruence_needs_solved_maps() {
    let out = isoball(&["congruence", "--f", r#"{"kind":"identity"}"#, "--g", r#"{"kind":"identity"}"#]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn kernel_check_family_and_single_matrix() {
    let out = isoball(&["kernel-check", "--p", "2", "--q", "4", "--samples", "25"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(report(&out)["result"]["checked"], 25);
    let out = isoball(&["kernel-check", "--matrix", "[[0.3, [0.1, 0.2]], [0.0, 0.5]]"]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    // det(I - Z Z*) for this matrix, expanded by hand.
    let (a, b, d) = (0.3f64, (0.1f64, 0.2f64), 0.5f64);
    let b2 = b.0 * b.0 + b.1 * b.1;
    let m11 = 1.0 - a * a - b2;
    let m22 = 1.0 - d * d;
    let m12 = -(b.0 * d);
    let m12_im = -(b.1 * d);
    let det = m11 * m22 - (m12 * m12 + m12_im * m12_im);
    assert!((r["result"]["worst"][0].as_f64().unwrap() - det).abs() < 1e-14);
}

#[test]
fn rigidity_of_a_rational_map() {
    let out = isoball(&["rigidity", "--map", r#"{"kind":"diagonal","p":2}"#]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["result"]["all_rational"], true);
    assert_eq!(r["result"]["counterexample"], false);
}

#[test]
fn bare_numbers_inside_map_descriptors() {
    let out = isoball(&["construct", "--map", r#"{"kind":"u_zeta","zeta":0.2}"#]);
    assert_eq!(out.status.code(), Some(0));
    let m =
        r#"{"kind":"sharp","outer":{"kind":"unitary","matrix":[[1,0],[0,1]]},"inner":{"kind":"identity"},"slot":1}"#;
    let out = isoball(&["construct", "--map", m]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
}
