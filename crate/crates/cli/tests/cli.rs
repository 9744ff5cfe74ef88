use std::fs;
use std::io::Write;
use std::process::{Command, Output, Stdio};

use geocard_core::catalog::Catalog;
use geocard_core::engine::EvaluationRequest;

const TERZAGHI: &str = "BEARING_CAPACITY_TERZAGHI";
const STRIP: &str = "general_shear_failure_strip";

fn geocard(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_geocard"))
        .args(args)
        .env_remove("GEOCARD_CATALOG_DIR")
        .env_remove("GEOCARD_SKILLS_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn standard_inputs() -> Vec<&'static str> {
    vec![
        "--in", "phi_prime=30 deg", "--in", "c_prime=0 kPa", "--in", "gamma=18 kN/m^3", "--in", "B=2 m", "--in",
        "q=18 kPa",
    ]
}

#[test]
fn validate_exit_codes() {
    let o = geocard(&["validate"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("4 card(s) valid"));

    let o = geocard(&["validate", "/definitely/not/here"]);
    assert_eq!(o.status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let card = fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../core/catalog/bearing_capacity_terzaghi.json"))
        .unwrap()
        .replace("0.5*gamma*B*N_gamma", "0.5*gamma*B*N_gamma*zeta");
    let path = dir.path().join("broken.json");
    fs::write(&path, card).unwrap();
    let o = geocard(&["validate", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("q_ult") && stderr(&o).contains("zeta"), "{}", stderr(&o));

    // a directory is scanned as a catalog
    let o = geocard(&["validate", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn list_and_show() {
    let o = geocard(&["list"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 4);
    let o = geocard(&["show", TERZAGHI]);
    let card: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(card["id"], TERZAGHI);
    assert_eq!(geocard(&["show", "NOPE"]).status.code(), Some(1));
}

#[test]
fn eval_report_lists_sources_and_matches_trace() {
    let mut args = vec!["eval", TERZAGHI, STRIP];
    args.extend(standard_inputs());
    let o = geocard(&args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = stdout(&o);
    assert!(report.contains("1. Terzaghi, K. (1943)"), "{report}");
    for heading in ["## Inputs", "## Calculation", "## Results", "## Assumptions", "## Applicability", "## Sources"] {
        assert!(report.contains(heading), "{heading}");
    }

    let trace = Catalog::bundled()
        .evaluate(
            &EvaluationRequest::new(TERZAGHI, STRIP)
                .input("phi_prime", "30 deg")
                .input("c_prime", "0 kPa")
                .input("gamma", "18 kN/m^3")
                .input("B", "2 m")
                .input("q", "18 kPa"),
        )
        .unwrap();
    // every bold result line equals its trace step to the printed precision
    let mut checked = 0;
    for line in report.lines().filter(|l| l.trim_start().starts_with("- **")) {
        let inner = line.trim().trim_start_matches("- **").trim_end_matches("**");
        let (target, rest) = inner.split_once(" = ").unwrap();
        let printed: f64 = rest.split_whitespace().next().unwrap().parse().unwrap();
        let actual = trace.step(target).unwrap().result.value;
        assert!((printed - actual).abs() <= 5e-4 * actual.abs(), "{target}: {printed} vs {actual}");
        checked += 1;
    }
    assert_eq!(checked, trace.steps.len());
}

#[test]
fn eval_json_is_canonical_trace() {
    let mut args = vec!["eval", TERZAGHI, STRIP, "--format", "json"];
    args.extend(standard_inputs());
    let o = geocard(&args);
    let expected = Catalog::bundled()
        .evaluate(
            &EvaluationRequest::new(TERZAGHI, STRIP)
                .input("phi_prime", "30 deg")
                .input("c_prime", "0 kPa")
                .input("gamma", "18 kN/m^3")
                .input("B", "2 m")
                .input("q", "18 kPa"),
        )
        .unwrap()
        .to_canonical_json();
    assert_eq!(stdout(&o).trim_end(), expected);
}

#[test]
fn eval_errors() {
    let o = geocard(&["eval", TERZAGHI, STRIP, "--in", "phi_prime=30 deg", "--in", "B=2"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("c_prime") && err.contains("gamma") && err.contains("q"), "{err}");

    let o = geocard(&["eval", TERZAGHI, STRIP, "--in", "phi_prime"]);
    assert_eq!(o.status.code(), Some(2));
    let o = geocard(&["eval", TERZAGHI, STRIP, "--format", "pdf"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn ec7_design_all_table() {
    let o = geocard(&["ec7", "design", "--scenario", "jrc_a3", "--da", "all"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    let rows: Vec<&str> = out.lines().filter(|l| l.starts_with("| DA")).collect();
    let labels: Vec<&str> = rows.iter().map(|r| r.split('|').nth(1).unwrap().trim()).collect();
    assert_eq!(labels, ["DA1-C1", "DA1-C2", "DA2", "DA3"]);
    let widths: Vec<f64> = rows.iter().map(|r| r.split('|').nth(3).unwrap().trim().parse().unwrap()).collect();
    for (w, expected) in widths[1..].iter().zip([1.497, 1.211, 1.738]) {
        assert!((w - expected).abs() <= 0.005, "{w} vs {expected}");
    }
    assert!(out.contains("governed by DA1-C2"));
}

#[test]
fn ec7_check_and_json() {
    let o = geocard(&["ec7", "check", "--scenario", "jrc_a3", "--da", "DA1-C2", "--width", "1.50 m", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let u = v["utilization"].as_f64().unwrap();
    assert!((u - 0.997).abs() < 5e-4, "{u}");
    assert_eq!(v["pass"], true);

    let o = geocard(&["ec7", "check", "--scenario", "jrc_a3", "--da", "DA9", "--width", "1.5"]);
    assert_eq!(o.status.code(), Some(2));
    let o = geocard(&["ec7", "check", "--scenario", "missing.json", "--da", "DA2", "--width", "1.5"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn ec7_design_without_bracket_fails() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("light.json");
    fs::write(
        &path,
        r#"{"name": "lightly loaded", "L": "10 m", "D_f": "1 m", "phi_prime_k": "35 deg",
            "gamma_k": "19 kN/m^3", "G_k": "1 kN", "Q_k": "0 kN", "gamma_sw": "0 kN/m^3"}"#,
    )
    .unwrap();
    let o = geocard(&["ec7", "design", "--scenario", path.to_str().unwrap(), "--da", "DA2"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("does not cross 1"), "{}", stderr(&o));

    fs::write(&path, r#"{"L": "10 m"}"#).unwrap();
    let o = geocard(&["ec7", "design", "--scenario", path.to_str().unwrap(), "--da", "DA2"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn serve_handles_handshake_bad_lines_and_eof() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_geocard"))
        .arg("serve")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(
            b"{\"jsonrpc\":\"2.0\",\"id\":1,\"method\":\"initialize\",\"params\":{}}\n{oops\n{\"jsonrpc\":\"2.0\",\"id\":2,\"method\":\"ping\"}\n",
        )
        .unwrap();
    let out = child.wait_with_output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let lines: Vec<serde_json::Value> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0]["result"]["instructions"].as_str().unwrap().contains("geo_recommend_skills"));
    assert_eq!(lines[1]["error"]["code"], -32700);
    assert_eq!(lines[2]["id"], 2);
}
