use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use crossover_design::study::{resolve_design, EfficiencyReport, ParameterSpace};

const THETA: &str = "0.25,-0.5,0.75,0.1,0.9,0.4";

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crossover"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

const STUDY: [&str; 12] = [
    "study",
    "--periods",
    "3",
    "--space",
    "B2",
    "--corr",
    "cs",
    "--designs",
    "d1,d4,d6,ABB+AAB",
    "--draws",
    "40",
    "--seed",
];

fn study_args<'a>(seed: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = STUDY.to_vec();
    v.push(seed);
    v.extend_from_slice(extra);
    v
}

fn json_report(path: &Path) -> (serde_json::Value, EfficiencyReport) {
    let text = fs::read_to_string(path).unwrap();
    let value: serde_json::Value = serde_json::from_str(&text).unwrap();
    let report = serde_json::from_value(value.clone()).unwrap();
    (value, report)
}

#[test]
fn csv_is_identical_across_thread_counts() {
    let one = stdout(&study_args("5", &["--threads", "1"]));
    let three = stdout(&study_args("5", &["--threads", "3"]));
    assert_eq!(one, three);
    assert!(one.starts_with("design,space,correlation,target,min_eff,median_eff\n"));
    assert_eq!(one.lines().count(), 5);
}

#[test]
fn json_reports_repeat_except_for_the_timestamp() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    stdout(&study_args("5", &["--out", a.to_str().unwrap()]));
    stdout(&study_args(
        "5",
        &["--out", b.to_str().unwrap(), "--threads", "2"],
    ));
    let (mut va, _) = json_report(&a);
    let (mut vb, _) = json_report(&b);
    for v in [&mut va, &mut vb] {
        let obj = v.as_object_mut().unwrap();
        assert!(obj.remove("generated_unix").is_some());
        assert_eq!(obj["version"], env!("CARGO_PKG_VERSION"));
        assert_eq!(obj["seed"], 5);
        assert_eq!(obj["draws"], 40);
    }
    assert_eq!(va, vb);
}

#[test]
fn csv_and_json_carry_the_same_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("r.json");
    let csv_path = dir.path().join("r.txt");
    stdout(&study_args("8", &["--out", json.to_str().unwrap()]));
    stdout(&study_args(
        "8",
        &["--out", csv_path.to_str().unwrap(), "--format", "csv"],
    ));
    let (_, report) = json_report(&json);
    let mut reader = csv::Reader::from_path(&csv_path).unwrap();
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), report.designs.len());
    for (row, d) in rows.iter().zip(&report.designs) {
        assert_eq!(&row[0], d.name);
        assert_eq!(&row[1], report.space);
        assert_eq!(&row[2], report.correlation);
        assert_eq!(row[4].parse::<f64>().unwrap(), d.min_eff.unwrap());
        assert_eq!(row[5].parse::<f64>().unwrap(), d.median_eff.unwrap());
    }
}

#[test]
fn report_names_resolve_back_to_the_same_objects() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("r.json");
    stdout(&study_args("1", &["--out", json.to_str().unwrap()]));
    let (_, report) = json_report(&json);
    assert!(ParameterSpace::builtin(&report.space).is_some());
    for d in &report.designs {
        let entry = resolve_design(&d.name, report.periods).unwrap();
        assert_eq!(entry.support, d.support);
        assert_eq!(entry.allocation, d.allocation);
    }
}

#[test]
fn config_file_values_yield_to_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("study.json");
    fs::write(
        &cfg,
        r#"{"periods": 2, "space": "senn", "carryover": false,
            "correlation": {"kind": "cs", "alpha": 0.2}, "draws": 30, "seed": 3}"#,
    )
    .unwrap();
    let from_file = stdout(&["study", "--config", cfg.to_str().unwrap()]);
    assert!(from_file.contains("D1,senn,cs:0.2,direct,"));
    let overridden = stdout(&["study", "--config", cfg.to_str().unwrap(), "--corr", "ind"]);
    assert!(overridden.contains("D1,senn,ind,direct,"));
}

#[test]
fn variance_matches_recorded_fixture() {
    let base = [
        "variance",
        "--periods",
        "3",
        "--theta",
        THETA,
        "--corr",
        "cs:0.4",
        "--design",
        "d2",
    ];
    let model = stdout(&base);
    assert_eq!(model.trim(), "1.171562144107829");
    let mut with_truth = base.to_vec();
    with_truth.extend(["--truth", "cs:0.4"]);
    assert_eq!(stdout(&with_truth), model);
    let mut weighted = base.to_vec();
    weighted[8] = "ABB:0.5,BAA:0.5";
    assert_eq!(stdout(&weighted), model);
    let mut misspecified = base.to_vec();
    misspecified.extend(["--truth", "ar1:0.4"]);
    let v: f64 = stdout(&misspecified).trim().parse().unwrap();
    assert!((v - 1.5019918980183187).abs() < 1e-12);
}

#[test]
fn variance_prints_not_estimable() {
    let out = stdout(&[
        "variance",
        "--periods",
        "3",
        "--theta",
        "zero",
        "--design",
        "BAB",
    ]);
    assert_eq!(out.trim(), "NOT-ESTIMABLE");
}

#[test]
fn optimize_reports_weights_and_certificate() {
    let out = stdout(&[
        "optimize",
        "--periods",
        "2",
        "--theta",
        "zero",
        "--corr",
        "cs:0.2",
        "--json",
    ]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    let w: Vec<f64> = serde_json::from_value(v["weights"].clone()).unwrap();
    // AA~BB and AB~BA are dual pairs
    assert!((w[0] - w[3]).abs() < 1e-9 && (w[1] - w[2]).abs() < 1e-9);
    assert!(v["kkt_gap"].as_f64().unwrap() <= 1e-6);

    let text = stdout(&[
        "optimize",
        "--periods",
        "2",
        "--theta",
        "zero",
        "--support",
        "AB,AA,BA",
    ]);
    assert!(text.contains("variance") && text.contains("kkt_gap"));
}

#[test]
fn exit_codes_separate_config_and_numerical_errors() {
    let bad_space = run(&["study", "--periods", "3", "--space", "B9", "--corr", "ind"]);
    assert_eq!(bad_space.status.code(), Some(2));
    let bad_alpha = run(&[
        "study",
        "--periods",
        "3",
        "--space",
        "B1",
        "--corr",
        "cs:1.5",
    ]);
    assert_eq!(bad_alpha.status.code(), Some(2));
    let missing = run(&["study", "--space", "B1"]);
    assert_eq!(missing.status.code(), Some(2));
    let bad_flag = run(&["study", "--bogus"]);
    assert_eq!(bad_flag.status.code(), Some(2));

    let confounded = run(&[
        "optimize",
        "--periods",
        "3",
        "--theta",
        "zero",
        "--support",
        "ABA",
    ]);
    assert_eq!(confounded.status.code(), Some(3));
    let msg = String::from_utf8_lossy(&confounded.stderr);
    assert!(
        msg.contains("not estimable") && msg.contains("ABA"),
        "{msg}"
    );
}
