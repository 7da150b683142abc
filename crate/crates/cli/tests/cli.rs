use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use mixforge_core::synthetic::{generate, SyntheticSpec};
use mixforge_core::FeatureSchema;
use serde_json::Value;
use tempfile::TempDir;

const QUICK: [&str; 8] = [
    "--override",
    "n_trials=2",
    "--override",
    "k=2",
    "--override",
    "search.n_rounds=20",
    "--override",
    "background_size=16",
];

fn mixforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mixforge"))
        .args(args)
        .env("MIXFORGE_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = mixforge(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    dir: TempDir,
    data: PathBuf,
    run: PathBuf,
}

/// A 200-row dataset and one quick pipeline run, shared by every test.
fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("data.csv");
        let spec = SyntheticSpec {
            n_rows: 200,
            ..SyntheticSpec::default()
        };
        generate(&spec).unwrap().data.save_csv(&data).unwrap();
        let run = dir.path().join("run");
        let mut args = vec!["pipeline", "--data", s(&data), "--out", s(&run)];
        args.extend(QUICK);
        ok(&args);
        Fixture { dir, data, run }
    })
}

fn mean_sets() -> Vec<String> {
    FeatureSchema::uhpc()
        .inputs()
        .flat_map(|c| {
            [
                "--set".to_string(),
                format!("{}={}", c.name, c.mean.unwrap()),
            ]
        })
        .collect()
}

#[test]
fn pipeline_writes_run_directory() {
    let f = fixture();
    for file in [
        "bundle.json",
        "trials.jsonl",
        "audit.csv",
        "report.json",
        "manifest.json",
    ] {
        assert!(f.run.join(file).is_file(), "{file} missing");
    }
    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(f.run.join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["command"], "pipeline");
    assert_eq!(manifest["config"]["n_trials"], 2);
    assert!(manifest["seeds"]["split"].is_u64());
}

#[test]
fn manifest_reproduces_the_run() {
    let f = fixture();
    let again = f.dir.path().join("again");
    ok(&[
        "pipeline",
        "--data",
        s(&f.data),
        "--config",
        s(&f.run.join("manifest.json")),
        "--out",
        s(&again),
    ]);
    for file in ["trials.jsonl", "audit.csv", "report.json"] {
        assert_eq!(
            std::fs::read(f.run.join(file)).unwrap(),
            std::fs::read(again.join(file)).unwrap(),
            "{file} differs"
        );
    }
}

#[test]
fn predict_at_table_means() {
    let f = fixture();
    let sets = mean_sets();
    let bundle = f.run.join("bundle.json");
    let mut args = vec!["predict", "--bundle", s(&bundle)];
    args.extend(sets.iter().map(String::as_str));
    let v: Value = serde_json::from_str(&ok(&args)).unwrap();
    let preds = v["predictions"].as_array().unwrap();
    assert_eq!(preds.len(), 5);
    let units: Vec<&str> = preds.iter().map(|p| p["unit"].as_str().unwrap()).collect();
    assert_eq!(units, ["MPa", "MPa", "MPa", "Mm", "%"]);
    assert!(preds
        .iter()
        .all(|p| p["value"].as_f64().unwrap().is_finite()));
}

#[test]
fn predict_names_a_missing_feature() {
    let f = fixture();
    let out = mixforge(&[
        "predict",
        "--bundle",
        s(&f.run.join("bundle.json")),
        "--set",
        "Cement content=800",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing feature"));
}

#[test]
fn explain_contributions_sum_to_prediction() {
    let f = fixture();
    let sets = mean_sets();
    let bundle = f.run.join("bundle.json");
    let mut args = vec!["explain", "--bundle", s(&bundle), "--target", "cs"];
    args.extend(sets.iter().map(String::as_str));
    let v: Value = serde_json::from_str(&ok(&args)).unwrap();
    let a = &v["attributions"][0];
    let total = a["base_value"].as_f64().unwrap()
        + a["contributions"]
            .as_array()
            .unwrap()
            .iter()
            .map(|c| c["value"].as_f64().unwrap())
            .sum::<f64>();
    assert!((total - a["prediction"].as_f64().unwrap()).abs() < 1e-6);
}

#[test]
fn evaluate_scores_the_bundle() {
    let f = fixture();
    let out = f.dir.path().join("eval");
    ok(&[
        "evaluate",
        "--bundle",
        s(&f.run.join("bundle.json")),
        "--data",
        s(&f.data),
        "--out",
        s(&out),
    ]);
    let v: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("evaluation.json")).unwrap())
            .unwrap();
    assert!(v.to_string().contains("rmse"));
}

#[test]
fn validate_reports_and_rejects_missing_columns() {
    let f = fixture();
    let v: Value = serde_json::from_str(&ok(&["validate", "--data", s(&f.data)])).unwrap();
    assert_eq!(v["rows"], 200);

    let text = std::fs::read_to_string(&f.data).unwrap();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = rdr.headers().unwrap().iter().map(str::to_string).collect();
    let drop = header.iter().position(|h| h == "Water content").unwrap();
    let bad = f.dir.path().join("no_water.csv");
    let mut w = csv::Writer::from_path(&bad).unwrap();
    let keep = |r: Vec<&str>| -> Vec<String> {
        r.into_iter()
            .enumerate()
            .filter(|(i, _)| *i != drop)
            .map(|(_, c)| c.to_string())
            .collect()
    };
    w.write_record(keep(header.iter().map(String::as_str).collect()))
        .unwrap();
    for rec in rdr.records() {
        w.write_record(keep(rec.as_ref().unwrap().iter().collect()))
            .unwrap();
    }
    w.flush().unwrap();
    let out = mixforge(&["validate", "--data", s(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Water content"));
}

#[test]
fn split_clean_tune_and_train_write_artifacts() {
    let f = fixture();
    let data = s(&f.data);
    let out = f.dir.path().join("split");
    ok(&["split", "--data", data, "--out", s(&out)]);
    let lines = |p: PathBuf| std::fs::read_to_string(p).unwrap().lines().count() - 1;
    assert_eq!(
        lines(out.join("train.csv")) + lines(out.join("test.csv")),
        200
    );
    assert_eq!(lines(out.join("train.csv")), 140);

    let out = f.dir.path().join("clean");
    ok(&["clean", "--data", data, "--out", s(&out)]);
    assert_eq!(lines(out.join("audit.csv")), 20);
    assert_eq!(lines(out.join("cleaned.csv")), 180);
    assert!(out.join("cleaning.json").is_file());

    let out = f.dir.path().join("tune");
    let mut args = vec![
        "tune",
        "--data",
        data,
        "--target",
        "porosity",
        "--out",
        s(&out),
    ];
    args.extend(QUICK);
    ok(&args);
    assert_eq!(lines(out.join("trials.jsonl")) + 1, 2);
    assert!(out.join("best.json").is_file());

    let out = f.dir.path().join("train");
    let mut args = vec!["train", "--data", data, "--out", s(&out)];
    args.extend(QUICK);
    args.extend(["--override", "targets=[\"cs\"]"]);
    ok(&args);
    assert!(out.join("bundle.json").is_file());
}

#[test]
fn preselect_ranks_requested_kinds() {
    let f = fixture();
    let out = f.dir.path().join("pre");
    let text = ok(&[
        "preselect",
        "--data",
        s(&f.data),
        "--target",
        "cs",
        "--kinds",
        "ols_linear,ridge,decision_tree",
        "--out",
        s(&out),
    ]);
    assert!(text.contains("ridge"));
    let csv = std::fs::read_to_string(out.join("preselect.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.starts_with("model,train_MAE"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(mixforge(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(mixforge(&["predict"]).status.code(), Some(2));
    assert_eq!(
        mixforge(&[
            "preselect",
            "--data",
            "x.csv",
            "--target",
            "cs",
            "--kinds",
            "nope"
        ])
        .status
        .code(),
        Some(2)
    );
}

#[test]
fn bad_override_is_reported() {
    let f = fixture();
    let out = mixforge(&["validate", "--data", s(&f.data), "--override", "nonsense=1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nonsense"));
}

#[test]
fn every_subcommand_documents_its_flags() {
    let cases: [(&str, &[&str]); 11] = [
        ("validate", &["--data", "--schema", "--strict"]),
        ("split", &["--data"]),
        (
            "preselect",
            &[
                "--target",
                "--kinds",
                "--external",
                "--rmse-max",
                "--r2-min",
            ],
        ),
        ("tune", &["--target"]),
        ("train", &["--data"]),
        ("clean", &["--data"]),
        ("explain", &["--bundle", "--set", "--row", "--target"]),
        ("pipeline", &["--data"]),
        ("evaluate", &["--bundle", "--data", "--target"]),
        ("predict", &["--bundle", "--set", "--row"]),
        ("serve", &["--bundle", "--bind", "--strict"]),
    ];
    for (cmd, flags) in cases {
        let help = ok(&[cmd, "--help"]);
        for flag in flags
            .iter()
            .chain(&["--config", "--override", "--seed", "--out"])
        {
            assert!(help.contains(flag), "{cmd} --help lacks {flag}");
        }
    }
}
