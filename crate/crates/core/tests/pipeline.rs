use std::collections::HashMap;

use mixforge_core::explain::{default_policy, select_features, SelectionPolicy};
use mixforge_core::pipeline::run::{stage1_bundle, write_trial_lines};
use mixforge_core::pipeline::{
    load_bundle, run_pipeline, run_stage1, run_stage2, save_bundle, validate_out_of_set,
    verify_metrics, write_run, FilterScope, ModelBundle, PipelineConfig,
};
use mixforge_core::synthetic::{generate, SyntheticSpec};
use mixforge_core::{Dataset, Error, FeatureSchema};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn data(n: usize) -> Dataset {
    generate(&SyntheticSpec {
        n_rows: n,
        ..SyntheticSpec::default()
    })
    .unwrap()
    .data
}

fn quick(targets: &[&str]) -> PipelineConfig {
    let mut cfg = PipelineConfig {
        targets: targets.iter().map(|s| s.to_string()).collect(),
        n_trials: 3,
        k: 3,
        background_size: 32,
        ranking_rows: 50,
        ..PipelineConfig::default()
    };
    cfg.search.n_rounds = 40;
    cfg
}

fn json_without_timestamp(b: &ModelBundle) -> String {
    let mut b = b.clone();
    b.created.created_unix = 0;
    b.to_json().unwrap()
}

fn random_raw(schema: &FeatureSchema, r: &mut ChaCha8Rng) -> HashMap<String, f64> {
    schema
        .inputs()
        .map(|c| (c.name.clone(), r.gen_range(c.observed_min..=c.observed_max)))
        .collect()
}

const SHIPPED_EXCLUSIONS: [(&str, &[&str]); 5] = [
    (
        "Compressive strength",
        &[
            "Coarse aggregate",
            "Fly ash content",
            "Steel fiber length",
            "Hydration Temperature",
        ],
    ),
    (
        "Flexural strength",
        &[
            "Silica fume content",
            "Slag powder content",
            "Steel fiber length",
            "Hydration Temperature",
        ],
    ),
    (
        "Tensile strength",
        &[
            "Coarse aggregate",
            "Fly ash content",
            "HPWR",
            "Steel fiber length",
        ],
    ),
    (
        "Slump flow",
        &[
            "Fly ash content",
            "Slag powder content",
            "HPWR",
            "Steel fiber length",
            "SF Tensile strength",
            "SF Elastic modulus",
            "Hydration Temperature",
        ],
    ),
    (
        "Porosity",
        &[
            "Fly ash content",
            "Slag powder content",
            "HPWR",
            "Steel fiber content",
            "SF Tensile strength",
            "SF Elastic modulus",
            "Hydration Temperature",
        ],
    ),
];

#[test]
fn default_selections_partition_the_inputs() {
    let schema = FeatureSchema::uhpc();
    let inputs = schema.input_names();
    for (target, excluded) in SHIPPED_EXCLUSIONS {
        let sel = select_features(&schema, target, &[], &default_policy(target).unwrap()).unwrap();
        let mut ex = sel.excluded.clone();
        let mut want: Vec<String> = excluded.iter().map(|s| s.to_string()).collect();
        ex.sort();
        want.sort();
        assert_eq!(ex, want, "{target}");
        assert_eq!(sel.included.len() + sel.excluded.len(), 17);
        assert!(inputs
            .iter()
            .all(|f| sel.included.contains(f) != sel.excluded.contains(f)));
    }
}

#[test]
fn single_target_run_has_one_entry() {
    let run = run_pipeline(&data(240), &quick(&["compressive"])).unwrap();
    assert_eq!(run.bundle.targets.len(), 1);
    assert_eq!(run.bundle.targets[0].target, "Compressive strength");
    assert!(matches!(
        run.bundle.entry("Porosity"),
        Err(Error::UnknownTarget(_))
    ));
}

#[test]
fn same_seeds_give_identical_bundles_and_logs() {
    let d = data(220);
    let cfg = quick(&["Porosity", "Tensile strength"]);
    let a = run_pipeline(&d, &cfg).unwrap();
    let b = run_pipeline(&d, &cfg).unwrap();
    assert_eq!(
        json_without_timestamp(&a.bundle),
        json_without_timestamp(&b.bundle)
    );
    let (mut la, mut lb) = (Vec::new(), Vec::new());
    write_trial_lines(&a.trials, &mut la).unwrap();
    write_trial_lines(&b.trials, &mut lb).unwrap();
    assert_eq!(la, lb);
    assert_eq!(a.trials.len(), 2 * 2 * cfg.n_trials);
}

#[test]
fn disabled_cleaning_reproduces_stage1() {
    let d = data(220);
    let cfg = quick(&["Flexural strength", "Slump flow"]).without_cleaning(d.schema());
    let run = run_pipeline(&d, &cfg).unwrap();
    let c = run.bundle.cleaning.as_ref().unwrap();
    assert!(c.prune.dropped.is_empty() && c.outliers.removed.is_empty());
    for t in &run.bundle.targets {
        let m2 = t.model2.as_ref().unwrap();
        assert_eq!(m2.config, t.model1.config);
        assert_eq!(m2.ensemble.features, t.model1.ensemble.features);
        assert!((m2.test_metrics.rmse - t.model1.test_metrics.rmse).abs() <= 1e-9);
    }
}

#[test]
fn full_scope_filters_before_the_split() {
    let d = data(300);
    let run = run_pipeline(&d, &quick(&["Slump flow"])).unwrap();
    let t = &run.bundle.targets[0];
    let m2 = t.model2.as_ref().unwrap();
    let removed = &run.bundle.cleaning.as_ref().unwrap().outliers.removed;
    assert_eq!(removed.len(), 30);
    assert_eq!(m2.train_ids.len() + m2.test_ids.len(), 270);
    assert!(removed
        .iter()
        .all(|r| !m2.train_ids.contains(&r.row_id) && !m2.test_ids.contains(&r.row_id)));
    for excluded in SHIPPED_EXCLUSIONS[3].1 {
        assert!(m2.selection.excluded.iter().any(|e| e == excluded));
        assert!(!m2.ensemble.features.iter().any(|f| f == excluded));
    }
}

#[test]
fn train_only_scope_keeps_the_test_split() {
    let d = data(300);
    let cfg = PipelineConfig {
        filter_scope: FilterScope::TrainOnly,
        ..quick(&["Tensile strength"])
    };
    let run = run_pipeline(&d, &cfg).unwrap();
    let t = &run.bundle.targets[0];
    let m2 = t.model2.as_ref().unwrap();
    let audit = &run.bundle.cleaning.as_ref().unwrap().outliers;
    assert_eq!(audit.n_scored, 210);
    assert_eq!(audit.removed.len(), 21);
    assert_eq!(m2.test_ids, t.model1.test_ids);
    assert_eq!(m2.train_ids.len(), 189);
    assert!(audit
        .removed
        .iter()
        .all(|r| t.model1.train_ids.contains(&r.row_id)));
}

#[test]
fn reuse_skips_the_second_search() {
    let d = data(200);
    let cfg = PipelineConfig {
        retune_stage2: false,
        ..quick(&["Porosity"])
    };
    let run = run_pipeline(&d, &cfg).unwrap();
    let t = &run.bundle.targets[0];
    assert_eq!(t.model2.as_ref().unwrap().config, t.model1.config);
    assert!(run.trials.iter().all(|l| l.stage == 1));
}

#[test]
fn selection_that_empties_the_inputs_is_an_error() {
    let d = data(120);
    let mut cfg = quick(&["Porosity"]);
    cfg.selection.insert(
        "Porosity".into(),
        SelectionPolicy::FixedList {
            excluded: d.schema().input_names(),
        },
    );
    let stage1 = run_stage1(&d, &cfg).unwrap();
    assert!(run_stage2(&d, stage1, &cfg).is_err());
}

#[test]
fn bundle_round_trip_is_bit_exact_and_consistent() {
    let d = data(260);
    let run = run_pipeline(&d, &quick(&["Compressive strength", "Porosity"])).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bundle.json");
    save_bundle(&run.bundle, &path).unwrap();
    let loaded = load_bundle(&path).unwrap();
    assert_eq!(loaded, run.bundle);

    let mut r = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..100 {
        let raw = random_raw(d.schema(), &mut r);
        let a = run.bundle.predict_all(&raw).unwrap();
        let b = loaded.predict_all(&raw).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert_eq!(p.value.to_bits(), q.value.to_bits());
        }
    }

    assert!(verify_metrics(&loaded, &d).unwrap() <= 1e-9);
    for t in &loaded.targets {
        for m in std::iter::once(&t.model1).chain(t.model2.as_ref()) {
            assert!(m
                .ensemble
                .features
                .iter()
                .all(|f| m.selection.included.contains(f)));
        }
    }
}

#[test]
fn attribution_sums_to_prediction() {
    let d = data(200);
    let run = run_pipeline(&d, &quick(&["Flexural strength"])).unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..5 {
        let raw = random_raw(d.schema(), &mut r);
        let a = run.bundle.explain("Flexural strength", &raw).unwrap();
        assert!(a.local_accuracy_error() < 1e-6);
        assert_eq!(
            a.prediction.to_bits(),
            run.bundle
                .predict("Flexural strength", &raw)
                .unwrap()
                .to_bits()
        );
    }
}

#[test]
fn bundle_version_and_corruption_errors() {
    let d = data(120);
    let cfg = quick(&["Porosity"]);
    let stage1 = run_stage1(&d, &cfg).unwrap();
    let b = stage1_bundle(&d, &stage1, &cfg);
    let text = b.to_json().unwrap();
    let future = text.replacen("\"format_version\": 1", "\"format_version\": 2", 1);
    assert!(matches!(
        ModelBundle::from_json(&future),
        Err(Error::Version { found: 2, .. })
    ));
    let broken = &text[..text.len() / 2];
    match ModelBundle::from_json(broken) {
        Err(Error::Json { line, .. }) => assert!(line > 0),
        other => panic!("expected a located parse error, got {other:?}"),
    }
}

#[test]
fn out_of_set_report_on_exact_predictions() {
    let d = data(150);
    let cfg = quick(&["Compressive strength"]);
    let run = run_pipeline(&d, &cfg).unwrap();
    let holdout = data(170)
        .without_ids(&(1..=150).collect::<Vec<u64>>())
        .unwrap();
    let rep = validate_out_of_set(&run.bundle, &holdout, "compressive").unwrap();
    assert_eq!(rep.rows.len(), 20);
    assert!(
        rep.max_abs_percent.unwrap().abs()
            >= rep
                .rows
                .iter()
                .filter_map(|r| r.percent)
                .map(f64::abs)
                .fold(0.0, f64::max)
                - 1e-12
    );
}

#[test]
fn run_directory_contents() {
    let d = data(150);
    let cfg = quick(&["Porosity"]);
    let run = run_pipeline(&d, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_run(&run, dir.path()).unwrap();
    for f in ["bundle.json", "trials.jsonl", "audit.csv", "report.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let lines = std::fs::read_to_string(dir.path().join("trials.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 2 * cfg.n_trials);
    let audit = std::fs::read_to_string(dir.path().join("audit.csv")).unwrap();
    assert_eq!(audit.lines().count(), 1 + 15);
}
