use std::sync::Arc;

use mixforge_core::preprocess::{
    average_path_length, filter_outliers, fit_isolation_forest, score_anomalies,
};
use mixforge_core::synthetic::{generate, SyntheticSpec};
use mixforge_core::{ColumnSpec, Dataset, FeatureSchema};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn plane(points: Vec<Vec<f64>>) -> Dataset {
    let schema = FeatureSchema::new(
        "plane",
        vec![
            ColumnSpec::input("a", "", -1e9, 1e9),
            ColumnSpec::input("b", "", -1e9, 1e9),
            ColumnSpec::target("y", "", -1e9, 1e9),
        ],
    )
    .unwrap();
    Dataset::from_rows(Arc::new(schema), points).unwrap()
}

fn ab() -> Vec<String> {
    vec!["a".into(), "b".into()]
}

fn uniform_with_planted(seed: u64) -> Dataset {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut pts: Vec<Vec<f64>> = (0..99).map(|_| vec![r.gen(), r.gen(), 0.0]).collect();
    pts.push(vec![10.0, 10.0, 0.0]);
    plane(pts)
}

#[test]
fn normalizer_closed_form() {
    assert!((average_path_length(256) - 10.2448).abs() < 1e-4);
    assert_eq!(average_path_length(2), 1.0);
    assert_eq!(average_path_length(1), 0.0);
}

#[test]
fn removes_ten_of_one_hundred() {
    let data = uniform_with_planted(1);
    let model = fit_isolation_forest(&data, &ab(), 100, 100, 5).unwrap();
    let scores = score_anomalies(&model, &data).unwrap();
    let (kept, removed) = filter_outliers(&data, &scores, 0.10).unwrap();
    assert_eq!((kept.n_rows(), removed.len()), (90, 10));
    assert!(removed.contains(&99));
}

#[test]
fn removes_one_hundred_twenty_of_twelve_hundred_one() {
    let s = generate(&SyntheticSpec {
        n_rows: 1201,
        ..SyntheticSpec::default()
    })
    .unwrap();
    let inputs = s.data.schema().input_names();
    let model = fit_isolation_forest(&s.data, &inputs, 100, 256, 3).unwrap();
    let scores = score_anomalies(&model, &s.data).unwrap();
    assert!(scores.iter().all(|&v| v > 0.0 && v <= 1.0));
    let (kept, removed) = filter_outliers(&s.data, &scores, 0.10).unwrap();
    assert_eq!((kept.n_rows(), removed.len()), (1081, 120));
}

#[test]
fn planted_outlier_ranks_first() {
    let hits = (0..100u64)
        .filter(|&seed| {
            let data = uniform_with_planted(1000 + seed);
            let model = fit_isolation_forest(&data, &ab(), 100, 100, seed).unwrap();
            let scores = score_anomalies(&model, &data).unwrap();
            let top = (0..scores.len())
                .max_by(|&i, &j| scores[i].total_cmp(&scores[j]).then(j.cmp(&i)))
                .unwrap();
            top == 99
        })
        .count();
    assert!(hits >= 95, "planted outlier ranked first in {hits} of 100");
}

#[test]
fn zero_contamination_is_identity() {
    let data = uniform_with_planted(2);
    let scores = vec![0.5; 100];
    let (kept, removed) = filter_outliers(&data, &scores, 0.0).unwrap();
    assert!(removed.is_empty());
    assert_eq!(kept.values(), data.values());
}

#[test]
fn seeded_forest_is_reproducible() {
    let data = uniform_with_planted(3);
    let a = fit_isolation_forest(&data, &ab(), 50, 64, 9).unwrap();
    let b = fit_isolation_forest(&data, &ab(), 50, 64, 9).unwrap();
    assert_eq!(a, b);
}
