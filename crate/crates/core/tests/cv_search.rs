use mixforge_core::synthetic::{generate, SyntheticSpec};
use mixforge_core::tune::{kfold_indices, random_search, write_trial_log, SearchSpace};
use proptest::prelude::*;

fn n_and_k() -> impl Strategy<Value = (usize, usize)> {
    (2usize..600).prop_flat_map(|n| (Just(n), 2usize..=n.min(40)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn fold_partition_invariants((n, k) in n_and_k(), seed in any::<u64>()) {
        let folds = kfold_indices(n, k, seed).unwrap();
        prop_assert_eq!(folds.len(), k);
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        let (lo, hi) = (*sizes.iter().min().unwrap(), *sizes.iter().max().unwrap());
        prop_assert!(hi - lo <= 1);
        prop_assert_eq!(sizes.iter().filter(|&&s| s == n / k + 1).count(), if n % k == 0 { 0 } else { n % k });
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        prop_assert_eq!(kfold_indices(n, k, seed).unwrap(), folds);
    }
}

#[test]
fn fold_size_examples() {
    let sizes = |n, k| -> Vec<usize> {
        kfold_indices(n, k, 1)
            .unwrap()
            .iter()
            .map(Vec::len)
            .collect()
    };
    assert_eq!(sizes(100, 10), vec![10; 10]);
    let s = sizes(103, 10);
    assert_eq!(s.iter().filter(|&&x| x == 11).count(), 3);
    assert_eq!(s.iter().filter(|&&x| x == 10).count(), 7);
    assert!(kfold_indices(5, 6, 1).is_err());
    assert!(kfold_indices(5, 1, 1).is_err());
}

fn small_space() -> SearchSpace {
    SearchSpace {
        n_rounds: 30,
        ..SearchSpace::default()
    }
}

#[test]
fn identical_seeds_give_byte_identical_logs() {
    let s = generate(&SyntheticSpec {
        n_rows: 200,
        ..SyntheticSpec::default()
    })
    .unwrap();
    let features = s.data.schema().input_names();
    let log = |seed| {
        let out =
            random_search(&small_space(), 6, &s.data, &features, "Porosity", 4, seed).unwrap();
        let mut bytes = Vec::new();
        write_trial_log(&out.trials, &mut bytes).unwrap();
        (out, bytes)
    };
    let (a, bytes_a) = log(11);
    let (b, bytes_b) = log(11);
    assert_eq!(bytes_a, bytes_b);
    assert_eq!(a.best, b.best);
    let (_, bytes_c) = log(12);
    assert_ne!(bytes_a, bytes_c);

    let best = a.best.mean_rmse.unwrap();
    for t in &a.trials {
        let m = t.mean_rmse.unwrap();
        assert!(best <= m);
        assert_eq!(t.fold_rmse.len(), 4);
        let mean = t.fold_rmse.iter().sum::<f64>() / 4.0;
        assert!((mean - m).abs() <= 1e-12);
    }
}

#[test]
fn extending_the_budget_never_worsens_the_best() {
    let s = generate(&SyntheticSpec {
        n_rows: 150,
        ..SyntheticSpec::default()
    })
    .unwrap();
    let features = s.data.schema().input_names();
    let short = random_search(&small_space(), 3, &s.data, &features, "Slump flow", 3, 5).unwrap();
    let long = random_search(&small_space(), 6, &s.data, &features, "Slump flow", 3, 5).unwrap();
    assert_eq!(&long.trials[..3], &short.trials[..]);
    assert!(long.best.mean_rmse.unwrap() <= short.best.mean_rmse.unwrap());
}
