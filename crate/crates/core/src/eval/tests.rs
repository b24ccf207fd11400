use super::*;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn set(scores: Vec<f64>, labels: Vec<Label>) -> ScoredSet {
    ScoredSet::new(scores, labels).unwrap()
}

/// O(n^2) pair-counting oracle: fraction of (normal, anomalous) pairs where
/// the normal sample wins, ties counting half.
fn auroc_pair_counting(set: &ScoredSet) -> f64 {
    let mut wins = 0.0f64;
    let mut pairs = 0.0f64;
    for (i, (&si, &li)) in set.scores().iter().zip(set.labels()).enumerate() {
        if li != Label::Normal {
            continue;
        }
        let _ = i;
        for (&sj, &lj) in set.scores().iter().zip(set.labels()) {
            if lj != Label::Anomalous {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                wins += 1.0;
            } else if si == sj {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

#[test]
fn perfect_separation_scores_one() {
    let s = set(
        vec![1.0, 2.0, 3.0, 4.0],
        vec![
            Label::Anomalous,
            Label::Anomalous,
            Label::Normal,
            Label::Normal,
        ],
    );
    assert_eq!(auroc(&s).unwrap(), 1.0);
}

#[test]
fn all_ties_score_half() {
    let s = set(
        vec![0.5; 6],
        vec![
            Label::Normal,
            Label::Anomalous,
            Label::Normal,
            Label::Anomalous,
            Label::Normal,
            Label::Anomalous,
        ],
    );
    assert_eq!(auroc(&s).unwrap(), 0.5);
}

#[test]
fn rank_formula_matches_pair_counting_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..50 {
        let n = rng.random_range(5..200);
        let scores: Vec<f64> = (0..n)
            .map(|_| {
                // quantized so ties actually occur
                (rng.random_range(-10.0f64..10.0) * 4.0).round() / 4.0
            })
            .collect();
        let labels: Vec<Label> = (0..n)
            .map(|_| {
                if rng.random_bool(0.6) {
                    Label::Normal
                } else {
                    Label::Anomalous
                }
            })
            .collect();
        let has_both = labels.contains(&Label::Normal)
            && labels.contains(&Label::Anomalous);
        if !has_both {
            continue;
        }
        let s = set(scores, labels);
        let fast = auroc(&s).unwrap();
        let slow = auroc_pair_counting(&s);
        assert!((fast - slow).abs() <= 1e-12, "{fast} vs {slow}");
    }
}

#[test]
fn auroc_is_invariant_under_monotone_transforms() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let scores: Vec<f64> = (0..80).map(|_| rng.random_range(-5.0..5.0)).collect();
    let labels: Vec<Label> = (0..80)
        .map(|i| {
            if i % 3 == 0 {
                Label::Anomalous
            } else {
                Label::Normal
            }
        })
        .collect();
    let base = auroc(&set(scores.clone(), labels.clone())).unwrap();
    let exp = auroc(&set(
        scores.iter().map(|s| s.exp()).collect(),
        labels.clone(),
    ))
    .unwrap();
    let affine = auroc(&set(
        scores.iter().map(|s| 3.0 * s + 11.0).collect(),
        labels,
    ))
    .unwrap();
    assert!((base - exp).abs() < 1e-12);
    assert!((base - affine).abs() < 1e-12);
}

#[test]
fn negating_tie_free_scores_complements_auroc() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let scores: Vec<f64> = (0..60).map(|_| rng.random::<f64>()).collect();
    let labels: Vec<Label> = (0..60)
        .map(|i| {
            if i < 20 {
                Label::Anomalous
            } else {
                Label::Normal
            }
        })
        .collect();
    let a = auroc(&set(scores.clone(), labels.clone())).unwrap();
    let b = auroc(&set(scores.iter().map(|s| -s).collect(), labels)).unwrap();
    assert!((a + b - 1.0).abs() < 1e-12);
}

#[test]
fn single_class_inputs_are_an_error() {
    let s = set(vec![1.0, 2.0], vec![Label::Normal, Label::Normal]);
    assert!(matches!(auroc(&s), Err(EvalError::SingleClass)));
}

#[test]
fn negative_infinity_scores_rank_below_everything() {
    let s = set(
        vec![f64::NEG_INFINITY, -3.0, 0.0],
        vec![Label::Anomalous, Label::Normal, Label::Normal],
    );
    assert_eq!(auroc(&s).unwrap(), 1.0);
}

#[test]
fn roc_points_start_at_origin_and_end_at_one_one() {
    let s = set(
        vec![0.1, 0.9, 0.5, 0.7],
        vec![
            Label::Anomalous,
            Label::Normal,
            Label::Anomalous,
            Label::Normal,
        ],
    );
    let pts = roc_points(&s);
    assert_eq!(pts.first(), Some(&(0.0, 0.0)));
    assert_eq!(pts.last(), Some(&(1.0, 1.0)));
    for w in pts.windows(2) {
        assert!(w[1].0 >= w[0].0 && w[1].1 >= w[0].1, "non-monotone ROC");
    }
}

#[test]
fn split_halves_partition_and_give_odd_extra_to_test() {
    let (train, test) = split_normal_halves(59, 7);
    assert_eq!(train.len(), 29);
    assert_eq!(test.len(), 30);
    let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
    all.sort_unstable();
    assert_eq!(all, (0..59).collect::<Vec<_>>());

    // deterministic per seed, different across seeds
    let (train2, _) = split_normal_halves(59, 7);
    assert_eq!(train, train2);
    let (train3, _) = split_normal_halves(59, 8);
    assert_ne!(train, train3);
}

#[test]
fn summarize_single_trial_has_zero_stderr() {
    let s = summarize_trials(vec![(1, 0.9)], vec![]);
    assert_eq!(s.mean, 0.9);
    assert_eq!(s.stderr, 0.0);
}

#[test]
fn summarize_reports_mean_and_stderr() {
    let s = summarize_trials(vec![(1, 0.8), (2, 0.9), (3, 1.0)], vec![(4, "nan".into())]);
    assert!((s.mean - 0.9).abs() < 1e-12);
    // sample std = 0.1, stderr = 0.1 / sqrt(3)
    assert!((s.stderr - 0.1 / 3.0f64.sqrt()).abs() < 1e-12);
    assert_eq!(s.failures.len(), 1);
}
