//! End-to-end protocol checks on small data: the experiment wiring rather
//! than the numerics (which the acceptance suite covers at full scale).

use mpo_anomaly::data::{read_tabular_csv, ImageDataset};
use mpo_anomaly::embedding::EmbeddingSpec;
use mpo_anomaly::eval::{run_odds, run_one_class_image, ExperimentSetup, FeatureScaling};
use mpo_anomaly::train::TrainConfig;

fn data_path(rel: &str) -> String {
    format!("{}/../../data/{rel}", env!("CARGO_MANIFEST_DIR"))
}

/// All-zero inlier images against all-bright outliers embed as orthogonal
/// product states, so a small trained model must separate them perfectly.
#[test]
fn separable_toy_images_reach_auroc_one() {
    let dark = vec![0u8; 8 * 8];
    let bright = vec![255u8; 8 * 8];

    let train_images: Vec<Vec<u8>> = vec![dark.clone(); 24];
    let train_labels = vec![1u8; 24];
    let train_set = ImageDataset::new(train_images, 8, 8, train_labels).unwrap();

    let mut test_images = Vec::new();
    let mut test_labels = Vec::new();
    for _ in 0..10 {
        test_images.push(dark.clone());
        test_labels.push(1u8);
        test_images.push(bright.clone());
        test_labels.push(7u8);
    }
    let test_set = ImageDataset::new(test_images, 8, 8, test_labels).unwrap();

    let setup = ExperimentSetup {
        embedding: EmbeddingSpec::trigonometric(2).unwrap(),
        bond_dim: 2,
        spacing: 1,
        scaling: FeatureScaling::Standardize,
        train: TrainConfig {
            alpha: 0.5,
            batch_size: 8,
            cold_epochs: 2,
            cold_lr: 1e-4,
            main_epochs: 60,
            main_lr: 2e-3,
            decay_rate: 0.0,
            init_stddev: 0.2,
            seed: 0,
            ..TrainConfig::default()
        },
    };
    let run = run_one_class_image(&train_set, &test_set, 1, &setup, 3).unwrap();
    assert_eq!(run.n_train, 24);
    assert_eq!(run.n_test, 20);
    assert_eq!(run.auroc, 1.0, "toy set must separate perfectly");
}

#[test]
fn scoring_is_label_blind() {
    // permuting the test set permutes the scores identically
    let imgs: Vec<Vec<u8>> = (0..6)
        .map(|i| (0..64).map(|px| ((i * 37 + px * 11) % 256) as u8).collect())
        .collect();
    let train_set = ImageDataset::new(vec![vec![0u8; 64]; 8], 8, 8, vec![1u8; 8]).unwrap();
    let test_a = ImageDataset::new(imgs.clone(), 8, 8, vec![1, 7, 1, 7, 1, 7]).unwrap();
    let permuted: Vec<Vec<u8>> = vec![
        imgs[5].clone(),
        imgs[3].clone(),
        imgs[1].clone(),
        imgs[0].clone(),
        imgs[2].clone(),
        imgs[4].clone(),
    ];
    let test_b = ImageDataset::new(permuted, 8, 8, vec![7, 7, 7, 1, 1, 1]).unwrap();

    let setup = ExperimentSetup {
        embedding: EmbeddingSpec::trigonometric(2).unwrap(),
        bond_dim: 2,
        spacing: 2,
        scaling: FeatureScaling::Standardize,
        train: TrainConfig {
            cold_epochs: 1,
            main_epochs: 3,
            batch_size: 4,
            init_stddev: 0.3,
            ..TrainConfig::default()
        },
    };
    let run_a = run_one_class_image(&train_set, &test_a, 1, &setup, 5).unwrap();
    let run_b = run_one_class_image(&train_set, &test_b, 1, &setup, 5).unwrap();
    let scores_a = run_a.scored.scores();
    let scores_b = run_b.scored.scores();
    for (i, j) in [(5usize, 0usize), (3, 1), (1, 2), (0, 3), (2, 4), (4, 5)] {
        assert_eq!(scores_a[i], scores_b[j]);
    }
}

/// The half-split bookkeeping on the real benchmark files: training takes
/// floor(normals/2), the held-out half plus every anomaly is scored.
#[test]
fn odds_split_sizes_match_the_protocol() {
    let quick = TrainConfig {
        cold_epochs: 1,
        main_epochs: 1,
        init_stddev: 0.05,
        ..TrainConfig::default()
    };

    let wine = read_tabular_csv(data_path("odds/wine.csv")).unwrap();
    let setup = ExperimentSetup {
        embedding: EmbeddingSpec::trigonometric(4).unwrap(),
        bond_dim: 2,
        spacing: 1,
        scaling: FeatureScaling::Standardize,
        train: quick.clone(),
    };
    let run = run_odds(&wine, &setup, 1).unwrap();
    assert_eq!(run.n_train, 59);
    assert_eq!(run.n_test, 60 + 10);

    let thyroid = read_tabular_csv(data_path("odds/thyroid.csv")).unwrap();
    let setup = ExperimentSetup {
        embedding: EmbeddingSpec::trigonometric(2).unwrap(),
        bond_dim: 2,
        spacing: 1,
        scaling: FeatureScaling::Standardize,
        train: quick,
    };
    let run = run_odds(&thyroid, &setup, 1).unwrap();
    assert_eq!(run.n_train, 1839);
    assert_eq!(run.n_test, 1840 + 93);
}
