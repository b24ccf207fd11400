//! Threshold-agnostic evaluation: AUROC over decision scores, and the
//! one-class experiment protocols for image and tabular data.
//!
//! AUROC is computed from the rank statistic with midranks for ties: the
//! probability that a uniformly random normal sample outscores a uniformly
//! random anomalous one, ties counting half. Scores are log decision
//! values; since the log is strictly increasing, ranking them is identical
//! to ranking the raw decision values.

use rayon::prelude::*;
use thiserror::Error;

use crate::data::{ImageDataset, Label, TabularDataset};
use crate::data::{preprocess_image, DataError, MinMaxScaling, Standardization};
use crate::embedding::{EmbeddingError, EmbeddingSpec};
use crate::mpo::{MpoError, MpoModel, MpoShape};
use crate::rng::{substream, Stream};
use crate::train::{train, EpochStats, TrainConfig, TrainError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("scores and labels have different lengths ({scores} vs {labels})")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("AUROC undefined: need at least one normal and one anomalous sample")]
    SingleClass,
    #[error("score {index} is NaN")]
    NanScore { index: usize },
    #[error("need at least 2 normal samples to split, got {0}")]
    TooFewNormals(usize),
    #[error("no training images with inlier class {0}")]
    EmptyInlierSet(u8),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Mpo(#[from] MpoError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Scores paired with ground-truth labels for one evaluation run.
#[derive(Debug, Clone)]
pub struct ScoredSet {
    scores: Vec<f64>,
    labels: Vec<Label>,
}

impl ScoredSet {
    pub fn new(scores: Vec<f64>, labels: Vec<Label>) -> Result<Self, EvalError> {
        if scores.len() != labels.len() {
            return Err(EvalError::LengthMismatch {
                scores: scores.len(),
                labels: labels.len(),
            });
        }
        Ok(Self { scores, labels })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }
}

/// Area under the ROC curve via the Mann-Whitney rank statistic with
/// midranks. Normal samples are the positive class: 1.0 means every normal
/// sample outscored every anomaly.
pub fn auroc(set: &ScoredSet) -> Result<f64, EvalError> {
    let n = set.len();
    let normals = set.labels.iter().filter(|l| **l == Label::Normal).count();
    let anomalies = n - normals;
    if normals == 0 || anomalies == 0 {
        return Err(EvalError::SingleClass);
    }
    if let Some(index) = set.scores.iter().position(|s| s.is_nan()) {
        return Err(EvalError::NanScore { index });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        set.scores[a]
            .partial_cmp(&set.scores[b])
            .expect("NaN scores were rejected")
    });

    // midranks over tied runs
    let mut rank_sum_normal = 0.0f64;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && set.scores[order[j + 1]] == set.scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            if set.labels[idx] == Label::Normal {
                rank_sum_normal += midrank;
            }
        }
        i = j + 1;
    }

    let n_pos = normals as f64;
    let n_neg = anomalies as f64;
    Ok((rank_sum_normal - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg))
}

/// ROC curve vertices as `(false positive rate, true positive rate)`,
/// sweeping the threshold from high to low. Ties move diagonally.
pub fn roc_points(set: &ScoredSet) -> Vec<(f64, f64)> {
    let n = set.len();
    let normals = set.labels.iter().filter(|l| **l == Label::Normal).count() as f64;
    let anomalies = n as f64 - normals;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        set.scores[b]
            .partial_cmp(&set.scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let mut points = vec![(0.0, 0.0)];
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && set.scores[order[j + 1]] == set.scores[order[i]] {
            j += 1;
        }
        for &idx in &order[i..=j] {
            match set.labels[idx] {
                Label::Normal => tp += 1,
                Label::Anomalous => fp += 1,
            }
        }
        points.push((fp as f64 / anomalies.max(1.0), tp as f64 / normals.max(1.0)));
        i = j + 1;
    }
    points
}

/// How tabular features are rescaled before embedding, always fitted on the
/// training split only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeatureScaling {
    /// Zero mean, unit variance per feature.
    #[default]
    Standardize,
    /// Training range mapped onto `[0, 1]` per feature. Pairs with the
    /// fourier embedding, whose basis grid lives on the unit interval.
    MinMax,
}

/// Model topology and training settings for one experiment, independent of
/// the dataset's feature count.
#[derive(Debug, Clone)]
pub struct ExperimentSetup {
    pub embedding: EmbeddingSpec,
    pub bond_dim: usize,
    pub spacing: usize,
    pub scaling: FeatureScaling,
    pub train: TrainConfig,
}

impl ExperimentSetup {
    fn shape_for(&self, num_features: usize) -> Result<MpoShape, MpoError> {
        MpoShape::new(
            num_features,
            self.embedding.physical_dim(),
            self.bond_dim,
            self.spacing,
        )
    }
}

/// Outcome of a single protocol run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub auroc: f64,
    pub scored: ScoredSet,
    pub model: MpoModel,
    pub n_train: usize,
    pub n_test: usize,
    pub retries: u32,
    pub history: Vec<EpochStats>,
}

/// Decision logs for a batch of raw feature rows; vanished decisions score
/// negative infinity. Order-preserving and parallel across rows.
pub fn score_rows(
    model: &MpoModel,
    embedding: &EmbeddingSpec,
    rows: &[Vec<f64>],
) -> Result<Vec<f64>, EvalError> {
    rows.par_iter()
        .map(|row| {
            let state = embedding.embed_sample(row)?;
            Ok(model.decision_log(&state)?.log())
        })
        .collect()
}

/// Split `num_normals` indices into a training half and a held-out half
/// with a seeded shuffle. Odd counts give the extra sample to the test
/// side.
pub fn split_normal_halves(
    num_normals: usize,
    seed: u64,
) -> (Vec<usize>, Vec<usize>) {
    use rand::seq::SliceRandom;
    let mut positions: Vec<usize> = (0..num_normals).collect();
    let mut rng = substream(seed, Stream::Split);
    positions.shuffle(&mut rng);
    let train_len = num_normals / 2;
    let train = positions[..train_len].to_vec();
    let test = positions[train_len..].to_vec();
    (train, test)
}

/// Half-split protocol for tabular data: train on half of the normal
/// instances, score the other half plus all anomalies. Features are
/// standardized with statistics fitted on the training half only.
pub fn run_odds(
    data: &TabularDataset,
    setup: &ExperimentSetup,
    seed: u64,
) -> Result<RunResult, EvalError> {
    let normals = data.normal_indices();
    if normals.len() < 2 {
        return Err(EvalError::TooFewNormals(normals.len()));
    }
    let (train_pos, test_pos) = split_normal_halves(normals.len(), seed);
    let train_idx: Vec<usize> = train_pos.iter().map(|&p| normals[p]).collect();
    let mut test_idx: Vec<usize> = test_pos.iter().map(|&p| normals[p]).collect();
    let anomalies = data.anomalous_indices();
    test_idx.extend(&anomalies);

    type RowTransform = Box<dyn Fn(&[f64]) -> Vec<f64> + Sync>;
    let transform: RowTransform = match setup.scaling {
        FeatureScaling::Standardize => {
            let stats = Standardization::fit(data, &train_idx);
            Box::new(move |row| stats.apply_row(row))
        }
        FeatureScaling::MinMax => {
            let scale = MinMaxScaling::fit(data, &train_idx);
            Box::new(move |row| scale.apply_row(row))
        }
    };
    let train_rows: Vec<Vec<f64>> = train_idx.iter().map(|&i| transform(data.row(i))).collect();
    let test_rows: Vec<Vec<f64>> = test_idx.iter().map(|&i| transform(data.row(i))).collect();

    let shape = setup.shape_for(data.num_features())?;
    let mut cfg = setup.train.clone();
    cfg.seed = seed;
    let outcome = train(&train_rows, shape, &setup.embedding, &cfg)?;

    let scores = score_rows(&outcome.model, &setup.embedding, &test_rows)?;
    let labels: Vec<Label> = test_idx.iter().map(|&i| data.label(i)).collect();
    let scored = ScoredSet::new(scores, labels)?;
    let auc = auroc(&scored)?;
    Ok(RunResult {
        auroc: auc,
        scored,
        model: outcome.model,
        n_train: train_idx.len(),
        n_test: test_idx.len(),
        retries: outcome.retries,
        history: outcome.history,
    })
}

/// One-class image protocol: train on every training image of the inlier
/// class, score the untouched test set, and label test samples normal
/// exactly when their class matches.
pub fn run_one_class_image(
    train_set: &ImageDataset,
    test_set: &ImageDataset,
    inlier_class: u8,
    setup: &ExperimentSetup,
    seed: u64,
) -> Result<RunResult, EvalError> {
    let train_rows: Vec<Vec<f64>> = (0..train_set.len())
        .filter(|&i| train_set.label(i) == inlier_class)
        .map(|i| preprocess_image(train_set.image(i), train_set.height(), train_set.width()))
        .collect::<Result<_, _>>()?;
    if train_rows.is_empty() {
        return Err(EvalError::EmptyInlierSet(inlier_class));
    }

    let test_rows: Vec<Vec<f64>> = (0..test_set.len())
        .map(|i| preprocess_image(test_set.image(i), test_set.height(), test_set.width()))
        .collect::<Result<_, _>>()?;
    let labels: Vec<Label> = (0..test_set.len())
        .map(|i| {
            if test_set.label(i) == inlier_class {
                Label::Normal
            } else {
                Label::Anomalous
            }
        })
        .collect();

    let shape = setup.shape_for(train_rows[0].len())?;
    let mut cfg = setup.train.clone();
    cfg.seed = seed;
    let outcome = train(&train_rows, shape, &setup.embedding, &cfg)?;

    let scores = score_rows(&outcome.model, &setup.embedding, &test_rows)?;
    let n_train = train_rows.len();
    let n_test = test_rows.len();
    let scored = ScoredSet::new(scores, labels)?;
    let auc = auroc(&scored)?;
    Ok(RunResult {
        auroc: auc,
        scored,
        model: outcome.model,
        n_train,
        n_test,
        retries: outcome.retries,
        history: outcome.history,
    })
}

/// Mean and standard error over per-seed AUROCs, with failed trials kept
/// separately.
#[derive(Debug, Clone)]
pub struct TrialSummary {
    pub mean: f64,
    pub stderr: f64,
    pub results: Vec<(u64, f64)>,
    pub failures: Vec<(u64, String)>,
}

pub fn summarize_trials(results: Vec<(u64, f64)>, failures: Vec<(u64, String)>) -> TrialSummary {
    let n = results.len();
    let mean = if n == 0 {
        f64::NAN
    } else {
        results.iter().map(|(_, a)| a).sum::<f64>() / n as f64
    };
    let stderr = if n <= 1 {
        0.0
    } else {
        let var = results
            .iter()
            .map(|(_, a)| (a - mean) * (a - mean))
            .sum::<f64>()
            / (n - 1) as f64;
        (var / n as f64).sqrt()
    };
    TrialSummary {
        mean,
        stderr,
        results,
        failures,
    }
}

#[cfg(test)]
mod tests;
