//! Batch loss, reverse-mode gradients, and the two-phase training loop.
//!
//! The per-batch objective is
//!
//! ```text
//! mean_i (d_i - 1)^2  +  alpha * relu(f)
//! ```
//!
//! where `d_i` is the log decision value of sample `i` and `f` the log
//! squared Frobenius norm of the operator. The data term pulls training
//! samples onto a hypersphere of radius `sqrt(e)` in the output space; the
//! rectified penalty pushes the operator's total mass down without letting
//! the all-zero operator become a solution.
//!
//! Gradients come from recording each network evaluation on a [`Tape`] and
//! sweeping it backwards. The seed adjoint of a log output is `w / value`,
//! carried in scaled form as mantissa `w / m` with log scale `-s` for a
//! network value `m * exp(s)` — the log's derivative exactly cancels the
//! accumulated scale, which is what keeps the backward pass inside f64
//! range no matter how extreme the network value was.
//!
//! Training runs a fixed-rate cold phase followed by a main phase with
//! per-epoch exponential learning-rate decay. Samples are reshuffled every
//! epoch from a dedicated seed substream and the final partial batch is
//! included. Per-sample passes within a batch may run in parallel; their
//! adjoints are reduced in sample-index order so results are bitwise
//! reproducible regardless of thread count.

use rayon::prelude::*;
use thiserror::Error;

use crate::embedding::{EmbeddingError, EmbeddingSpec, ProductState};
use crate::mpo::{schedule, MpoError, MpoModel, MpoShape};
use crate::optim::{adam_step, AdamParams, OptimError, OptimizerState};
use crate::rng::{retry_seed, substream, Stream};
use crate::tape::Tape;
use crate::tensor::{DenseTensor, ScaledTensor, TensorError};

/// Log value substituted for a vanished decision during training. The
/// affected sample contributes no gradient and is counted as a warning.
pub const CLAMPED_DECISION_LOG: f64 = -30.0;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("batch is empty")]
    EmptyBatch,
    #[error("training set is empty")]
    EmptyDataset,
    #[error("sample {index} has {got} features, model expects {expected}")]
    FeatureCount {
        index: usize,
        got: usize,
        expected: usize,
    },
    #[error("embedding dimension {embedding} does not match model physical dimension {model}")]
    EmbeddingDimMismatch { embedding: usize, model: usize },
    #[error("decision value vanished for batch sample {index}")]
    ZeroNormSample { index: usize },
    #[error("non-finite {what}")]
    NonFinite { what: &'static str },
    #[error("non-finite {what} at epoch {epoch}, step {step}; training aborted")]
    NanAbort {
        what: String,
        epoch: usize,
        step: usize,
    },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Mpo(#[from] MpoError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

/// All training hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Weight of the rectified F-norm penalty.
    pub alpha: f64,
    pub batch_size: usize,
    /// Epochs at the fixed cold-start rate.
    pub cold_epochs: usize,
    pub cold_lr: f64,
    /// Epochs in the main phase.
    pub main_epochs: usize,
    /// Initial main-phase rate; epoch `e` of the phase uses
    /// `main_lr * exp(-decay_rate * e)`.
    pub main_lr: f64,
    pub decay_rate: f64,
    pub init_stddev: f64,
    pub seed: u64,
    pub adam: AdamParams,
    /// Retries with a derived seed after a non-finite abort (0 = none).
    pub max_nan_retries: u32,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 0.4,
            batch_size: 32,
            cold_epochs: 20,
            cold_lr: 2e-5,
            main_epochs: 280,
            main_lr: 2e-3,
            decay_rate: 0.01,
            init_stddev: 0.5,
            seed: 0,
            adam: AdamParams::default(),
            max_nan_retries: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let ok = self.alpha >= 0.0
            && self.batch_size > 0
            && self.cold_lr > 0.0
            && self.main_lr > 0.0
            && self.decay_rate >= 0.0
            && self.init_stddev > 0.0;
        if ok {
            Ok(())
        } else {
            Err(TrainError::NonFinite {
                what: "training configuration (negative or zero hyperparameter)",
            })
        }
    }

    pub fn total_epochs(&self) -> usize {
        self.cold_epochs + self.main_epochs
    }

    fn lr_at(&self, epoch: usize) -> f64 {
        if epoch < self.cold_epochs {
            self.cold_lr
        } else {
            let main_epoch = (epoch - self.cold_epochs) as f64;
            self.main_lr * (-self.decay_rate * main_epoch).exp()
        }
    }
}

/// One epoch of the training history.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub mean_decision_log: f64,
    pub fnorm_log: f64,
    pub lr: f64,
    pub clamped_samples: usize,
}

/// History line format consumed by the run logs:
/// `epoch <n> loss <v> mean_dlog <v> fnorm_log <v> lr <v>`.
pub fn format_history_line(stats: &EpochStats) -> String {
    format!(
        "epoch {} loss {:.12e} mean_dlog {:.12e} fnorm_log {:.12e} lr {:.12e}",
        stats.epoch, stats.mean_loss, stats.mean_decision_log, stats.fnorm_log, stats.lr
    )
}

/// The scalar loss recomputed from already-known log values; shared by the
/// loss, its gradient, and tests that check them compositionally.
pub fn loss_from_parts(decision_logs: &[f64], fnorm_log: f64, alpha: f64) -> f64 {
    let data: f64 = decision_logs
        .iter()
        .map(|d| (d - 1.0) * (d - 1.0))
        .sum::<f64>()
        / decision_logs.len() as f64;
    data + alpha * fnorm_log.max(0.0)
}

#[derive(Clone, Copy, PartialEq)]
enum SentinelPolicy {
    /// Vanished decisions are an error naming the sample.
    Error,
    /// Vanished decisions are clamped to [`CLAMPED_DECISION_LOG`] and drop
    /// out of the gradient.
    Clamp,
}

/// Loss and per-sample decision logs for one batch.
pub fn batch_loss(
    model: &MpoModel,
    batch: &[ProductState],
    alpha: f64,
) -> Result<(f64, Vec<f64>), TrainError> {
    if batch.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let mut decision_logs = Vec::with_capacity(batch.len());
    for (index, state) in batch.iter().enumerate() {
        let d = model.decision_log(state)?;
        if d.is_zero() {
            return Err(TrainError::ZeroNormSample { index });
        }
        decision_logs.push(d.log());
    }
    let fnorm = model.fnorm_log()?;
    let loss = loss_from_parts(&decision_logs, fnorm.log(), alpha);
    Ok((loss, decision_logs))
}

/// Loss, per-sample decision logs, F-norm log, and the adjoint of the loss
/// with respect to every core entry.
#[derive(Debug, Clone)]
pub struct BatchGradient {
    pub loss: f64,
    pub decision_logs: Vec<f64>,
    pub fnorm_log: f64,
    pub grads: Vec<DenseTensor>,
    pub clamped_samples: usize,
}

/// Reverse-mode gradient of the batch loss. Vanished decisions are an
/// error here; the training loop uses the clamped variant internally.
pub fn loss_gradient(
    model: &MpoModel,
    batch: &[ProductState],
    alpha: f64,
) -> Result<BatchGradient, TrainError> {
    batch_gradient(model, batch, alpha, SentinelPolicy::Error)
}

/// Decision log and per-core loss adjoints for a single sample.
fn sample_backward(
    model: &MpoModel,
    state: &ProductState,
    batch_size: usize,
    policy: SentinelPolicy,
    index: usize,
) -> Result<(f64, bool, Option<Vec<ScaledTensor>>), TrainError> {
    let mut tape = Tape::new();
    let cores = model.record_cores(&mut tape, true);
    let factors = schedule::record_factors(&mut tape, state);
    let out = schedule::decision_value(&mut tape, &cores, &factors, model.shape())?;
    let value = tape.value(out).clone();
    let log = crate::mpo::log_norm_of(&value);

    if log.is_zero() {
        return match policy {
            SentinelPolicy::Error => Err(TrainError::ZeroNormSample { index }),
            SentinelPolicy::Clamp => Ok((CLAMPED_DECISION_LOG, true, None)),
        };
    }

    let d = log.log();
    // d(loss)/d(d_i) through the mean of squared deviations
    let weight = 2.0 * (d - 1.0) / batch_size as f64;
    if weight == 0.0 {
        return Ok((d, false, None));
    }
    let mantissa = value.mantissa().as_scalar().expect("scalar network value");
    let seed_mantissa = DenseTensor::new(vec![1, 1], vec![weight / mantissa])
        .expect("seed shape");
    let seed = ScaledTensor::with_log_scale(seed_mantissa, -value.log_scale());
    let adjoints = tape.backward(&[(out, seed)])?;

    let grads = cores
        .iter()
        .map(|id| {
            adjoints[id.index()].clone().unwrap_or_else(|| {
                ScaledTensor::from_dense(DenseTensor::zeros(
                    tape.value(*id).shape(),
                ))
            })
        })
        .collect();
    Ok((d, false, Some(grads)))
}

fn batch_gradient(
    model: &MpoModel,
    batch: &[ProductState],
    alpha: f64,
    policy: SentinelPolicy,
) -> Result<BatchGradient, TrainError> {
    if batch.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let batch_size = batch.len();

    let per_sample: Vec<(f64, bool, Option<Vec<ScaledTensor>>)> = batch
        .par_iter()
        .enumerate()
        .map(|(index, state)| sample_backward(model, state, batch_size, policy, index))
        .collect::<Result<_, _>>()?;

    // Accumulate adjoints in sample-index order for reproducibility.
    let mut acc: Vec<Option<ScaledTensor>> = vec![None; model.cores().len()];
    let mut decision_logs = Vec::with_capacity(batch_size);
    let mut clamped_samples = 0usize;
    for (d, clamped, grads) in per_sample {
        decision_logs.push(d);
        clamped_samples += clamped as usize;
        if let Some(grads) = grads {
            for (slot, g) in acc.iter_mut().zip(grads) {
                *slot = Some(match slot.take() {
                    Some(existing) => crate::tensor::scaled_add(&existing, &g)?,
                    None => g,
                });
            }
        }
    }

    // Rectified penalty: backpropagates only while log ||P||_F^2 > 0.
    let mut fnorm_tape = Tape::new();
    let fnorm_cores = model.record_cores(&mut fnorm_tape, true);
    let fnorm_out = schedule::fnorm_value(&mut fnorm_tape, &fnorm_cores, model.shape())?;
    let fnorm_value = fnorm_tape.value(fnorm_out).clone();
    let fnorm = crate::mpo::log_norm_of(&fnorm_value);
    if alpha > 0.0 && !fnorm.is_zero() && fnorm.log() > 0.0 {
        let mantissa = fnorm_value.mantissa().as_scalar().expect("scalar value");
        let seed_mantissa =
            DenseTensor::new(vec![1, 1], vec![alpha / mantissa]).expect("seed shape");
        let seed = ScaledTensor::with_log_scale(seed_mantissa, -fnorm_value.log_scale());
        let adjoints = fnorm_tape.backward(&[(fnorm_out, seed)])?;
        for (slot, id) in acc.iter_mut().zip(&fnorm_cores) {
            if let Some(adj) = &adjoints[id.index()] {
                *slot = Some(match slot.take() {
                    Some(existing) => crate::tensor::scaled_add(&existing, adj)?,
                    None => adj.clone(),
                });
            }
        }
    }

    let grads: Vec<DenseTensor> = acc
        .into_iter()
        .zip(model.cores())
        .map(|(slot, core)| match slot {
            Some(s) => s.to_dense(),
            None => DenseTensor::zeros(core.shape()),
        })
        .collect();
    if grads.iter().any(|g| !g.is_all_finite()) {
        return Err(TrainError::NonFinite { what: "gradient" });
    }

    let loss = loss_from_parts(&decision_logs, fnorm.log(), alpha);
    if !loss.is_finite() {
        return Err(TrainError::NonFinite { what: "loss" });
    }
    Ok(BatchGradient {
        loss,
        decision_logs,
        fnorm_log: fnorm.log(),
        grads,
        clamped_samples,
    })
}

/// A finished training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: MpoModel,
    pub history: Vec<EpochStats>,
    /// Extra attempts consumed by NaN retries (0 = first attempt trained).
    pub retries: u32,
}

/// Train a fresh model on raw feature rows, retrying with a derived seed if
/// a run aborts on non-finite values and retries are configured.
pub fn train(
    features: &[Vec<f64>],
    shape: MpoShape,
    embedding: &EmbeddingSpec,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    let mut last_err = None;
    for attempt in 0..=cfg.max_nan_retries {
        let seed = retry_seed(cfg.seed, attempt);
        match train_single(features, shape, embedding, cfg, seed) {
            Ok((model, history)) => {
                return Ok(TrainOutcome {
                    model,
                    history,
                    retries: attempt,
                })
            }
            Err(e @ TrainError::NanAbort { .. }) => last_err = Some(e),
            Err(other) => return Err(other),
        }
    }
    Err(last_err.expect("at least one attempt runs"))
}

/// One training attempt with an explicit seed. Deterministic: the same
/// inputs produce a bitwise-identical model.
pub fn train_single(
    features: &[Vec<f64>],
    shape: MpoShape,
    embedding: &EmbeddingSpec,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(MpoModel, Vec<EpochStats>), TrainError> {
    cfg.validate()?;
    if features.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if embedding.physical_dim() != shape.physical_dim() {
        return Err(TrainError::EmbeddingDimMismatch {
            embedding: embedding.physical_dim(),
            model: shape.physical_dim(),
        });
    }
    for (index, row) in features.iter().enumerate() {
        if row.len() != shape.num_sites() {
            return Err(TrainError::FeatureCount {
                index,
                got: row.len(),
                expected: shape.num_sites(),
            });
        }
    }

    let mut model = MpoModel::random(shape, cfg.init_stddev, seed);
    let mut opt = OptimizerState::new(&model);
    let mut shuffle_rng = substream(seed, Stream::Shuffle);
    let mut order: Vec<usize> = (0..features.len()).collect();
    let mut history = Vec::with_capacity(cfg.total_epochs());

    for epoch in 0..cfg.total_epochs() {
        let lr = cfg.lr_at(epoch);
        use rand::seq::SliceRandom;
        order.shuffle(&mut shuffle_rng);

        let mut loss_sum = 0.0;
        let mut dlog_sum = 0.0;
        let mut clamped = 0usize;
        let mut steps = 0usize;
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<ProductState> = chunk
                .iter()
                .map(|&i| embedding.embed_sample(&features[i]))
                .collect::<Result<_, _>>()?;
            let grad = batch_gradient(&model, &batch, cfg.alpha, SentinelPolicy::Clamp)
                .map_err(|e| nan_abort(e, epoch, step))?;
            adam_step(&mut model, &grad.grads, &mut opt, lr, &cfg.adam)?;
            if let Some(site) = model.cores().iter().position(|c| !c.is_all_finite()) {
                return Err(TrainError::NanAbort {
                    what: format!("core {site} after optimizer update"),
                    epoch,
                    step,
                });
            }
            loss_sum += grad.loss;
            dlog_sum += grad.decision_logs.iter().sum::<f64>();
            clamped += grad.clamped_samples;
            steps += 1;
        }

        let fnorm_log = model.fnorm_log()?.log();
        history.push(EpochStats {
            epoch,
            mean_loss: loss_sum / steps.max(1) as f64,
            mean_decision_log: dlog_sum / features.len() as f64,
            fnorm_log,
            lr,
            clamped_samples: clamped,
        });
    }
    Ok((model, history))
}

fn nan_abort(e: TrainError, epoch: usize, step: usize) -> TrainError {
    match e {
        TrainError::NonFinite { what } => TrainError::NanAbort {
            what: what.to_string(),
            epoch,
            step,
        },
        TrainError::Tensor(TensorError::NonFinite) => TrainError::NanAbort {
            what: "contraction result".to_string(),
            epoch,
            step,
        },
        other => other,
    }
}
