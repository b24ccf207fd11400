//! One-class anomaly detection with matrix product operators.
//!
//! Samples are embedded feature-by-feature as product states in a
//! `p^N`-dimensional tensor-product space and scored by the log squared norm
//! of their image under a learned matrix product operator; a Frobenius-norm
//! penalty on the operator bounds the model's overall tendency to call
//! things normal. The crate provides the tensor arithmetic (with magnitude
//! rescaling so long contraction chains stay representable), the feature
//! maps, the operator model and its contraction schedules, tape-based
//! reverse-mode gradients with Adam training, the AUROC evaluation
//! protocols, and dataset ingestion.

pub mod data;
pub mod embedding;
pub mod eval;
pub mod mpo;
pub mod optim;
pub mod rng;
pub mod tape;
pub mod tensor;
pub mod train;

pub use embedding::{EmbeddingKind, EmbeddingSpec, ProductState};
pub use mpo::{LogNorm, MpoModel, MpoShape};
pub use tensor::{DenseTensor, ScaledTensor};
