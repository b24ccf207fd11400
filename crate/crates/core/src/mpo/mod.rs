//! The learned operator: a chain of core tensors forming a matrix product
//! operator with an output leg every `spacing` sites.
//!
//! The operator maps the `p^N`-dimensional embedding space to a
//! `p^q`-dimensional output space, `q = floor((N-1)/S) + 1`, with output
//! legs at sites `0, S, 2S, ...`. Despite the exponential spaces, both
//! quantities the detector needs — the squared norm of a projected sample
//! and the squared Frobenius norm of the whole operator — contract in time
//! linear in `N` (see [`schedule`] for the orders used). All network
//! arithmetic runs in the rescaled representation, so chains of hundreds of
//! sites stay inside f64 range and only the log of the result is ever
//! formed.

mod io;
pub mod schedule;

pub use io::{load_model, read_model_header, save_model, ModelHeader, ModelIoError};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::embedding::ProductState;
use crate::rng::{substream, Stream};
use crate::tape::{NodeId, Tape};
use crate::tensor::{DenseTensor, ScaledTensor, TensorError};

#[derive(Debug, Error)]
pub enum MpoError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("state has {got} sites, model expects {expected}")]
    SiteCountMismatch { got: usize, expected: usize },
    #[error("state physical dimension is {got}, model expects {expected}")]
    PhysicalDimMismatch { got: usize, expected: usize },
    #[error("core {site} has shape {got:?}, expected {expected:?}")]
    CoreShapeMismatch {
        site: usize,
        got: Vec<usize>,
        expected: Vec<usize>,
    },
    #[error("core {site} contains non-finite entries")]
    NonFiniteCore { site: usize },
    #[error("dense materialization refused: p^N = {dim} exceeds the guard of {max}")]
    TooLargeToMaterialize { dim: u128, max: u128 },
}

/// Site count, physical dimension, bond dimension, and output spacing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MpoShape {
    num_sites: usize,
    physical_dim: usize,
    bond_dim: usize,
    spacing: usize,
}

impl MpoShape {
    pub fn new(
        num_sites: usize,
        physical_dim: usize,
        bond_dim: usize,
        spacing: usize,
    ) -> Result<Self, MpoError> {
        if num_sites == 0 {
            return Err(MpoError::InvalidShape("need at least one site".into()));
        }
        if physical_dim == 0 || bond_dim == 0 || spacing == 0 {
            return Err(MpoError::InvalidShape(format!(
                "physical_dim {physical_dim}, bond_dim {bond_dim}, spacing {spacing} must all be positive"
            )));
        }
        Ok(Self {
            num_sites,
            physical_dim,
            bond_dim,
            spacing,
        })
    }

    pub fn num_sites(&self) -> usize {
        self.num_sites
    }

    pub fn physical_dim(&self) -> usize {
        self.physical_dim
    }

    pub fn bond_dim(&self) -> usize {
        self.bond_dim
    }

    pub fn spacing(&self) -> usize {
        self.spacing
    }

    /// Number of output legs: `floor((N-1)/S) + 1`.
    pub fn num_outputs(&self) -> usize {
        (self.num_sites - 1) / self.spacing + 1
    }

    /// Output legs sit at sites `0, S, 2S, ...` (0-indexed).
    pub fn is_output_site(&self, site: usize) -> bool {
        site.is_multiple_of(self.spacing)
    }

    /// Natural log of the output-space dimension `p^q`.
    pub fn output_dim_ln(&self) -> f64 {
        self.num_outputs() as f64 * (self.physical_dim as f64).ln()
    }

    fn left_bond(&self, site: usize) -> usize {
        if site == 0 {
            1
        } else {
            self.bond_dim
        }
    }

    fn right_bond(&self, site: usize) -> usize {
        if site == self.num_sites - 1 {
            1
        } else {
            self.bond_dim
        }
    }

    /// Axis sizes of the core at `site`, ordered
    /// (left bond, right bond, input leg[, output leg]).
    pub fn core_shape(&self, site: usize) -> Vec<usize> {
        let mut shape = vec![
            self.left_bond(site),
            self.right_bond(site),
            self.physical_dim,
        ];
        if self.is_output_site(site) {
            shape.push(self.physical_dim);
        }
        shape
    }

    pub fn num_parameters(&self) -> usize {
        (0..self.num_sites)
            .map(|i| self.core_shape(i).iter().product::<usize>())
            .sum()
    }
}

/// Log of a non-negative network value, with an explicit flag for an exactly
/// vanished network instead of a NaN or a silent `-inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogNorm {
    log: f64,
    is_zero: bool,
}

impl LogNorm {
    pub(crate) fn finite(log: f64) -> Self {
        Self {
            log,
            is_zero: false,
        }
    }

    pub(crate) fn zero() -> Self {
        Self {
            log: f64::NEG_INFINITY,
            is_zero: true,
        }
    }

    /// The log value; negative infinity when the network vanished.
    pub fn log(&self) -> f64 {
        self.log
    }

    pub fn is_zero(&self) -> bool {
        self.is_zero
    }
}

pub(crate) fn log_norm_of(value: &ScaledTensor) -> LogNorm {
    let m = value
        .mantissa()
        .as_scalar()
        .expect("network result must have exactly one entry");
    if value.is_zero() || m <= 0.0 {
        LogNorm::zero()
    } else {
        LogNorm::finite(m.ln() + value.log_scale())
    }
}

/// The operator as a chain of dense cores conforming to an [`MpoShape`].
#[derive(Debug, Clone, PartialEq)]
pub struct MpoModel {
    shape: MpoShape,
    cores: Vec<DenseTensor>,
}

impl MpoModel {
    /// Draw every core entry i.i.d. from a centered normal with the given
    /// standard deviation. The same seed always produces the same model.
    pub fn random(shape: MpoShape, stddev: f64, seed: u64) -> Self {
        assert!(stddev > 0.0, "initialization stddev must be positive");
        let mut rng = substream(seed, Stream::ModelInit);
        Self::random_with(shape, stddev, &mut rng)
    }

    pub fn random_with(shape: MpoShape, stddev: f64, rng: &mut impl Rng) -> Self {
        let normal = Normal::new(0.0, stddev).expect("valid stddev");
        let cores = (0..shape.num_sites())
            .map(|site| {
                let core_shape = shape.core_shape(site);
                DenseTensor::from_fn(&core_shape, |_| normal.sample(rng))
            })
            .collect();
        Self { shape, cores }
    }

    /// Wrap explicit cores, validating conformance and finiteness.
    pub fn from_cores(shape: MpoShape, cores: Vec<DenseTensor>) -> Result<Self, MpoError> {
        if cores.len() != shape.num_sites() {
            return Err(MpoError::InvalidShape(format!(
                "{} cores for {} sites",
                cores.len(),
                shape.num_sites()
            )));
        }
        for (site, core) in cores.iter().enumerate() {
            let expected = shape.core_shape(site);
            if core.shape() != expected.as_slice() {
                return Err(MpoError::CoreShapeMismatch {
                    site,
                    got: core.shape().to_vec(),
                    expected,
                });
            }
            if !core.is_all_finite() {
                return Err(MpoError::NonFiniteCore { site });
            }
        }
        Ok(Self { shape, cores })
    }

    pub fn shape(&self) -> &MpoShape {
        &self.shape
    }

    pub fn cores(&self) -> &[DenseTensor] {
        &self.cores
    }

    pub fn core(&self, site: usize) -> &DenseTensor {
        &self.cores[site]
    }

    pub fn cores_mut(&mut self) -> &mut [DenseTensor] {
        &mut self.cores
    }

    fn check_state(&self, state: &ProductState) -> Result<(), MpoError> {
        if state.num_sites() != self.shape.num_sites() {
            return Err(MpoError::SiteCountMismatch {
                got: state.num_sites(),
                expected: self.shape.num_sites(),
            });
        }
        if state.physical_dim() != self.shape.physical_dim() {
            return Err(MpoError::PhysicalDimMismatch {
                got: state.physical_dim(),
                expected: self.shape.physical_dim(),
            });
        }
        Ok(())
    }

    /// Record all cores as tape leaves.
    pub(crate) fn record_cores(&self, tape: &mut Tape, wants_grad: bool) -> Vec<NodeId> {
        self.cores
            .iter()
            .map(|c| tape.leaf(ScaledTensor::from_dense(c.clone()), wants_grad))
            .collect()
    }

    /// `log ||P phi(x)||^2`: the log-scale decision value for one embedded
    /// sample, evaluated with the segmented right-to-left schedule and a
    /// final duplicate-and-attach sweep.
    pub fn decision_log(&self, state: &ProductState) -> Result<LogNorm, MpoError> {
        self.check_state(state)?;
        let mut tape = Tape::new();
        let cores = self.record_cores(&mut tape, false);
        let factors = schedule::record_factors(&mut tape, state);
        let out = schedule::decision_value(&mut tape, &cores, &factors, &self.shape)?;
        Ok(log_norm_of(tape.value(out)))
    }

    /// Same value as [`Self::decision_log`] computed with a left-to-right
    /// sweep and opposite association. The result is schedule-invariant;
    /// only the cost differs. Kept as a cross-check.
    pub fn decision_log_ltr(&self, state: &ProductState) -> Result<LogNorm, MpoError> {
        self.check_state(state)?;
        let mut tape = Tape::new();
        let cores = self.record_cores(&mut tape, false);
        let factors = schedule::record_factors(&mut tape, state);
        let out = schedule::decision_value_ltr(&mut tape, &cores, &factors, &self.shape)?;
        Ok(log_norm_of(tape.value(out)))
    }

    /// `log ||P||_F^2`: log of the sum of squared entries of the full
    /// operator, contracted through the doubled network.
    pub fn fnorm_log(&self) -> Result<LogNorm, MpoError> {
        let mut tape = Tape::new();
        let cores = self.record_cores(&mut tape, false);
        let out = schedule::fnorm_value(&mut tape, &cores, &self.shape)?;
        Ok(log_norm_of(tape.value(out)))
    }

    /// Materialize the full `p^q x p^N` matrix. Guarded; this is a test
    /// oracle, never part of scoring or training.
    pub fn materialize_dense(&self) -> Result<DenseTensor, MpoError> {
        const MAX_INPUT_DIM: u128 = 1 << 20;
        let p = self.shape.physical_dim() as u128;
        let n = self.shape.num_sites() as u32;
        let input_dim = p
            .checked_pow(n)
            .ok_or(MpoError::TooLargeToMaterialize {
                dim: u128::MAX,
                max: MAX_INPUT_DIM,
            })?;
        if input_dim > MAX_INPUT_DIM {
            return Err(MpoError::TooLargeToMaterialize {
                dim: input_dim,
                max: MAX_INPUT_DIM,
            });
        }

        // Accumulate left to right keeping every open leg, with axes
        // (left boundary, site legs..., right bond). Site legs appear as
        // input[, output] per site.
        let mut acc = {
            let core = &self.cores[0];
            if self.shape.is_output_site(0) {
                core.permute(&[0, 2, 3, 1])? // (l, in, out, r)
            } else {
                core.permute(&[0, 2, 1])? // (l, in, r)
            }
        };
        for site in 1..self.shape.num_sites() {
            let last = acc.rank() - 1;
            let merged = crate::tensor::contract(&acc, &self.cores[site], &[(last, 0)])?;
            // merged: (l, legs..., r_site, in[, out]); rotate r_site to the end
            let rank = merged.rank();
            let mut perm: Vec<usize> = (0..rank).collect();
            let r_pos = rank - if self.shape.is_output_site(site) { 3 } else { 2 };
            perm.remove(r_pos);
            perm.push(r_pos);
            acc = merged.permute(&perm)?;
        }

        // Drop the size-1 boundary axes, then gather outputs before inputs.
        let leg_shape: Vec<usize> = acc.shape()[1..acc.rank() - 1].to_vec();
        let squeezed = acc.reshape(&leg_shape)?;

        let mut in_positions = Vec::new();
        let mut out_positions = Vec::new();
        let mut pos = 0;
        for site in 0..self.shape.num_sites() {
            in_positions.push(pos);
            pos += 1;
            if self.shape.is_output_site(site) {
                out_positions.push(pos);
                pos += 1;
            }
        }
        let mut perm = out_positions;
        perm.extend(in_positions);
        let ordered = squeezed.permute(&perm)?;

        let q = self.shape.num_outputs() as u32;
        let rows = self.shape.physical_dim().pow(q);
        let cols = self.shape.physical_dim().pow(n);
        Ok(ordered.reshape(&[rows, cols])?)
    }
}

#[cfg(test)]
mod tests;
