//! Dense tensors, pairwise contraction, and magnitude-rescaled arithmetic.
//!
//! Everything downstream (feature maps, the operator chain, gradients) is
//! built from one primitive: the binary contraction of two dense tensors
//! over matched axis pairs. Chains of hundreds of contractions over- or
//! underflow f64 long before they finish, so values are carried as a
//! [`ScaledTensor`] — a mantissa tensor with max-abs entry 1 plus an
//! accumulated natural-log scale factor.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("data length {data_len} does not match shape {shape:?} (expected {expected})")]
    LengthMismatch {
        shape: Vec<usize>,
        data_len: usize,
        expected: usize,
    },
    #[error("axis {axis} out of bounds for rank-{rank} tensor")]
    AxisOutOfBounds { axis: usize, rank: usize },
    #[error("contracted axis pair ({axis_a}, {axis_b}) has mismatched sizes {dim_a} vs {dim_b}")]
    AxisSizeMismatch {
        axis_a: usize,
        axis_b: usize,
        dim_a: usize,
        dim_b: usize,
    },
    #[error("axis {axis} appears more than once in the contraction pairing")]
    DuplicateAxis { axis: usize },
    #[error("invalid permutation {perm:?} for rank-{rank} tensor")]
    InvalidPermutation { perm: Vec<usize>, rank: usize },
    #[error("shapes {lhs:?} and {rhs:?} do not match")]
    ShapeMismatch { lhs: Vec<usize>, rhs: Vec<usize> },
    #[error("operation produced a non-finite entry")]
    NonFinite,
}

/// Multiply-add accounting for contractions, kept per thread.
///
/// The cost of one pairwise contraction is the product of the sizes of all
/// distinct axes touched by the two operands, the same number read off a
/// tensor-network diagram as the product of the dimensions of all connected
/// legs without double-counting.
pub mod cost {
    use std::cell::Cell;

    thread_local! {
        static MACS: Cell<u64> = const { Cell::new(0) };
    }

    /// Reset this thread's multiply-add counter to zero.
    pub fn reset() {
        MACS.with(|c| c.set(0));
    }

    /// Total multiply-adds recorded on this thread since the last reset.
    pub fn total() -> u64 {
        MACS.with(|c| c.get())
    }

    pub(crate) fn add(n: u64) {
        MACS.with(|c| c.set(c.get().wrapping_add(n)));
    }
}

/// A dense real tensor in row-major order. Scalars are rank 0.
#[derive(Clone, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl fmt::Debug for DenseTensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DenseTensor{:?}", self.shape)?;
        if self.data.len() <= 8 {
            write!(f, " {:?}", self.data)
        } else {
            write!(f, " [{} entries]", self.data.len())
        }
    }
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, TensorError> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(TensorError::LengthMismatch {
                shape,
                data_len: data.len(),
                expected,
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    /// Rank-0 tensor holding a single value.
    pub fn scalar(value: f64) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let len: usize = shape.iter().product();
        let mut data = Vec::with_capacity(len);
        let mut idx = vec![0usize; shape.len()];
        for _ in 0..len {
            data.push(f(&idx));
            for ax in (0..shape.len()).rev() {
                idx[ax] += 1;
                if idx[ax] < shape[ax] {
                    break;
                }
                idx[ax] = 0;
            }
        }
        Self {
            shape: shape.to_vec(),
            data,
        }
    }

    /// Identity matrix of size `n`.
    pub fn identity(n: usize) -> Self {
        Self::from_fn(&[n, n], |idx| if idx[0] == idx[1] { 1.0 } else { 0.0 })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        debug_assert_eq!(idx.len(), self.rank());
        let mut off = 0;
        for (ax, &i) in idx.iter().enumerate() {
            debug_assert!(i < self.shape[ax]);
            off = off * self.shape[ax] + i;
        }
        self.data[off]
    }

    /// The single entry of a one-element tensor, if it is one.
    pub fn as_scalar(&self) -> Option<f64> {
        if self.data.len() == 1 {
            Some(self.data[0])
        } else {
            None
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
    }

    pub fn is_all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn scaled_by(&self, factor: f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    /// Reinterpret the same row-major data under a new shape.
    pub fn reshape(&self, shape: &[usize]) -> Result<Self, TensorError> {
        let expected: usize = shape.iter().product();
        if expected != self.data.len() {
            return Err(TensorError::LengthMismatch {
                shape: shape.to_vec(),
                data_len: self.data.len(),
                expected,
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: self.data.clone(),
        })
    }

    /// Reorder axes: axis `i` of the result is axis `perm[i]` of `self`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self, TensorError> {
        let rank = self.rank();
        let invalid = || TensorError::InvalidPermutation {
            perm: perm.to_vec(),
            rank,
        };
        if perm.len() != rank {
            return Err(invalid());
        }
        let mut seen = vec![false; rank];
        for &p in perm {
            if p >= rank || seen[p] {
                return Err(invalid());
            }
            seen[p] = true;
        }
        if perm.iter().enumerate().all(|(i, &p)| i == p) {
            return Ok(self.clone());
        }

        let in_strides = row_major_strides(&self.shape);
        let out_shape: Vec<usize> = perm.iter().map(|&p| self.shape[p]).collect();
        // stride contributed by each output axis when walking the input buffer
        let contrib: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();

        let len = self.data.len();
        let mut out = Vec::with_capacity(len);
        let mut idx = vec![0usize; rank];
        let mut off = 0usize;
        for _ in 0..len {
            out.push(self.data[off]);
            for ax in (0..rank).rev() {
                idx[ax] += 1;
                off += contrib[ax];
                if idx[ax] < out_shape[ax] {
                    break;
                }
                idx[ax] = 0;
                off -= out_shape[ax] * contrib[ax];
            }
        }
        Ok(Self {
            shape: out_shape,
            data: out,
        })
    }
}

fn row_major_strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1usize; shape.len()];
    for ax in (0..shape.len().saturating_sub(1)).rev() {
        strides[ax] = strides[ax + 1] * shape[ax + 1];
    }
    strides
}

/// Validated description of a pairwise contraction, shared by the forward
/// kernel and the adjoint rules.
pub(crate) struct ContractionPlan {
    pub free_a: Vec<usize>,
    pub free_b: Vec<usize>,
    pub out_shape: Vec<usize>,
    pub m: usize,
    pub k: usize,
    pub n: usize,
    pub perm_a: Vec<usize>,
    pub perm_b: Vec<usize>,
}

pub(crate) fn plan_contraction(
    shape_a: &[usize],
    shape_b: &[usize],
    pairs: &[(usize, usize)],
) -> Result<ContractionPlan, TensorError> {
    let rank_a = shape_a.len();
    let rank_b = shape_b.len();
    let mut paired_a = vec![false; rank_a];
    let mut paired_b = vec![false; rank_b];
    for &(pa, pb) in pairs {
        if pa >= rank_a {
            return Err(TensorError::AxisOutOfBounds {
                axis: pa,
                rank: rank_a,
            });
        }
        if pb >= rank_b {
            return Err(TensorError::AxisOutOfBounds {
                axis: pb,
                rank: rank_b,
            });
        }
        if paired_a[pa] {
            return Err(TensorError::DuplicateAxis { axis: pa });
        }
        if paired_b[pb] {
            return Err(TensorError::DuplicateAxis { axis: pb });
        }
        if shape_a[pa] != shape_b[pb] {
            return Err(TensorError::AxisSizeMismatch {
                axis_a: pa,
                axis_b: pb,
                dim_a: shape_a[pa],
                dim_b: shape_b[pb],
            });
        }
        paired_a[pa] = true;
        paired_b[pb] = true;
    }

    let free_a: Vec<usize> = (0..rank_a).filter(|&ax| !paired_a[ax]).collect();
    let free_b: Vec<usize> = (0..rank_b).filter(|&ax| !paired_b[ax]).collect();

    let mut perm_a = free_a.clone();
    perm_a.extend(pairs.iter().map(|&(pa, _)| pa));
    let mut perm_b: Vec<usize> = pairs.iter().map(|&(_, pb)| pb).collect();
    perm_b.extend(free_b.iter().copied());

    let m: usize = free_a.iter().map(|&ax| shape_a[ax]).product();
    let k: usize = pairs.iter().map(|&(pa, _)| shape_a[pa]).product();
    let n: usize = free_b.iter().map(|&ax| shape_b[ax]).product();

    let mut out_shape: Vec<usize> = free_a.iter().map(|&ax| shape_a[ax]).collect();
    out_shape.extend(free_b.iter().map(|&ax| shape_b[ax]));

    Ok(ContractionPlan {
        free_a,
        free_b,
        out_shape,
        m,
        k,
        n,
        perm_a,
        perm_b,
    })
}

/// Contract `a` and `b` over the given `(axis of a, axis of b)` pairs.
///
/// The result carries the unpaired axes of `a` (in order) followed by the
/// unpaired axes of `b`. Internally the operands are permuted so the
/// contraction becomes a single matrix multiply.
pub fn contract(
    a: &DenseTensor,
    b: &DenseTensor,
    pairs: &[(usize, usize)],
) -> Result<DenseTensor, TensorError> {
    let plan = plan_contraction(a.shape(), b.shape(), pairs)?;
    let at = a.permute(&plan.perm_a)?;
    let bt = b.permute(&plan.perm_b)?;

    let (m, k, n) = (plan.m, plan.k, plan.n);
    let mut out = vec![0.0f64; m * n];
    let lhs = at.data();
    let rhs = bt.data();
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for kk in 0..k {
            let aik = lhs[i * k + kk];
            let brow = &rhs[kk * n..(kk + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += aik * bv;
            }
        }
    }
    cost::add((m * k * n) as u64);

    let result = DenseTensor {
        shape: plan.out_shape,
        data: out,
    };
    if !result.is_all_finite() {
        return Err(TensorError::NonFinite);
    }
    Ok(result)
}

/// A tensor stored as `mantissa * exp(log_scale)`.
///
/// After renormalization the mantissa's largest-magnitude entry is exactly 1,
/// unless the tensor vanishes entirely, in which case `is_zero` is set and
/// `log_scale` is 0. The zero case is a flag rather than `log_scale = -inf`
/// so that no non-finite value leaks into downstream arithmetic.
#[derive(Debug, Clone)]
pub struct ScaledTensor {
    mantissa: DenseTensor,
    log_scale: f64,
    zero: bool,
}

impl ScaledTensor {
    /// Wrap a dense tensor, renormalizing so the represented value is unchanged.
    pub fn from_dense(t: DenseTensor) -> Self {
        Self::with_log_scale(t, 0.0)
    }

    /// Build from a mantissa and an explicit log factor, then renormalize.
    pub fn with_log_scale(mantissa: DenseTensor, log_scale: f64) -> Self {
        let max = mantissa.max_abs();
        if max == 0.0 {
            return Self {
                mantissa,
                log_scale: 0.0,
                zero: true,
            };
        }
        if max == 1.0 {
            return Self {
                mantissa,
                log_scale,
                zero: false,
            };
        }
        let inv = 1.0 / max;
        Self {
            mantissa: mantissa.scaled_by(inv),
            log_scale: log_scale + max.ln(),
            zero: false,
        }
    }

    pub fn mantissa(&self) -> &DenseTensor {
        &self.mantissa
    }

    pub fn log_scale(&self) -> f64 {
        self.log_scale
    }

    pub fn is_zero(&self) -> bool {
        self.zero
    }

    pub fn shape(&self) -> &[usize] {
        self.mantissa.shape()
    }

    /// Reconstruct the represented dense value. May overflow for extreme
    /// log scales; intended for small tensors and test oracles.
    pub fn to_dense(&self) -> DenseTensor {
        if self.zero {
            DenseTensor::zeros(self.mantissa.shape())
        } else {
            self.mantissa.scaled_by(self.log_scale.exp())
        }
    }
}

/// Re-establish the mantissa normalization. The represented value is
/// unchanged in exact arithmetic.
pub fn renormalize(t: &ScaledTensor) -> ScaledTensor {
    ScaledTensor::with_log_scale(t.mantissa.clone(), t.log_scale)
}

/// Contraction in the scaled representation: mantissas contract, log scales
/// add, and the result is renormalized.
pub fn scaled_contract(
    a: &ScaledTensor,
    b: &ScaledTensor,
    pairs: &[(usize, usize)],
) -> Result<ScaledTensor, TensorError> {
    let mantissa = contract(&a.mantissa, &b.mantissa, pairs)?;
    Ok(ScaledTensor::with_log_scale(
        mantissa,
        a.log_scale + b.log_scale,
    ))
}

/// Elementwise sum of two scaled tensors of identical shape.
pub fn scaled_add(a: &ScaledTensor, b: &ScaledTensor) -> Result<ScaledTensor, TensorError> {
    if a.shape() != b.shape() {
        return Err(TensorError::ShapeMismatch {
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    if a.zero {
        return Ok(b.clone());
    }
    if b.zero {
        return Ok(a.clone());
    }
    // Align both terms on the larger scale so the rescaling factors are <= 1.
    let ls = a.log_scale.max(b.log_scale);
    let wa = (a.log_scale - ls).exp();
    let wb = (b.log_scale - ls).exp();
    let data: Vec<f64> = a
        .mantissa
        .data()
        .iter()
        .zip(b.mantissa.data())
        .map(|(&x, &y)| x * wa + y * wb)
        .collect();
    let mantissa = DenseTensor {
        shape: a.shape().to_vec(),
        data,
    };
    if !mantissa.is_all_finite() {
        return Err(TensorError::NonFinite);
    }
    Ok(ScaledTensor::with_log_scale(mantissa, ls))
}
