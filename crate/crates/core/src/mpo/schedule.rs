//! Contraction orders for the two network quantities.
//!
//! Both evaluations are sequences of pairwise contractions recorded on a
//! [`Tape`], so the same code path serves plain scoring (record, read the
//! final value, drop the tape) and training (record, then run the backward
//! sweep). Axis conventions:
//!
//! * cores: `(left bond, right bond, input[, output])`
//! * reduced site tensors after absorbing a factor: `(left, right[, output])`
//! * per-segment half-chain tensors: `(left, output, right)`
//! * sweep boundary tensors: `(bottom bond, top bond)`
//!
//! The decision value contracts each input leg with its sample factor,
//! multiplies each segment between consecutive output sites right-to-left,
//! and then attaches the resulting half chain to a copy of itself with a
//! right-to-left zig-zag (one contraction against the bottom copy, one
//! against the top, per output site). The squared F-norm skips the factors
//! and zig-zags the raw cores against their duals directly. Per-site costs
//! are `O(b^2 p)` for the reductions, `O(b^3)` for segment products, and
//! `O(b^3 p)` per zig-zag step, so both quantities are linear in the number
//! of sites.

use crate::embedding::ProductState;
use crate::mpo::MpoShape;
use crate::tape::{NodeId, Tape};
use crate::tensor::{DenseTensor, ScaledTensor, TensorError};

/// Record the sample's factors as constant leaves.
pub fn record_factors(tape: &mut Tape, state: &ProductState) -> Vec<NodeId> {
    state
        .factors()
        .iter()
        .map(|f| {
            let t = DenseTensor::new(vec![f.len()], f.clone()).expect("factor length");
            tape.leaf(ScaledTensor::from_dense(t), false)
        })
        .collect()
}

fn boundary(tape: &mut Tape) -> NodeId {
    let one = DenseTensor::new(vec![1, 1], vec![1.0]).expect("unit boundary");
    tape.leaf(ScaledTensor::from_dense(one), false)
}

/// Absorb each factor into its core's input leg (axis 2).
fn reduce_sites(
    tape: &mut Tape,
    cores: &[NodeId],
    factors: &[NodeId],
) -> Result<Vec<NodeId>, TensorError> {
    cores
        .iter()
        .zip(factors)
        .map(|(&core, &factor)| tape.contract(core, factor, &[(2, 0)]))
        .collect()
}

/// Multiply one segment of reduced tensors into a half-chain tensor with
/// axes `(left, output, right)`. `reduced[start]` carries the output leg;
/// the rest are plain bond matrices.
fn segment_tensor(
    tape: &mut Tape,
    reduced: &[NodeId],
    start: usize,
    end: usize,
    right_to_left: bool,
) -> Result<NodeId, TensorError> {
    if start == end {
        // (left, right, output) -> (left, output, right)
        return tape.permute(reduced[start], &[0, 2, 1]);
    }
    let tail = if right_to_left {
        let mut tail = reduced[end];
        for &site_tensor in reduced[start + 1..end].iter().rev() {
            tail = tape.contract(site_tensor, tail, &[(1, 0)])?;
        }
        tail
    } else {
        let mut tail = reduced[start + 1];
        for &site_tensor in &reduced[start + 2..=end] {
            tail = tape.contract(tail, site_tensor, &[(1, 0)])?;
        }
        tail
    };
    // head (left, right, output) x tail (left', right) -> (left, output, right)
    tape.contract(reduced[start], tail, &[(1, 0)])
}

/// Half-chain tensors for all segments.
fn half_chain(
    tape: &mut Tape,
    cores: &[NodeId],
    factors: &[NodeId],
    shape: &MpoShape,
    right_to_left: bool,
) -> Result<Vec<NodeId>, TensorError> {
    let reduced = reduce_sites(tape, cores, factors)?;
    let n = shape.num_sites();
    let s = shape.spacing();
    (0..shape.num_outputs())
        .map(|k| {
            let start = k * s;
            let end = (start + s).min(n) - 1;
            segment_tensor(tape, &reduced, start, end, right_to_left)
        })
        .collect()
}

/// `||P phi(x)||^2` as a tape node: the half chain is built once and
/// contracted against itself right-to-left.
pub fn decision_value(
    tape: &mut Tape,
    cores: &[NodeId],
    factors: &[NodeId],
    shape: &MpoShape,
) -> Result<NodeId, TensorError> {
    let half = half_chain(tape, cores, factors, shape, true)?;
    let mut env = boundary(tape);
    for &h in half.iter().rev() {
        // (left, out, right) x (right_b, right_t) -> (left, out, right_t)
        let step = tape.contract(h, env, &[(2, 0)])?;
        // x (left_t, out, right_t) -> (left_b, left_t)
        env = tape.contract(step, h, &[(1, 1), (2, 2)])?;
    }
    Ok(env)
}

/// Same value with the opposite association and a left-to-right sweep.
pub fn decision_value_ltr(
    tape: &mut Tape,
    cores: &[NodeId],
    factors: &[NodeId],
    shape: &MpoShape,
) -> Result<NodeId, TensorError> {
    let half = half_chain(tape, cores, factors, shape, false)?;
    let mut env = boundary(tape);
    for &h in half.iter() {
        // (left_b, left_t) x (left, out, right) -> (left_t, out, right)
        let step = tape.contract(env, h, &[(0, 0)])?;
        // x (left_t, out, right_t) -> (right_b, right_t)
        env = tape.contract(step, h, &[(0, 0), (1, 1)])?;
    }
    Ok(env)
}

/// `||P||_F^2` as a tape node: each core is zig-zagged against its dual,
/// pairing input legs with input legs and output legs with output legs.
pub fn fnorm_value(
    tape: &mut Tape,
    cores: &[NodeId],
    shape: &MpoShape,
) -> Result<NodeId, TensorError> {
    let mut env = boundary(tape);
    for site in (0..shape.num_sites()).rev() {
        let core = cores[site];
        if shape.is_output_site(site) {
            // (l, r, in, out) x (r_b, r_t) -> (l, in, out, r_t)
            let step = tape.contract(core, env, &[(1, 0)])?;
            // x (l_t, r_t, in, out) -> (l_b, l_t)
            env = tape.contract(step, core, &[(1, 2), (2, 3), (3, 1)])?;
        } else {
            // (l, r, in) x (r_b, r_t) -> (l, in, r_t)
            let step = tape.contract(core, env, &[(1, 0)])?;
            // x (l_t, r_t, in) -> (l_b, l_t)
            env = tape.contract(step, core, &[(1, 2), (2, 1)])?;
        }
    }
    Ok(env)
}
