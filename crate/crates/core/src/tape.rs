//! Reverse-mode differentiation of contraction graphs.
//!
//! The forward pass records every pairwise contraction on a [`Tape`]; the
//! backward pass walks the records in reverse and accumulates an adjoint for
//! each node. Values and adjoints are both carried in the scaled
//! representation of [`crate::tensor::ScaledTensor`], so the same graphs
//! that need magnitude rescaling to evaluate also differentiate without
//! overflow: a rescaling step only moves a factor between the mantissa and
//! the log scale, and the represented value — which is what the adjoint
//! rules below act on — is unchanged by it.
//!
//! For `C = contract(A, B, pairs)` the adjoints are themselves single
//! contractions of the output adjoint with the opposite operand, followed by
//! an axis permutation back into the operand's layout. A node used by
//! several consumers receives the sum of their contributions, which is what
//! makes duplicated subnetworks (a chain contracted against itself) come out
//! right without any special handling.

use crate::tensor::{
    plan_contraction, scaled_add, scaled_contract, ScaledTensor, TensorError,
};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

impl NodeId {
    /// Position of this node in the tape's creation order; indexes the
    /// adjoint vector returned by [`Tape::backward`].
    pub fn index(&self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Contract {
        lhs: NodeId,
        rhs: NodeId,
        pairs: Vec<(usize, usize)>,
    },
    Permute {
        src: NodeId,
        perm: Vec<usize>,
    },
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: ScaledTensor,
    needs_grad: bool,
}

/// A recorded forward pass: one entry per leaf or contraction step, in
/// execution order. Creation order is a topological order of the graph,
/// which is what the backward sweep relies on.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Register an input tensor. `wants_grad` marks trainable leaves;
    /// constants (embedded factors) leave it unset.
    pub fn leaf(&mut self, value: ScaledTensor, wants_grad: bool) -> NodeId {
        self.push(Node {
            op: Op::Leaf,
            value,
            needs_grad: wants_grad,
        })
    }

    /// Record a contraction of two existing nodes.
    pub fn contract(
        &mut self,
        lhs: NodeId,
        rhs: NodeId,
        pairs: &[(usize, usize)],
    ) -> Result<NodeId, TensorError> {
        let value = scaled_contract(self.value(lhs), self.value(rhs), pairs)?;
        let needs_grad = self.nodes[lhs.0].needs_grad || self.nodes[rhs.0].needs_grad;
        Ok(self.push(Node {
            op: Op::Contract {
                lhs,
                rhs,
                pairs: pairs.to_vec(),
            },
            value,
            needs_grad,
        }))
    }

    /// Record an axis reordering of an existing node.
    pub fn permute(&mut self, src: NodeId, perm: &[usize]) -> Result<NodeId, TensorError> {
        let value = permute_scaled(self.value(src), perm)?;
        let needs_grad = self.nodes[src.0].needs_grad;
        Ok(self.push(Node {
            op: Op::Permute {
                src,
                perm: perm.to_vec(),
            },
            value,
            needs_grad,
        }))
    }

    pub fn value(&self, id: NodeId) -> &ScaledTensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, node: Node) -> NodeId {
        self.nodes.push(node);
        NodeId(self.nodes.len() - 1)
    }

    /// Re-execute every recorded step from the leaves. Returns the recomputed
    /// value per node; used to check that the tape reproduces the forward
    /// pass exactly.
    pub fn replay(&self) -> Result<Vec<ScaledTensor>, TensorError> {
        let mut values: Vec<ScaledTensor> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = match &node.op {
                Op::Leaf => node.value.clone(),
                Op::Contract { lhs, rhs, pairs } => {
                    scaled_contract(&values[lhs.0], &values[rhs.0], pairs)?
                }
                Op::Permute { src, perm } => permute_scaled(&values[src.0], perm)?,
            };
            values.push(v);
        }
        Ok(values)
    }

    /// Reverse sweep. `seeds` assigns an initial adjoint to one or more
    /// nodes (typically the scalar network outputs); the result holds the
    /// accumulated adjoint for every node that both needs a gradient and is
    /// reachable from a seed.
    pub fn backward(
        &self,
        seeds: &[(NodeId, ScaledTensor)],
    ) -> Result<Vec<Option<ScaledTensor>>, TensorError> {
        let mut adjoints: Vec<Option<ScaledTensor>> = vec![None; self.nodes.len()];
        for (id, seed) in seeds {
            accumulate(&mut adjoints[id.0], seed.clone())?;
        }

        for idx in (0..self.nodes.len()).rev() {
            if !self.nodes[idx].needs_grad {
                adjoints[idx] = None;
                continue;
            }
            let Some(out_adj) = adjoints[idx].clone() else {
                continue;
            };
            match &self.nodes[idx].op {
                Op::Leaf => {}
                Op::Contract { lhs, rhs, pairs } => {
                    let (plan_lhs, plan_rhs) = adjoint_plans(
                        self.value(*lhs).shape(),
                        self.value(*rhs).shape(),
                        pairs,
                    )?;
                    if self.nodes[lhs.0].needs_grad {
                        let contrib =
                            scaled_contract(&out_adj, self.value(*rhs), &plan_lhs.pairs)?;
                        let contrib = permute_scaled(&contrib, &plan_lhs.perm)?;
                        accumulate(&mut adjoints[lhs.0], contrib)?;
                    }
                    if self.nodes[rhs.0].needs_grad {
                        let contrib =
                            scaled_contract(&out_adj, self.value(*lhs), &plan_rhs.pairs)?;
                        let contrib = permute_scaled(&contrib, &plan_rhs.perm)?;
                        accumulate(&mut adjoints[rhs.0], contrib)?;
                    }
                }
                Op::Permute { src, perm } => {
                    let contrib = permute_scaled(&out_adj, &invert_permutation(perm))?;
                    accumulate(&mut adjoints[src.0], contrib)?;
                }
            }
        }
        Ok(adjoints)
    }
}

fn accumulate(
    slot: &mut Option<ScaledTensor>,
    contrib: ScaledTensor,
) -> Result<(), TensorError> {
    *slot = Some(match slot.take() {
        Some(existing) => scaled_add(&existing, &contrib)?,
        None => contrib,
    });
    Ok(())
}

fn permute_scaled(t: &ScaledTensor, perm: &[usize]) -> Result<ScaledTensor, TensorError> {
    Ok(ScaledTensor::with_log_scale(
        t.mantissa().permute(perm)?,
        t.log_scale(),
    ))
}

fn invert_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0usize; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

struct AdjointPlan {
    pairs: Vec<(usize, usize)>,
    perm: Vec<usize>,
}

/// Adjoint recipes for both operands of `contract(a, b, pairs)`.
///
/// With `C` carrying the free axes of `a` then the free axes of `b`, the
/// adjoint of `a` is `contract(C_adj, b)` over the `b` block of `C_adj` and
/// the free axes of `b`; the trailing axes of that result are `b`'s paired
/// axes in ascending order, each standing for its partner axis of `a`.
/// The permutation rearranges them into `a`'s original layout. The adjoint
/// of `b` is symmetric.
fn adjoint_plans(
    shape_a: &[usize],
    shape_b: &[usize],
    pairs: &[(usize, usize)],
) -> Result<(AdjointPlan, AdjointPlan), TensorError> {
    let plan = plan_contraction(shape_a, shape_b, pairs)?;
    let num_free_a = plan.free_a.len();
    let num_free_b = plan.free_b.len();

    // Pair indices sorted by the a-axis and by the b-axis.
    let mut by_a: Vec<usize> = (0..pairs.len()).collect();
    by_a.sort_by_key(|&i| pairs[i].0);
    let mut by_b: Vec<usize> = (0..pairs.len()).collect();
    by_b.sort_by_key(|&i| pairs[i].1);

    // rank_by_b[i] = position of pair i's b-axis among all paired b-axes
    let mut rank_by_b = vec![0usize; pairs.len()];
    for (rank, &i) in by_b.iter().enumerate() {
        rank_by_b[i] = rank;
    }
    let mut rank_by_a = vec![0usize; pairs.len()];
    for (rank, &i) in by_a.iter().enumerate() {
        rank_by_a[i] = rank;
    }

    // Adjoint of a: contract C_adj's b block against b's free axes.
    let pairs_a: Vec<(usize, usize)> = plan
        .free_b
        .iter()
        .enumerate()
        .map(|(t, &axis_b)| (num_free_a + t, axis_b))
        .collect();
    let mut perm_a = vec![0usize; shape_a.len()];
    for (t, &axis_a) in plan.free_a.iter().enumerate() {
        perm_a[axis_a] = t;
    }
    for (i, &(axis_a, _)) in pairs.iter().enumerate() {
        perm_a[axis_a] = num_free_a + rank_by_b[i];
    }

    // Adjoint of b: contract C_adj's a block against a's free axes.
    let pairs_b: Vec<(usize, usize)> = plan
        .free_a
        .iter()
        .enumerate()
        .map(|(t, &axis_a)| (t, axis_a))
        .collect();
    let mut perm_b = vec![0usize; shape_b.len()];
    for (t, &axis_b) in plan.free_b.iter().enumerate() {
        perm_b[axis_b] = t;
    }
    for (i, &(_, axis_b)) in pairs.iter().enumerate() {
        perm_b[axis_b] = num_free_b + rank_by_a[i];
    }

    Ok((
        AdjointPlan {
            pairs: pairs_a,
            perm: perm_a,
        },
        AdjointPlan {
            pairs: pairs_b,
            perm: perm_b,
        },
    ))
}
