//! Per-step operation/column selection, pivot computation and the
//! history RNN.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::encoder::QuestionEncoding;
use crate::model::ModelParams;
use crate::numerics::{argmax, softmax_slice, BoundParams, Matrix, NodeId, Tape};
use crate::ops::OpKind;

/// The ordered operation list; the row order of the operation embedding
/// matrix `U` is fixed by this ordering across save/load.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperationSet {
    ops: Vec<OpKind>,
}

impl OperationSet {
    /// Nine base operations, plus text match when text columns exist.
    pub fn new(text_match: bool) -> Self {
        let mut ops = vec![
            OpKind::Sum,
            OpKind::Count,
            OpKind::Difference,
            OpKind::Greater,
            OpKind::Lesser,
            OpKind::And,
            OpKind::Or,
            OpKind::Assign,
            OpKind::Reset,
        ];
        if text_match {
            ops.push(OpKind::TextMatch);
        }
        OperationSet { ops }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn ops(&self) -> &[OpKind] {
        &self.ops
    }

    pub fn op(&self, idx: usize) -> OpKind {
        self.ops[idx]
    }

    pub fn index(&self, op: OpKind) -> Option<usize> {
        self.ops.iter().position(|o| *o == op)
    }
}

/// Replace a distribution by a one-hot at its argmax (lowest index wins
/// ties).
pub fn hardmax(dist: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; dist.len()];
    out[argmax(dist)] = 1.0;
    out
}

/// Selector input `[q; h]` (plus the attention context when enabled).
fn selector_input(
    tape: &mut Tape,
    q: NodeId,
    h: NodeId,
    context: Option<NodeId>,
) -> Result<NodeId> {
    let qh = tape.concat_rows(q, h)?;
    match context {
        Some(c) => tape.concat_rows(qh, c),
        None => Ok(qh),
    }
}

/// Soft operation and column distributions at one step.
pub fn select(
    tape: &mut Tape,
    bound: &BoundParams,
    mp: &ModelParams,
    q: NodeId,
    h: NodeId,
    context: Option<NodeId>,
    p: NodeId,
) -> Result<(NodeId, NodeId)> {
    let input = selector_input(tape, q, h, context)?;
    let u = bound.node(mp.u);

    let op_hidden = tape.matmul(bound.node(mp.w_op), input)?;
    let op_hidden = tape.tanh_ew(op_hidden);
    let op_logits = tape.matmul(u, op_hidden)?;
    let alpha_op = tape.softmax(op_logits)?;

    let col_hidden = tape.matmul(bound.node(mp.w_col), input)?;
    let col_hidden = tape.tanh_ew(col_hidden);
    let col_logits = tape.matmul(p, col_hidden)?;
    let alpha_col = tape.softmax(col_logits)?;

    Ok((alpha_op, alpha_col))
}

/// A pivot for one comparison operation.
#[derive(Clone, Debug)]
pub struct Pivot {
    pub node: NodeId,
    pub value: f64,
    /// Attention over the question numbers (empty when there are none).
    pub beta: Vec<f64>,
}

/// Pivots for greater and lesser.
#[derive(Clone, Debug)]
pub struct Pivots {
    pub greater: Pivot,
    pub lesser: Pivot,
}

/// How selections are resolved during a run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SelectionMode {
    /// Differentiable softmax selections (training).
    Soft,
    /// Every softmax replaced by a one-hot at its argmax (inference).
    Hard,
}

/// Compute both pivots by attending over the question numbers with the
/// comparison operations' embeddings. Questions without numbers get the
/// default pivot of -1.
pub fn compute_pivots(
    tape: &mut Tape,
    bound: &BoundParams,
    mp: &ModelParams,
    enc: &QuestionEncoding,
    opset: &OperationSet,
    mode: SelectionMode,
) -> Result<Pivots> {
    let z = enc.number_state_matrix(tape)?;
    let one = |tape: &mut Tape, op: OpKind| -> Result<Pivot> {
        let Some(z) = z else {
            return Ok(Pivot {
                node: tape.scalar_leaf(-1.0),
                value: -1.0,
                beta: Vec::new(),
            });
        };
        let idx = opset
            .index(op)
            .ok_or_else(|| Error::InvalidConfig(format!("{op} missing from operation set")))?;
        let u_op = tape.row_as_col(bound.node(mp.u), idx);
        let logits = tape.matmul(z, u_op)?;
        match mode {
            SelectionMode::Soft => {
                let beta = tape.softmax(logits)?;
                let node = tape.dot_const(beta, &enc.numbers)?;
                Ok(Pivot {
                    node,
                    value: tape.scalar(node),
                    beta: tape.value(beta).data().to_vec(),
                })
            }
            SelectionMode::Hard => {
                let beta = hardmax(&softmax_slice(tape.value(logits).data()));
                let value = enc.numbers[argmax(&beta)];
                Ok(Pivot {
                    node: tape.scalar_leaf(value),
                    value,
                    beta,
                })
            }
        }
    };
    Ok(Pivots {
        greater: one(tape, OpKind::Greater)?,
        lesser: one(tape, OpKind::Lesser)?,
    })
}

/// One history RNN update: weight the previous step's operation and column
/// embeddings by their selection probabilities, then recur.
pub fn history_step(
    tape: &mut Tape,
    bound: &BoundParams,
    mp: &ModelParams,
    alpha_op_prev: NodeId,
    alpha_col_prev: NodeId,
    h_prev: NodeId,
    p: NodeId,
) -> Result<NodeId> {
    let ut = tape.transpose(bound.node(mp.u));
    let weighted_op = tape.matmul(ut, alpha_op_prev)?;
    let pt = tape.transpose(p);
    let weighted_col = tape.matmul(pt, alpha_col_prev)?;
    let c = tape.concat_rows(weighted_op, weighted_col)?;
    let input = tape.concat_rows(c, h_prev)?;
    let lin = tape.matmul(bound.node(mp.w_history), input)?;
    Ok(tape.tanh_ew(lin))
}

/// Turn a soft distribution node into a constant one-hot leaf.
pub fn hardmax_node(tape: &mut Tape, dist: NodeId) -> NodeId {
    let hard = hardmax(tape.value(dist).data());
    let m = Matrix::col_vec(&hard);
    tape.leaf(m)
}
