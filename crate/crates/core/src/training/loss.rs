//! Per-example losses and the batch objective.

use crate::dataset::Answer;
use crate::error::{Error, Result};
use crate::numerics::{Matrix, NodeId, Tape};

/// Huber loss of a scalar prediction (built on the tape).
pub fn scalar_loss(tape: &mut Tape, pred: NodeId, target: f64, delta: f64) -> Result<NodeId> {
    if delta <= 0.0 {
        return Err(Error::InvalidConfig("huber delta must be positive".into()));
    }
    tape.huber(pred, target, delta)
}

/// Mean log-loss of a lookup prediction against a 0/1 mask.
pub fn lookup_loss(tape: &mut Tape, pred: NodeId, mask: &[Vec<u8>]) -> Result<NodeId> {
    let rows = mask.len();
    let cols = mask.first().map_or(0, |r| r.len());
    let mut target = Matrix::zeros(rows, cols);
    for (i, row) in mask.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            target.set(i, j, f64::from(*v));
        }
    }
    tape.log_loss_mean(pred, &target)
}

/// Loss of one example under the combined objective: Huber for scalar
/// answers, `lambda`-weighted log-loss for lookups. The answer kind is the
/// gold answer's kind, never the model's.
pub fn example_loss(
    tape: &mut Tape,
    scalar_pred: NodeId,
    lookup_pred: NodeId,
    answer: &Answer,
    delta: f64,
    lambda: f64,
) -> Result<NodeId> {
    match answer {
        Answer::Scalar { scalar } => scalar_loss(tape, scalar_pred, *scalar, delta),
        Answer::Lookup { mask } => {
            let ll = lookup_loss(tape, lookup_pred, mask)?;
            Ok(tape.scale(ll, lambda))
        }
    }
}

/// Mean of per-example losses (already `lambda`-weighted), as the training
/// objective over a mini-batch.
pub fn objective(example_losses: &[f64]) -> f64 {
    if example_losses.is_empty() {
        return 0.0;
    }
    example_losses.iter().sum::<f64>() / example_losses.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn huber_hand_values() {
        let mut t = Tape::new();
        // a = 0
        let p0 = t.scalar_leaf(7.0);
        let l0 = scalar_loss(&mut t, p0, 7.0, 10.0).unwrap();
        assert_eq!(t.scalar(l0), 0.0);
        // a = 1, delta = 10 -> 0.5
        let p1 = t.scalar_leaf(8.0);
        let l1 = scalar_loss(&mut t, p1, 7.0, 10.0).unwrap();
        assert!((t.scalar(l1) - 0.5).abs() < 1e-12);
        // a = 20, delta = 10 -> 10*20 - 50 = 150
        let p2 = t.scalar_leaf(27.0);
        let l2 = scalar_loss(&mut t, p2, 7.0, 10.0).unwrap();
        assert!((t.scalar(l2) - 150.0).abs() < 1e-12);
    }

    #[test]
    fn huber_continuous_at_delta() {
        let mut t = Tape::new();
        let delta = 10.0;
        let below = t.scalar_leaf(delta - 1e-9);
        let above = t.scalar_leaf(delta + 1e-9);
        let lb = scalar_loss(&mut t, below, 0.0, delta).unwrap();
        let la = scalar_loss(&mut t, above, 0.0, delta).unwrap();
        assert!((t.scalar(lb) - t.scalar(la)).abs() < 1e-7);
    }

    #[test]
    fn lookup_loss_all_half_is_ln2() {
        let mut t = Tape::new();
        let pred = t.leaf(Matrix::from_vec(3, 2, vec![0.5; 6]).unwrap());
        let mask = vec![vec![1u8, 0], vec![0, 1], vec![1, 1]];
        let l = lookup_loss(&mut t, pred, &mask).unwrap();
        assert!((t.scalar(l) - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn objective_is_order_invariant_mean() {
        let a = [1.0, 4.0, 2.5];
        let b = [2.5, 1.0, 4.0];
        assert_eq!(objective(&a), objective(&b));
        assert!((objective(&a) - 2.5).abs() < 1e-15);
        assert_eq!(objective(&[]), 0.0);
    }

    #[test]
    fn mixed_batch_matches_hand_weighted_mean() {
        // scalar losses 0.5 and 150, lookup loss ln2 with lambda 50
        let lambda = 50.0;
        let losses = [0.5, 150.0, lambda * std::f64::consts::LN_2];
        let expect = (0.5 + 150.0 + 50.0 * std::f64::consts::LN_2) / 3.0;
        assert!((objective(&losses) - expect).abs() < 1e-12);
    }
}
