//! Reverse-mode automatic differentiation over [`Matrix`] values.
//!
//! A [`Tape`] records every primitive forward operation in creation order;
//! [`Tape::backward`] replays the records in reverse, pushing adjoints from
//! each node to its parents. Gradients accumulate across backward calls
//! until [`Tape::zero_grad`] is called.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numerics::matrix::Matrix;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

/// Predictions are clamped to `[EP, 1-EP]` inside the log-loss.
pub const LOG_LOSS_CLAMP: f64 = 1e-7;

enum Value {
    Owned(Matrix),
    Shared(Arc<Matrix>),
}

impl Value {
    #[inline]
    fn get(&self) -> &Matrix {
        match self {
            Value::Owned(m) => m,
            Value::Shared(m) => m,
        }
    }
}

enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Hadamard(NodeId, NodeId),
    Scale(NodeId, f64),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Softmax(NodeId),
    ConcatRows(NodeId, NodeId),
    StackRowsFromCols(Vec<NodeId>),
    RowAsCol(NodeId, usize),
    Entry(NodeId, usize),
    DotConst(NodeId, Vec<f64>),
    SumAll(NodeId),
    MulScalar(NodeId, NodeId),
    EMin(NodeId, NodeId),
    EMax(NodeId, NodeId),
    MulConst(NodeId, Matrix),
    PivotCompare {
        pivot: NodeId,
        greater: bool,
        tau: Option<f64>,
    },
    Huber {
        pred: NodeId,
        target: f64,
        delta: f64,
    },
    LogLossMean {
        pred: NodeId,
        target: Matrix,
    },
}

struct Node {
    value: Value,
    op: Op,
}

/// Recorded computation graph plus persistent gradient accumulators.
pub struct Tape {
    nodes: Vec<Node>,
    acc: Vec<Option<Matrix>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            acc: Vec::new(),
        }
    }

    fn push(&mut self, value: Value, op: Op) -> NodeId {
        debug_assert!(
            value.get().all_finite(),
            "non-finite value produced at node {}",
            self.nodes.len()
        );
        self.nodes.push(Node { value, op });
        self.acc.push(None);
        NodeId(self.nodes.len() - 1)
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    #[inline]
    pub fn value(&self, id: NodeId) -> &Matrix {
        self.nodes[id.0].value.get()
    }

    /// Scalar value of a 1x1 node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        self.value(id).data()[0]
    }

    /// Accumulated gradient of a node, if any backward pass reached it.
    pub fn grad(&self, id: NodeId) -> Option<&Matrix> {
        self.acc[id.0].as_ref()
    }

    pub fn zero_grad(&mut self) {
        for g in &mut self.acc {
            *g = None;
        }
    }

    // ---- leaves ------------------------------------------------------

    pub fn leaf(&mut self, m: Matrix) -> NodeId {
        self.push(Value::Owned(m), Op::Leaf)
    }

    /// Leaf that shares its storage with the caller (used for parameters,
    /// which would otherwise be cloned into every example's tape).
    pub fn shared_leaf(&mut self, m: Arc<Matrix>) -> NodeId {
        self.push(Value::Shared(m), Op::Leaf)
    }

    pub fn scalar_leaf(&mut self, v: f64) -> NodeId {
        self.leaf(Matrix::from_vec(1, 1, vec![v]).expect("1x1"))
    }

    pub fn zeros_leaf(&mut self, rows: usize, cols: usize) -> NodeId {
        self.leaf(Matrix::zeros(rows, cols))
    }

    // ---- primitive ops ------------------------------------------------

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(Value::Owned(out), Op::MatMul(a, b)))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let out = self.value(a).transpose();
        self.push(Value::Owned(out), Op::Transpose(a))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = self.zip("add", a, b, |x, y| x + y)?;
        Ok(self.push(Value::Owned(out), Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = self.zip("sub", a, b, |x, y| x - y)?;
        Ok(self.push(Value::Owned(out), Op::Sub(a, b)))
    }

    pub fn hadamard(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = self.zip("hadamard", a, b, |x, y| x * y)?;
        Ok(self.push(Value::Owned(out), Op::Hadamard(a, b)))
    }

    pub fn emin(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = self.zip("emin", a, b, f64::min)?;
        Ok(self.push(Value::Owned(out), Op::EMin(a, b)))
    }

    pub fn emax(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = self.zip("emax", a, b, f64::max)?;
        Ok(self.push(Value::Owned(out), Op::EMax(a, b)))
    }

    pub fn scale(&mut self, a: NodeId, k: f64) -> NodeId {
        let mut out = self.value(a).clone();
        out.scale_in_place(k);
        self.push(Value::Owned(out), Op::Scale(a, k))
    }

    pub fn tanh_ew(&mut self, a: NodeId) -> NodeId {
        let out = self.map(a, f64::tanh);
        self.push(Value::Owned(out), Op::Tanh(a))
    }

    pub fn sigmoid_ew(&mut self, a: NodeId) -> NodeId {
        let out = self.map(a, |x| 1.0 / (1.0 + (-x).exp()));
        self.push(Value::Owned(out), Op::Sigmoid(a))
    }

    /// Numerically stable softmax over all entries of a vector node.
    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a);
        if v.is_empty() {
            return Err(Error::EmptySoftmax);
        }
        let out = softmax_slice(v.data());
        let out = Matrix::from_vec(v.rows(), v.cols(), out)?;
        Ok(self.push(Value::Owned(out), Op::Softmax(a)))
    }

    /// Vertical concatenation `[a; b]`; column counts must agree.
    pub fn concat_rows(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ma, mb) = (self.value(a), self.value(b));
        if ma.cols() != mb.cols() && !ma.is_empty() && !mb.is_empty() {
            return Err(Error::ShapeMismatch {
                op: "concat_rows",
                left: ma.shape(),
                right: mb.shape(),
            });
        }
        let cols = if ma.is_empty() { mb.cols() } else { ma.cols() };
        let mut data = Vec::with_capacity(ma.len() + mb.len());
        data.extend_from_slice(ma.data());
        data.extend_from_slice(mb.data());
        let out = Matrix::from_vec(ma.rows() + mb.rows(), cols, data)?;
        Ok(self.push(Value::Owned(out), Op::ConcatRows(a, b)))
    }

    /// Stack `k` column vectors of length `d` into a `k x d` matrix whose
    /// row `i` is the transpose of vector `i`.
    pub fn stack_rows_from_cols(&mut self, cols: &[NodeId]) -> Result<NodeId> {
        if cols.is_empty() {
            return Err(Error::InvalidConfig("stack of zero vectors".into()));
        }
        let d = self.value(cols[0]).rows();
        let mut data = Vec::with_capacity(cols.len() * d);
        for &c in cols {
            let v = self.value(c);
            if v.shape() != (d, 1) {
                return Err(Error::ShapeMismatch {
                    op: "stack_rows_from_cols",
                    left: (d, 1),
                    right: v.shape(),
                });
            }
            data.extend_from_slice(v.data());
        }
        let out = Matrix::from_vec(cols.len(), d, data)?;
        Ok(self.push(Value::Owned(out), Op::StackRowsFromCols(cols.to_vec())))
    }

    /// Row `i` of a matrix, returned as a column vector.
    pub fn row_as_col(&mut self, a: NodeId, i: usize) -> NodeId {
        let v = self.value(a).row(i).to_vec();
        let out = Matrix::col_vec(&v);
        self.push(Value::Owned(out), Op::RowAsCol(a, i))
    }

    /// Flat entry `i` of a node as a 1x1 node.
    pub fn entry(&mut self, a: NodeId, i: usize) -> NodeId {
        let v = self.value(a).data()[i];
        let out = Matrix::from_vec(1, 1, vec![v]).expect("1x1");
        self.push(Value::Owned(out), Op::Entry(a, i))
    }

    /// Dot product of a vector node with a constant vector.
    pub fn dot_const(&mut self, a: NodeId, w: &[f64]) -> Result<NodeId> {
        let v = self.value(a);
        if v.len() != w.len() {
            return Err(Error::ShapeMismatch {
                op: "dot_const",
                left: v.shape(),
                right: (w.len(), 1),
            });
        }
        let s: f64 = v.data().iter().zip(w).map(|(x, y)| x * y).sum();
        let out = Matrix::from_vec(1, 1, vec![s]).expect("1x1");
        Ok(self.push(Value::Owned(out), Op::DotConst(a, w.to_vec())))
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let s: f64 = self.value(a).data().iter().sum();
        let out = Matrix::from_vec(1, 1, vec![s]).expect("1x1");
        self.push(Value::Owned(out), Op::SumAll(a))
    }

    /// Matrix node scaled by a 1x1 node.
    pub fn mul_scalar(&mut self, a: NodeId, s: NodeId) -> Result<NodeId> {
        let sv = self.value(s);
        if sv.shape() != (1, 1) {
            return Err(Error::ShapeMismatch {
                op: "mul_scalar",
                left: self.value(a).shape(),
                right: sv.shape(),
            });
        }
        let k = sv.data()[0];
        let mut out = self.value(a).clone();
        out.scale_in_place(k);
        Ok(self.push(Value::Owned(out), Op::MulScalar(a, s)))
    }

    /// Elementwise product with a constant matrix (masking).
    pub fn mul_const(&mut self, a: NodeId, m: &Matrix) -> Result<NodeId> {
        let v = self.value(a);
        if v.shape() != m.shape() {
            return Err(Error::ShapeMismatch {
                op: "mul_const",
                left: v.shape(),
                right: m.shape(),
            });
        }
        let data = v.data().iter().zip(m.data()).map(|(x, y)| x * y).collect();
        let out = Matrix::from_vec(v.rows(), v.cols(), data)?;
        Ok(self.push(Value::Owned(out), Op::MulConst(a, m.clone())))
    }

    /// Compare every table cell against a pivot node. `tau = None` gives the
    /// hard step function (zero gradient to the pivot); `tau = Some(t)`
    /// relaxes it to `sigmoid((cell - pivot)/t)` (sign flipped for lesser).
    pub fn pivot_compare(
        &mut self,
        table: &Matrix,
        pivot: NodeId,
        greater: bool,
        tau: Option<f64>,
    ) -> Result<NodeId> {
        let pv = self.value(pivot);
        if pv.shape() != (1, 1) {
            return Err(Error::ShapeMismatch {
                op: "pivot_compare",
                left: table.shape(),
                right: pv.shape(),
            });
        }
        let p = pv.data()[0];
        let sign = if greater { 1.0 } else { -1.0 };
        let data: Vec<f64> = table
            .data()
            .iter()
            .map(|&c| match tau {
                None => {
                    if sign * (c - p) > 0.0 {
                        1.0
                    } else {
                        0.0
                    }
                }
                Some(t) => 1.0 / (1.0 + (-(sign * (c - p) / t)).exp()),
            })
            .collect();
        let out = Matrix::from_vec(table.rows(), table.cols(), data)?;
        Ok(self.push(
            Value::Owned(out),
            Op::PivotCompare { pivot, greater, tau },
        ))
    }

    /// Huber loss of a 1x1 prediction against a scalar target.
    pub fn huber(&mut self, pred: NodeId, target: f64, delta: f64) -> Result<NodeId> {
        let pv = self.value(pred);
        if pv.shape() != (1, 1) {
            return Err(Error::ShapeMismatch {
                op: "huber",
                left: pv.shape(),
                right: (1, 1),
            });
        }
        let a = (pv.data()[0] - target).abs();
        let loss = if a <= delta {
            0.5 * a * a
        } else {
            delta * a - 0.5 * delta * delta
        };
        let out = Matrix::from_vec(1, 1, vec![loss]).expect("1x1");
        Ok(self.push(Value::Owned(out), Op::Huber { pred, target, delta }))
    }

    /// Mean binary cross-entropy over all cells, with predictions clamped
    /// to `[1e-7, 1-1e-7]`.
    pub fn log_loss_mean(&mut self, pred: NodeId, target: &Matrix) -> Result<NodeId> {
        let pv = self.value(pred);
        if pv.shape() != target.shape() {
            return Err(Error::ShapeMismatch {
                op: "log_loss_mean",
                left: pv.shape(),
                right: target.shape(),
            });
        }
        let n = pv.len() as f64;
        let mut total = 0.0;
        for (&p, &y) in pv.data().iter().zip(target.data()) {
            let p = p.clamp(LOG_LOSS_CLAMP, 1.0 - LOG_LOSS_CLAMP);
            total -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
        }
        let out = Matrix::from_vec(1, 1, vec![total / n]).expect("1x1");
        Ok(self.push(
            Value::Owned(out),
            Op::LogLossMean {
                pred,
                target: target.clone(),
            },
        ))
    }

    // ---- backward ------------------------------------------------------

    /// Propagate adjoints from `out` (seeded with ones) back to every node
    /// that contributed to it, adding the results into the persistent
    /// accumulators. Calling twice without [`Tape::zero_grad`] doubles them.
    pub fn backward(&mut self, out: NodeId) {
        let n = self.nodes.len();
        let mut local: Vec<Option<Matrix>> = (0..n).map(|_| None).collect();
        let seed = {
            let v = self.value(out);
            Matrix::ones(v.rows(), v.cols())
        };
        local[out.0] = Some(seed);

        for idx in (0..n).rev() {
            let d = match local[idx].take() {
                Some(d) => d,
                None => continue,
            };
            self.propagate(idx, &d, &mut local);
            match &mut self.acc[idx] {
                Some(acc) => acc.add_scaled(&d, 1.0).expect("accumulator shape"),
                slot => *slot = Some(d),
            }
        }
    }

    fn propagate(&self, idx: usize, d: &Matrix, local: &mut [Option<Matrix>]) {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let da = d.matmul(&bv.transpose()).expect("dA shape");
                let db = av.transpose().matmul(d).expect("dB shape");
                accum(local, a.0, da);
                accum(local, b.0, db);
            }
            Op::Transpose(a) => {
                accum(local, a.0, d.transpose());
            }
            Op::Add(a, b) => {
                accum(local, a.0, d.clone());
                accum(local, b.0, d.clone());
            }
            Op::Sub(a, b) => {
                accum(local, a.0, d.clone());
                let mut neg = d.clone();
                neg.scale_in_place(-1.0);
                accum(local, b.0, neg);
            }
            Op::Hadamard(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let da = zip_new(d, bv, |x, y| x * y);
                let db = zip_new(d, av, |x, y| x * y);
                accum(local, a.0, da);
                accum(local, b.0, db);
            }
            Op::Scale(a, k) => {
                let mut da = d.clone();
                da.scale_in_place(*k);
                accum(local, a.0, da);
            }
            Op::Tanh(a) => {
                let y = node.value.get();
                let da = zip_new(d, y, |g, y| g * (1.0 - y * y));
                accum(local, a.0, da);
            }
            Op::Sigmoid(a) => {
                let y = node.value.get();
                let da = zip_new(d, y, |g, y| g * y * (1.0 - y));
                accum(local, a.0, da);
            }
            Op::Softmax(a) => {
                let y = node.value.get();
                let dot: f64 = y.data().iter().zip(d.data()).map(|(x, g)| x * g).sum();
                let da = zip_new(d, y, |g, y| y * (g - dot));
                accum(local, a.0, da);
            }
            Op::ConcatRows(a, b) => {
                let na = self.value(*a).len();
                let (ra, ca) = self.value(*a).shape();
                let (rb, cb) = self.value(*b).shape();
                let da = Matrix::from_vec(ra, ca, d.data()[..na].to_vec()).expect("split");
                let db = Matrix::from_vec(rb, cb, d.data()[na..].to_vec()).expect("split");
                accum(local, a.0, da);
                accum(local, b.0, db);
            }
            Op::StackRowsFromCols(ids) => {
                for (i, id) in ids.iter().enumerate() {
                    let da = Matrix::col_vec(d.row(i));
                    accum(local, id.0, da);
                }
            }
            Op::RowAsCol(a, i) => {
                let src = self.value(*a);
                let mut da = Matrix::zeros(src.rows(), src.cols());
                for j in 0..src.cols() {
                    da.set(*i, j, d.data()[j]);
                }
                accum(local, a.0, da);
            }
            Op::Entry(a, i) => {
                let src = self.value(*a);
                let mut da = Matrix::zeros(src.rows(), src.cols());
                da.data_mut()[*i] = d.data()[0];
                accum(local, a.0, da);
            }
            Op::DotConst(a, w) => {
                let g = d.data()[0];
                let src = self.value(*a);
                let da =
                    Matrix::from_vec(src.rows(), src.cols(), w.iter().map(|x| g * x).collect())
                        .expect("dot_const shape");
                accum(local, a.0, da);
            }
            Op::SumAll(a) => {
                let g = d.data()[0];
                let src = self.value(*a);
                let mut da = Matrix::zeros(src.rows(), src.cols());
                da.fill(g);
                accum(local, a.0, da);
            }
            Op::MulScalar(a, s) => {
                let k = self.value(*s).data()[0];
                let av = self.value(*a);
                let mut da = d.clone();
                da.scale_in_place(k);
                accum(local, a.0, da);
                let ds: f64 = d.data().iter().zip(av.data()).map(|(g, x)| g * x).sum();
                accum(local, s.0, Matrix::from_vec(1, 1, vec![ds]).expect("1x1"));
            }
            Op::EMin(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let mut da = Matrix::zeros(av.rows(), av.cols());
                let mut db = Matrix::zeros(bv.rows(), bv.cols());
                for i in 0..d.len() {
                    // ties route to the left argument
                    if av.data()[i] <= bv.data()[i] {
                        da.data_mut()[i] = d.data()[i];
                    } else {
                        db.data_mut()[i] = d.data()[i];
                    }
                }
                accum(local, a.0, da);
                accum(local, b.0, db);
            }
            Op::EMax(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let mut da = Matrix::zeros(av.rows(), av.cols());
                let mut db = Matrix::zeros(bv.rows(), bv.cols());
                for i in 0..d.len() {
                    if av.data()[i] >= bv.data()[i] {
                        da.data_mut()[i] = d.data()[i];
                    } else {
                        db.data_mut()[i] = d.data()[i];
                    }
                }
                accum(local, a.0, da);
                accum(local, b.0, db);
            }
            Op::MulConst(a, m) => {
                let da = zip_new(d, m, |g, c| g * c);
                accum(local, a.0, da);
            }
            Op::PivotCompare { pivot, greater, tau } => {
                let dp = match tau {
                    None => 0.0,
                    Some(t) => {
                        let sign = if *greater { 1.0 } else { -1.0 };
                        let y = node.value.get();
                        d.data()
                            .iter()
                            .zip(y.data())
                            .map(|(g, s)| g * s * (1.0 - s) * (-sign / t))
                            .sum()
                    }
                };
                accum(local, pivot.0, Matrix::from_vec(1, 1, vec![dp]).expect("1x1"));
            }
            Op::Huber {
                pred,
                target,
                delta,
            } => {
                let g = d.data()[0];
                let diff = self.value(*pred).data()[0] - target;
                let dl = if diff.abs() <= *delta {
                    diff
                } else {
                    delta * diff.signum()
                };
                accum(
                    local,
                    pred.0,
                    Matrix::from_vec(1, 1, vec![g * dl]).expect("1x1"),
                );
            }
            Op::LogLossMean { pred, target } => {
                let g = d.data()[0];
                let pv = self.value(*pred);
                let n = pv.len() as f64;
                let mut dp = Matrix::zeros(pv.rows(), pv.cols());
                for i in 0..pv.len() {
                    let p = pv.data()[i];
                    // the clamp is flat outside its bounds
                    if p < LOG_LOSS_CLAMP || p > 1.0 - LOG_LOSS_CLAMP {
                        continue;
                    }
                    let y = target.data()[i];
                    dp.data_mut()[i] = g * (-y / p + (1.0 - y) / (1.0 - p)) / n;
                }
                accum(local, pred.0, dp);
            }
        }
    }

    // ---- helpers -------------------------------------------------------

    fn map(&self, a: NodeId, f: impl Fn(f64) -> f64) -> Matrix {
        let v = self.value(a);
        let data = v.data().iter().map(|&x| f(x)).collect();
        Matrix::from_vec(v.rows(), v.cols(), data).expect("same shape")
    }

    fn zip(
        &self,
        op: &'static str,
        a: NodeId,
        b: NodeId,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Matrix> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::ShapeMismatch {
                op,
                left: av.shape(),
                right: bv.shape(),
            });
        }
        Ok(zip_new(av, bv, f))
    }
}

fn zip_new(a: &Matrix, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| f(x, y))
        .collect();
    Matrix::from_vec(a.rows(), a.cols(), data).expect("same shape")
}

fn accum(local: &mut [Option<Matrix>], idx: usize, m: Matrix) {
    match &mut local[idx] {
        Some(acc) => acc.add_scaled(&m, 1.0).expect("adjoint shape"),
        slot => *slot = Some(m),
    }
}

/// Stable softmax of a slice (max-subtraction trick).
pub fn softmax_slice(x: &[f64]) -> Vec<f64> {
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = x.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

/// Index of the maximum entry; ties break toward the lowest index.
pub fn argmax(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in x.iter().enumerate().skip(1) {
        if v > x[best] {
            best = i;
        }
    }
    best
}
