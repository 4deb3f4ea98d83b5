//! Differentiable execution: every operation runs on every column each
//! step and the outputs are additively mixed by the selection
//! probabilities. Forcing the selections one-hot recovers the discrete
//! oracle exactly.

use std::collections::HashMap;

use crate::dataset::{ColumnValues, Example, GoldStep, TableInstance};
use crate::error::{Error, Result};
use crate::model::controller::{
    compute_pivots, hardmax_node, history_step, select, OperationSet, Pivots, SelectionMode,
};
use crate::model::encoder::QuestionEncoding;
use crate::model::{ModelConfig, ModelParams};
use crate::numerics::{argmax, BoundParams, Matrix, NodeId, Tape};
use crate::ops::OpKind;

/// Table data prepared for execution: a numeric matrix (text cells zero),
/// a numeric-column mask, and the text columns' word ids.
#[derive(Clone, Debug)]
pub struct TableView {
    pub rows: usize,
    pub cols: usize,
    pub numeric: Matrix,
    /// 1.0 on numeric columns, 0.0 on text columns; `None` when the table
    /// is entirely numeric.
    pub numeric_mask: Option<Matrix>,
    /// `(column index, per-row cell words)` for each text column.
    pub text_columns: Vec<(usize, Vec<String>)>,
    pub names: Vec<String>,
}

impl TableView {
    pub fn build(table: &TableInstance) -> Result<Self> {
        table.validate()?;
        let m = table.rows;
        let c = table.num_columns();
        let mut numeric = Matrix::zeros(m, c);
        let mut text_columns = Vec::new();
        for (j, col) in table.columns.iter().enumerate() {
            match &col.values {
                ColumnValues::Numeric(v) => {
                    for (i, x) in v.iter().enumerate() {
                        numeric.set(i, j, *x);
                    }
                }
                ColumnValues::Text(words) => {
                    text_columns.push((j, words.clone()));
                }
            }
        }
        let numeric_mask = if text_columns.is_empty() {
            None
        } else {
            let mut mask = Matrix::ones(m, c);
            for (j, _) in &text_columns {
                for i in 0..m {
                    mask.set(i, *j, 0.0);
                }
            }
            Some(mask)
        };
        Ok(TableView {
            rows: m,
            cols: c,
            numeric,
            numeric_mask,
            text_columns,
            names: table.columns.iter().map(|c| c.name.clone()).collect(),
        })
    }
}

/// Externally forced one-hot program for the oracle-equivalence harness:
/// exact selections, exact pivots, exact binary text matches.
#[derive(Clone, Debug)]
pub struct ForcedProgram {
    pub steps: Vec<(usize, usize)>,
    pub pivot_greater: f64,
    pub pivot_lesser: f64,
    /// Exact 0/1 match column per text column index.
    pub text_matches: HashMap<usize, Vec<f64>>,
}

impl ForcedProgram {
    /// Derive the forced program from an example's gold program, consuming
    /// question numbers and match words in program order exactly as the
    /// oracle does.
    pub fn for_gold(example: &Example, opset: &OperationSet) -> Result<ForcedProgram> {
        Self::from_program(
            &example.gold_program,
            &example.table,
            &example.numbers.iter().map(|n| n.value).collect::<Vec<_>>(),
            &example
                .question
                .iter()
                .filter(|w| w.starts_with("word:"))
                .cloned()
                .collect::<Vec<_>>(),
            opset,
        )
    }

    pub fn from_program(
        program: &[GoldStep],
        table: &TableInstance,
        numbers: &[f64],
        words: &[String],
        opset: &OperationSet,
    ) -> Result<ForcedProgram> {
        let mut steps = Vec::new();
        let mut pivot_greater = -1.0;
        let mut pivot_lesser = -1.0;
        let mut text_matches = HashMap::new();
        let mut numbers_iter = numbers.iter();
        let mut words_iter = words.iter();
        for step in program {
            let op_idx = opset
                .index(step.op)
                .ok_or_else(|| Error::InvalidConfig(format!("{} not in operation set", step.op)))?;
            let col_idx = match &step.col {
                Some(name) => table
                    .col_index(name)
                    .ok_or_else(|| Error::InvalidConfig(format!("no column named {name}")))?,
                None => 0,
            };
            match step.op {
                OpKind::Greater => {
                    pivot_greater = *numbers_iter
                        .next()
                        .ok_or_else(|| Error::InvalidConfig("ran out of pivots".into()))?;
                }
                OpKind::Lesser => {
                    pivot_lesser = *numbers_iter
                        .next()
                        .ok_or_else(|| Error::InvalidConfig("ran out of pivots".into()))?;
                }
                OpKind::TextMatch => {
                    let query = words_iter
                        .next()
                        .ok_or_else(|| Error::InvalidConfig("ran out of match words".into()))?;
                    let cells = match &table.columns[col_idx].values {
                        ColumnValues::Text(w) => w,
                        _ => {
                            return Err(Error::InvalidConfig(
                                "TextMatch forced onto a numeric column".into(),
                            ))
                        }
                    };
                    let mask: Vec<f64> = cells
                        .iter()
                        .map(|w| if w == query { 1.0 } else { 0.0 })
                        .collect();
                    text_matches.insert(col_idx, mask);
                }
                _ => {}
            }
            steps.push((op_idx, col_idx));
        }
        Ok(ForcedProgram {
            steps,
            pivot_greater,
            pivot_lesser,
            text_matches,
        })
    }
}

/// Execution regime for one run.
#[derive(Clone, Copy, Debug)]
pub enum RunMode<'a> {
    /// Differentiable run; `tau` relaxes the comparisons, `None` keeps the
    /// hard step functions (which pass no gradient to the pivots).
    Soft { tau: Option<f64> },
    /// Hardmax selections, hard comparisons (inference).
    Hard,
    /// Selections, pivots and text matches all forced (test harness).
    Forced(&'a ForcedProgram),
}

/// One step of the execution trace.
#[derive(Clone, Debug)]
pub struct TraceStep {
    pub op_idx: usize,
    pub col_idx: usize,
    pub op: OpKind,
    pub col_name: String,
    /// Row-selector values after this step.
    pub row_select: Vec<f64>,
}

/// The final program state and per-step decisions of one run.
pub struct ProgramRun {
    pub scalar: NodeId,
    pub lookup: NodeId,
    pub trace: Vec<TraceStep>,
    pub pivot_greater: f64,
    pub pivot_lesser: f64,
}

impl ProgramRun {
    pub fn final_op(&self) -> OpKind {
        self.trace.last().expect("at least one step").op
    }
}

/// Per-column text-match scores, static across steps (they depend only on
/// the question and the table's text entries).
fn text_match_scores(
    tape: &mut Tape,
    bound: &BoundParams,
    mp: &ModelParams,
    vocab: &crate::vocab::Vocab,
    enc: &QuestionEncoding,
    view: &TableView,
    p: NodeId,
    forced: Option<&ForcedProgram>,
) -> Result<Vec<(usize, NodeId)>> {
    let mut out = Vec::new();
    if let Some(f) = forced {
        for (j, words) in &view.text_columns {
            let mask = f
                .text_matches
                .get(j)
                .cloned()
                .unwrap_or_else(|| vec![0.0; words.len()]);
            out.push((*j, tape.leaf(Matrix::col_vec(&mask))));
        }
        return Ok(out);
    }
    let v = bound.node(mp.embeddings);
    let zmat = enc.state_matrix(tape)?;
    for (j, words) in &view.text_columns {
        // A_k: stacked embeddings of this column's cells
        let cell_embeddings: Vec<NodeId> = words
            .iter()
            .map(|w| tape.row_as_col(v, vocab.id(w)))
            .collect();
        let a = tape.stack_rows_from_cols(&cell_embeddings)?;
        // coarse selection B = sigmoid(A q)
        let aq = tape.matmul(a, enc.q)?;
        let b = tape.sigmoid_ew(aq);
        // question-specific column representation D = (1/M) A^T B
        let at = tape.transpose(a);
        let d_raw = tape.matmul(at, b)?;
        let d = tape.scale(d_raw, 1.0 / view.rows as f64);
        // add the column name representation
        let p_j = tape.row_as_col(p, *j);
        let e = tape.add(d, p_j)?;
        // attention back over the question states
        let g = match zmat {
            Some(zmat) => {
                let scores = tape.matmul(zmat, e)?;
                let w = tape.softmax(scores)?;
                let zt = tape.transpose(zmat);
                tape.matmul(zt, w)?
            }
            None => tape.zeros_leaf(tape.value(e).rows(), 1),
        };
        let ag = tape.matmul(a, g)?;
        out.push((*j, tape.sigmoid_ew(ag)));
    }
    Ok(out)
}

/// Differentiable interpreter state across steps.
struct ProgramState {
    ones: NodeId,
    zero_scalar: NodeId,
    row_selects: Vec<NodeId>,
    scalars: Vec<NodeId>,
    lookup: NodeId,
}

impl ProgramState {
    fn init(tape: &mut Tape, rows: usize, cols: usize) -> Self {
        let ones = tape.leaf(Matrix::ones(rows, 1));
        let zero_scalar = tape.scalar_leaf(0.0);
        let lookup = tape.zeros_leaf(rows, cols);
        ProgramState {
            ones,
            zero_scalar,
            row_selects: vec![ones],
            scalars: vec![zero_scalar],
            lookup,
        }
    }

    /// `row_select_t`; all ones for `t <= 0`.
    fn row_select(&self, t: isize) -> NodeId {
        if t <= 0 {
            self.ones
        } else {
            self.row_selects[t as usize]
        }
    }

    /// `scalar_answer_t`; zero for `t <= 0`.
    fn scalar(&self, t: isize) -> NodeId {
        if t <= 0 {
            self.zero_scalar
        } else {
            self.scalars[t as usize]
        }
    }
}

/// Run the interpreter over a question encoding and a table.
#[allow(clippy::too_many_arguments)]
pub fn run_program(
    tape: &mut Tape,
    bound: &BoundParams,
    mp: &ModelParams,
    cfg: &ModelConfig,
    vocab: &crate::vocab::Vocab,
    enc: &QuestionEncoding,
    view: &TableView,
    p: NodeId,
    opset: &OperationSet,
    mode: RunMode<'_>,
) -> Result<ProgramRun> {
    if !view.text_columns.is_empty() && opset.index(OpKind::TextMatch).is_none() {
        return Err(Error::InvalidConfig(
            "table has text columns but the operation set lacks TextMatch".into(),
        ));
    }

    let (selection, tau, forced) = match mode {
        RunMode::Soft { tau } => (SelectionMode::Soft, tau, None),
        RunMode::Hard => (SelectionMode::Hard, None, None),
        RunMode::Forced(f) => (SelectionMode::Hard, None, Some(f)),
    };

    // pivots and text matches are question-level, computed before the loop
    let pivots = match forced {
        Some(f) => {
            let g = tape.scalar_leaf(f.pivot_greater);
            let l = tape.scalar_leaf(f.pivot_lesser);
            Pivots {
                greater: crate::model::controller::Pivot {
                    node: g,
                    value: f.pivot_greater,
                    beta: Vec::new(),
                },
                lesser: crate::model::controller::Pivot {
                    node: l,
                    value: f.pivot_lesser,
                    beta: Vec::new(),
                },
            }
        }
        None => compute_pivots(tape, bound, mp, enc, opset, selection)?,
    };
    let text_scores = if view.text_columns.is_empty() {
        Vec::new()
    } else {
        text_match_scores(tape, bound, mp, vocab, enc, view, p, forced)?
    };

    let idx_of = |op: OpKind| opset.index(op);
    let mut state = ProgramState::init(tape, view.rows, view.cols);
    let mut trace = Vec::with_capacity(cfg.steps);
    let mut h = tape.zeros_leaf(cfg.d, 1);
    let mut alpha_prev: Option<(NodeId, NodeId)> = None;
    let numeric = tape.leaf(view.numeric.clone());
    let numeric_t = tape.transpose(numeric);
    // comparison masks are pivot-only functions, identical at every step
    let mut g = tape.pivot_compare(&view.numeric, pivots.greater.node, true, tau)?;
    let mut l = tape.pivot_compare(&view.numeric, pivots.lesser.node, false, tau)?;
    if let Some(mask) = &view.numeric_mask {
        g = tape.mul_const(g, mask)?;
        l = tape.mul_const(l, mask)?;
    }

    for t in 1..=cfg.steps as isize {
        if let Some((aop, acol)) = alpha_prev {
            h = history_step(tape, bound, mp, aop, acol, h, p)?;
        }
        let context = if cfg.question_attention {
            Some(crate::model::encoder::attend_question(tape, h, enc, cfg.d)?)
        } else {
            None
        };

        let (alpha_op, alpha_col) = match forced {
            Some(f) => {
                let (op_idx, col_idx) = f.steps[(t - 1) as usize];
                let mut op_one = vec![0.0; opset.len()];
                op_one[op_idx] = 1.0;
                let mut col_one = vec![0.0; view.cols];
                col_one[col_idx] = 1.0;
                (
                    tape.leaf(Matrix::col_vec(&op_one)),
                    tape.leaf(Matrix::col_vec(&col_one)),
                )
            }
            None => {
                let (aop, acol) = select(tape, bound, mp, enc.q, h, context, p)?;
                match selection {
                    SelectionMode::Soft => (aop, acol),
                    SelectionMode::Hard => (hardmax_node(tape, aop), hardmax_node(tape, acol)),
                }
            }
        };

        // ---- raw operation outputs at this step ----
        let prev = state.row_select(t - 1);
        let prev2 = state.row_select(t - 2);
        let sums = tape.matmul(numeric_t, prev)?; // C x 1
        let count = tape.sum_all(prev);
        let s3 = state.scalar(t - 3);
        let s1 = state.scalar(t - 1);
        let diff = tape.sub(s3, s1)?;
        let and = tape.emin(prev, prev2)?;
        let or = tape.emax(prev, prev2)?;

        // ---- additive combination weighted by the selections ----
        let a_of = |tape: &mut Tape, op: OpKind| idx_of(op).map(|i| tape.entry(alpha_op, i));

        // scalar answer
        let a_count = a_of(tape, OpKind::Count).expect("count");
        let a_diff = a_of(tape, OpKind::Difference).expect("difference");
        let a_sum = a_of(tape, OpKind::Sum).expect("sum");
        let mut scalar_t = tape.mul_scalar(count, a_count)?;
        let diff_term = tape.mul_scalar(diff, a_diff)?;
        scalar_t = tape.add(scalar_t, diff_term)?;
        let acol_t = tape.transpose(alpha_col);
        let col_sum = tape.matmul(acol_t, sums)?;
        let sum_term = tape.mul_scalar(col_sum, a_sum)?;
        scalar_t = tape.add(scalar_t, sum_term)?;

        // lookup answer: assign broadcasts the previous row selector
        let a_assign = a_of(tape, OpKind::Assign).expect("assign");
        let assign_outer = tape.matmul(prev, acol_t)?; // M x C
        let lookup_t = tape.mul_scalar(assign_outer, a_assign)?;

        // row selector
        let a_and = a_of(tape, OpKind::And).expect("and");
        let a_or = a_of(tape, OpKind::Or).expect("or");
        let a_reset = a_of(tape, OpKind::Reset).expect("reset");
        let a_greater = a_of(tape, OpKind::Greater).expect("greater");
        let a_lesser = a_of(tape, OpKind::Lesser).expect("lesser");
        let mut row_t = tape.mul_scalar(and, a_and)?;
        let or_term = tape.mul_scalar(or, a_or)?;
        row_t = tape.add(row_t, or_term)?;
        let reset_term = tape.mul_scalar(state.ones, a_reset)?;
        row_t = tape.add(row_t, reset_term)?;
        let g_cols = tape.matmul(g, alpha_col)?;
        let g_term = tape.mul_scalar(g_cols, a_greater)?;
        row_t = tape.add(row_t, g_term)?;
        let l_cols = tape.matmul(l, alpha_col)?;
        let l_term = tape.mul_scalar(l_cols, a_lesser)?;
        row_t = tape.add(row_t, l_term)?;
        if let Some(a_tm) = a_of(tape, OpKind::TextMatch) {
            for (j, scores) in &text_scores {
                let a_col_j = tape.entry(alpha_col, *j);
                let w = tape.hadamard(a_tm, a_col_j)?;
                let term = tape.mul_scalar(*scores, w)?;
                row_t = tape.add(row_t, term)?;
            }
        }

        state.row_selects.push(row_t);
        state.scalars.push(scalar_t);
        state.lookup = lookup_t;

        let op_idx = argmax(tape.value(alpha_op).data());
        let col_idx = argmax(tape.value(alpha_col).data());
        trace.push(TraceStep {
            op_idx,
            col_idx,
            op: opset.op(op_idx),
            col_name: view.names[col_idx].clone(),
            row_select: tape.value(row_t).data().to_vec(),
        });
        alpha_prev = Some((alpha_op, alpha_col));
    }

    Ok(ProgramRun {
        scalar: *state.scalars.last().expect("T >= 1"),
        lookup: state.lookup,
        trace,
        pivot_greater: pivots.greater.value,
        pivot_lesser: pivots.lesser.value,
    })
}
