//! Model assembly: configuration, parameters, and the per-example forward
//! pass that chains encoder, controller and interpreter.

pub mod controller;
pub mod encoder;
pub mod interpreter;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Example, TableInstance};
use crate::error::{Error, Result};
use crate::numerics::{BoundParams, Matrix, NodeId, ParamId, ParamStore, Tape};
use crate::vocab::Vocab;

pub use controller::{hardmax, OperationSet, Pivot, Pivots, SelectionMode};
pub use encoder::{preprocess, PreprocessedQuestion, QuestionEncoding};
pub use interpreter::{ForcedProgram, ProgramRun, RunMode, TableView, TraceStep};

/// Parameters are initialized uniformly in this range.
pub const INIT_RANGE: f64 = 0.1;

/// Architecture switches for one trained model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Hidden dimensionality `d`.
    pub d: usize,
    /// Number of execution steps `T`.
    pub steps: usize,
    /// Include the text-match operation (tables with text columns).
    pub text_match: bool,
    /// Bidirectional question RNN.
    pub bidirectional: bool,
    /// Attention over question states at every step (wide-table regime).
    pub question_attention: bool,
}

impl ModelConfig {
    pub fn new(d: usize) -> Self {
        ModelConfig {
            d,
            steps: 4,
            text_match: false,
            bidirectional: false,
            question_attention: false,
        }
    }

    /// Width of the selector input: `[q; h]`, plus the attention context
    /// when enabled.
    pub fn selector_input_width(&self) -> usize {
        if self.question_attention {
            3 * self.d
        } else {
            2 * self.d
        }
    }

    pub fn operation_set(&self) -> OperationSet {
        OperationSet::new(self.text_match)
    }
}

/// Handles to every named parameter of the model.
#[derive(Clone, Debug)]
pub struct ModelParams {
    /// Word embeddings, `|vocab| x d`; shared by questions, column names
    /// and text cells.
    pub embeddings: ParamId,
    /// Question RNN recurrence, `d x 2d`.
    pub w_question: ParamId,
    /// Backward recurrence for the bidirectional encoder.
    pub w_question_bwd: Option<ParamId>,
    /// Projection of the two final states back to `d`.
    pub w_bidir: Option<ParamId>,
    /// Operation selector, `d x selector_input`.
    pub w_op: ParamId,
    /// Column selector, `d x selector_input`.
    pub w_col: ParamId,
    /// History RNN recurrence, `d x 3d`.
    pub w_history: ParamId,
    /// Operation embeddings, `O x d`.
    pub u: ParamId,
}

/// Create and initialize every parameter for a configuration.
pub fn init_params<R: Rng>(
    cfg: &ModelConfig,
    vocab: &Vocab,
    rng: &mut R,
) -> (ParamStore, ModelParams) {
    let d = cfg.d;
    let sel = cfg.selector_input_width();
    let ops = cfg.operation_set().len();
    let mut store = ParamStore::new();
    let mat = |store: &mut ParamStore, name: &str, r: usize, c: usize, rng: &mut R| {
        store.insert(name, Matrix::uniform(r, c, -INIT_RANGE, INIT_RANGE, rng))
    };
    let embeddings = mat(&mut store, "V", vocab.len(), d, rng);
    let w_question = mat(&mut store, "W_question", d, 2 * d, rng);
    let (w_question_bwd, w_bidir) = if cfg.bidirectional {
        (
            Some(mat(&mut store, "W_question_bwd", d, 2 * d, rng)),
            Some(mat(&mut store, "W_bidir", d, 2 * d, rng)),
        )
    } else {
        (None, None)
    };
    let w_op = mat(&mut store, "W_op", d, sel, rng);
    let w_col = mat(&mut store, "W_col", d, sel, rng);
    let w_history = mat(&mut store, "W_history", d, 3 * d, rng);
    let u = mat(&mut store, "U", ops, d, rng);
    (
        store,
        ModelParams {
            embeddings,
            w_question,
            w_question_bwd,
            w_bidir,
            w_op,
            w_col,
            w_history,
            u,
        },
    )
}

/// Recover parameter handles by name (after loading a checkpoint).
pub fn lookup_params(cfg: &ModelConfig, store: &ParamStore) -> Result<ModelParams> {
    let need = |name: &str| {
        store
            .id(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing parameter {name}")))
    };
    Ok(ModelParams {
        embeddings: need("V")?,
        w_question: need("W_question")?,
        w_question_bwd: if cfg.bidirectional {
            Some(need("W_question_bwd")?)
        } else {
            None
        },
        w_bidir: if cfg.bidirectional {
            Some(need("W_bidir")?)
        } else {
            None
        },
        w_op: need("W_op")?,
        w_col: need("W_col")?,
        w_history: need("W_history")?,
        u: need("U")?,
    })
}

/// Output of one full forward pass over an example.
pub struct ExampleRun {
    pub tape: Tape,
    pub bound: BoundParams,
    pub scalar: NodeId,
    pub lookup: NodeId,
    pub trace: Vec<TraceStep>,
    pub pivot_greater: f64,
    pub pivot_lesser: f64,
    pub final_op: crate::ops::OpKind,
}

/// Encode a question and execute the program against a table.
pub fn run_example(
    params: &ParamStore,
    mp: &ModelParams,
    cfg: &ModelConfig,
    vocab: &Vocab,
    question: &[String],
    table: &TableInstance,
    mode: RunMode<'_>,
) -> Result<ExampleRun> {
    let mut tape = Tape::new();
    let bound = BoundParams::bind(&mut tape, params);
    let pq = preprocess(question);
    let enc = encoder::encode_question(&mut tape, &bound, mp, cfg, vocab, &pq)?;
    let view = TableView::build(table)?;
    let p = encoder::encode_column_names(&mut tape, &bound, mp, cfg, vocab, &view.names)?;
    let opset = cfg.operation_set();
    let run = interpreter::run_program(
        &mut tape, &bound, mp, cfg, vocab, &enc, &view, p, &opset, mode,
    )?;
    let final_op = run.final_op();
    Ok(ExampleRun {
        tape,
        bound,
        scalar: run.scalar,
        lookup: run.lookup,
        trace: run.trace,
        pivot_greater: run.pivot_greater,
        pivot_lesser: run.pivot_lesser,
        final_op,
    })
}

/// Convenience used throughout tests and evaluation: run an example's own
/// question and table.
pub fn run_stored_example(
    params: &ParamStore,
    mp: &ModelParams,
    cfg: &ModelConfig,
    vocab: &Vocab,
    example: &Example,
    mode: RunMode<'_>,
) -> Result<ExampleRun> {
    run_example(params, mp, cfg, vocab, &example.question, &example.table, mode)
}
