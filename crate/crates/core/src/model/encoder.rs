//! Question preprocessing and encoding: number extraction, the question
//! RNN (optionally bidirectional), column-name representations and
//! question attention.

use crate::dataset::QuestionNumber;
use crate::error::Result;
use crate::model::{ModelConfig, ModelParams};
use crate::numerics::{BoundParams, NodeId, Tape};
use crate::vocab::Vocab;

/// A question with its numbers removed and remembered.
#[derive(Clone, Debug, PartialEq)]
pub struct PreprocessedQuestion {
    /// Tokens with every number removed; none of these parses as a number.
    pub tokens: Vec<String>,
    /// Extracted numbers, each with the index (into `tokens`) of the word
    /// on its left; 0 when the number opened the question.
    pub numbers: Vec<QuestionNumber>,
}

/// Strict signed-decimal check: an optional sign, digits, an optional
/// fractional part. Words like `word:3` or `A` never qualify.
pub fn is_number_token(tok: &str) -> bool {
    let body = tok.strip_prefix('-').or_else(|| tok.strip_prefix('+')).unwrap_or(tok);
    if body.is_empty() {
        return false;
    }
    let mut parts = body.splitn(2, '.');
    let int = parts.next().unwrap_or("");
    let frac = parts.next();
    if int.is_empty() && frac.map_or(true, str::is_empty) {
        return false;
    }
    int.chars().all(|c| c.is_ascii_digit())
        && frac.map_or(true, |f| !f.is_empty() && f.chars().all(|c| c.is_ascii_digit()))
}

/// Remove numbers from a raw token stream, recording each with the
/// position of the word to its left.
pub fn preprocess(raw: &[String]) -> PreprocessedQuestion {
    let mut tokens = Vec::new();
    let mut numbers = Vec::new();
    for tok in raw {
        if is_number_token(tok) {
            numbers.push(QuestionNumber {
                value: tok.parse().expect("checked number token"),
                left_index: tokens.len(),
            });
        } else {
            tokens.push(tok.clone());
        }
    }
    PreprocessedQuestion { tokens, numbers }
}

/// Inverse of [`preprocess`]: interleave the numbers back into the word
/// stream at their recorded positions.
pub fn reconstruct(pq: &PreprocessedQuestion) -> Vec<String> {
    let mut out = Vec::new();
    let mut num_iter = pq.numbers.iter().peekable();
    for (i, tok) in pq.tokens.iter().enumerate() {
        out.push(tok.clone());
        while num_iter.peek().map_or(false, |n| n.left_index == i + 1) {
            out.push(format!("{:.2}", num_iter.next().unwrap().value));
        }
    }
    // numbers that opened the question
    let mut lead: Vec<String> = Vec::new();
    for n in &pq.numbers {
        if n.left_index == 0 {
            lead.push(format!("{:.2}", n.value));
        }
    }
    lead.extend(out);
    lead
}

/// Everything downstream modules need from the question RNN.
pub struct QuestionEncoding {
    /// Question representation, `d x 1`.
    pub q: NodeId,
    /// Forward hidden states `z_1..z_Q`.
    pub states: Vec<NodeId>,
    /// Zero initial state `z_0`.
    pub z0: NodeId,
    /// The extracted numbers (values only, in question order).
    pub numbers: Vec<f64>,
    /// For each number, the state left of it (`z_0` when it opened).
    pub number_states: Vec<NodeId>,
}

impl QuestionEncoding {
    /// Stack the per-number states into the `N x d` matrix used for pivot
    /// attention. `None` when the question has no numbers.
    pub fn number_state_matrix(&self, tape: &mut Tape) -> Result<Option<NodeId>> {
        if self.number_states.is_empty() {
            return Ok(None);
        }
        Ok(Some(tape.stack_rows_from_cols(&self.number_states)?))
    }

    /// Stack every hidden state into a `Q x d` matrix.
    pub fn state_matrix(&self, tape: &mut Tape) -> Result<Option<NodeId>> {
        if self.states.is_empty() {
            return Ok(None);
        }
        Ok(Some(tape.stack_rows_from_cols(&self.states)?))
    }
}

fn rnn_step(
    tape: &mut Tape,
    w: NodeId,
    prev: NodeId,
    embedding: NodeId,
) -> Result<NodeId> {
    let cat = tape.concat_rows(prev, embedding)?;
    let lin = tape.matmul(w, cat)?;
    Ok(tape.tanh_ew(lin))
}

/// Run the question RNN over a preprocessed question.
pub fn encode_question(
    tape: &mut Tape,
    bound: &BoundParams,
    mp: &ModelParams,
    cfg: &ModelConfig,
    vocab: &Vocab,
    pq: &PreprocessedQuestion,
) -> Result<QuestionEncoding> {
    let v = bound.node(mp.embeddings);
    let w_fwd = bound.node(mp.w_question);
    let z0 = tape.zeros_leaf(cfg.d, 1);

    let mut states = Vec::with_capacity(pq.tokens.len());
    let mut prev = z0;
    for tok in &pq.tokens {
        let e = tape.row_as_col(v, vocab.id(tok));
        prev = rnn_step(tape, w_fwd, prev, e)?;
        states.push(prev);
    }
    let q_fwd = *states.last().unwrap_or(&z0);

    let q = if cfg.bidirectional {
        let w_bwd = bound.node(mp.w_question_bwd.expect("bidirectional weights"));
        let w_proj = bound.node(mp.w_bidir.expect("bidirectional projection"));
        let mut back = z0;
        for tok in pq.tokens.iter().rev() {
            let e = tape.row_as_col(v, vocab.id(tok));
            back = rnn_step(tape, w_bwd, back, e)?;
        }
        let cat = tape.concat_rows(q_fwd, back)?;
        let lin = tape.matmul(w_proj, cat)?;
        tape.tanh_ew(lin)
    } else {
        q_fwd
    };

    let number_states = pq
        .numbers
        .iter()
        .map(|n| {
            if n.left_index == 0 {
                z0
            } else {
                states[n.left_index - 1]
            }
        })
        .collect();

    Ok(QuestionEncoding {
        q,
        states,
        z0,
        numbers: pq.numbers.iter().map(|n| n.value).collect(),
        number_states,
    })
}

/// Representations of the column names, stacked into `C x d`. Single-token
/// names use their word embedding; multi-token names run through the
/// question RNN.
pub fn encode_column_names(
    tape: &mut Tape,
    bound: &BoundParams,
    mp: &ModelParams,
    cfg: &ModelConfig,
    vocab: &Vocab,
    names: &[String],
) -> Result<NodeId> {
    let v = bound.node(mp.embeddings);
    let w = bound.node(mp.w_question);
    let mut reps = Vec::with_capacity(names.len());
    for name in names {
        let toks: Vec<&str> = name.split_whitespace().collect();
        if toks.len() <= 1 {
            reps.push(tape.row_as_col(v, vocab.id(name)));
        } else {
            let mut prev = tape.zeros_leaf(cfg.d, 1);
            for t in toks {
                let e = tape.row_as_col(v, vocab.id(t));
                prev = rnn_step(tape, w, prev, e)?;
            }
            reps.push(prev);
        }
    }
    tape.stack_rows_from_cols(&reps)
}

/// Attention over the question states with the history vector as query;
/// returns the context vector `d x 1`.
pub fn attend_question(
    tape: &mut Tape,
    h: NodeId,
    enc: &QuestionEncoding,
    d: usize,
) -> Result<NodeId> {
    let zmat = match enc.state_matrix(tape)? {
        Some(z) => z,
        None => return Ok(tape.zeros_leaf(d, 1)),
    };
    let scores = tape.matmul(zmat, h)?;
    let weights = tape.softmax(scores)?;
    let zt = tape.transpose(zmat);
    tape.matmul(zt, weights)
}
