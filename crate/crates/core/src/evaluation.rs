//! Hardmax inference, scoring, aggregate reports and trace dumps.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{Answer, Example};
use crate::error::Result;
use crate::model::{run_stored_example, ModelConfig, ModelParams, RunMode, TraceStep};
use crate::numerics::ParamStore;
use crate::ops::OpKind;
use crate::vocab::Vocab;

/// Lookup cells at or above this probability count as selected.
pub const LOOKUP_THRESHOLD: f64 = 0.5;

/// How scalar predictions are compared to the gold answer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScoreRule {
    /// Agreement to the first decimal place as |pred - gold| < 0.05.
    FirstDecimal,
    /// Both values formatted to one decimal and compared as strings.
    RoundedString,
}

impl Default for ScoreRule {
    fn default() -> Self {
        ScoreRule::FirstDecimal
    }
}

/// Model output for one example.
#[derive(Clone, Debug)]
pub struct Prediction {
    pub answer: Answer,
    pub trace: Vec<TraceStep>,
    pub pivot_greater: f64,
    pub pivot_lesser: f64,
    pub final_op: OpKind,
}

/// Hardmax inference on one example. The answer kind follows the operation
/// selected at the final step: Assign yields a lookup, the scalar
/// operations yield the scalar answer, anything else degenerates to the
/// scalar answer.
pub fn predict(
    params: &ParamStore,
    mp: &ModelParams,
    cfg: &ModelConfig,
    vocab: &Vocab,
    example: &Example,
) -> Result<Prediction> {
    let run = run_stored_example(params, mp, cfg, vocab, example, RunMode::Hard)?;
    let answer = match run.final_op {
        OpKind::Assign => {
            let lookup = run.tape.value(run.lookup);
            let mask = (0..lookup.rows())
                .map(|i| {
                    (0..lookup.cols())
                        .map(|j| u8::from(lookup.get(i, j) >= LOOKUP_THRESHOLD))
                        .collect()
                })
                .collect();
            Answer::Lookup { mask }
        }
        _ => Answer::Scalar {
            scalar: run.tape.scalar(run.scalar),
        },
    };
    Ok(Prediction {
        answer,
        trace: run.trace,
        pivot_greater: run.pivot_greater,
        pivot_lesser: run.pivot_lesser,
        final_op: run.final_op,
    })
}

/// Is a prediction correct? Scalar answers compare to the first decimal
/// place; lookup answers must match the gold mask exactly; a kind mismatch
/// is always wrong.
pub fn score(pred: &Answer, gold: &Answer, rule: ScoreRule) -> bool {
    match (pred, gold) {
        (Answer::Scalar { scalar: a }, Answer::Scalar { scalar: b }) => match rule {
            ScoreRule::FirstDecimal => (a - b).abs() < 0.05,
            ScoreRule::RoundedString => format!("{a:.1}") == format!("{b:.1}"),
        },
        (Answer::Lookup { mask: a }, Answer::Lookup { mask: b }) => a == b,
        _ => false,
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SliceAccuracy {
    pub total: usize,
    pub correct: usize,
}

impl SliceAccuracy {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            f64::NAN
        } else {
            self.correct as f64 / self.total as f64
        }
    }

    fn add(&mut self, ok: bool) {
        self.total += 1;
        if ok {
            self.correct += 1;
        }
    }
}

/// One mis-predicted example, kept with its trace for error analysis.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ErrorCase {
    pub template_id: String,
    pub question: String,
    pub trace: Vec<String>,
    pub uses_difference: bool,
}

/// Aggregate evaluation results.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalReport {
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub by_template: BTreeMap<String, SliceAccuracy>,
    pub seen: SliceAccuracy,
    pub unseen: SliceAccuracy,
    /// Errors whose gold program requires the difference operation.
    pub difference_errors: usize,
    pub errors: Vec<ErrorCase>,
}

const MAX_REPORTED_ERRORS: usize = 50;

/// Score a whole test set. `seen` flags (when provided) must align with
/// `examples`; they drive the seen/unseen breakdown.
pub fn evaluate(
    params: &ParamStore,
    mp: &ModelParams,
    cfg: &ModelConfig,
    vocab: &Vocab,
    examples: &[Example],
    seen: Option<&[bool]>,
    rule: ScoreRule,
) -> Result<EvalReport> {
    let mut report = EvalReport {
        total: 0,
        correct: 0,
        accuracy: 0.0,
        by_template: BTreeMap::new(),
        seen: SliceAccuracy::default(),
        unseen: SliceAccuracy::default(),
        difference_errors: 0,
        errors: Vec::new(),
    };
    for (i, ex) in examples.iter().enumerate() {
        let pred = predict(params, mp, cfg, vocab, ex)?;
        let ok = score(&pred.answer, &ex.answer, rule);
        report.total += 1;
        if ok {
            report.correct += 1;
        }
        report
            .by_template
            .entry(ex.template_id.clone())
            .or_default()
            .add(ok);
        if let Some(flags) = seen {
            if flags[i] {
                report.seen.add(ok);
            } else {
                report.unseen.add(ok);
            }
        }
        if !ok {
            let uses_difference = ex
                .gold_program
                .iter()
                .any(|s| s.op == OpKind::Difference);
            if uses_difference {
                report.difference_errors += 1;
            }
            if report.errors.len() < MAX_REPORTED_ERRORS {
                report.errors.push(ErrorCase {
                    template_id: ex.template_id.clone(),
                    question: ex.question.join(" "),
                    trace: trace_lines(&pred),
                    uses_difference,
                });
            }
        }
    }
    report.accuracy = if report.total == 0 {
        0.0
    } else {
        report.correct as f64 / report.total as f64
    };
    Ok(report)
}

fn summarize_row_select(row: &[f64]) -> String {
    let m = row.len();
    if row.iter().all(|v| v.abs() < 1e-9) {
        return format!("[0]^{m}");
    }
    if row.iter().all(|v| (v - 1.0).abs() < 1e-9) {
        return format!("[1]^{m}");
    }
    let on = row.iter().filter(|v| **v >= 0.5).count();
    format!("{on} of {m} rows")
}

fn trace_lines(pred: &Prediction) -> Vec<String> {
    pred.trace
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let col = if s.op.takes_column() {
                s.col_name.as_str()
            } else {
                "-"
            };
            format!(
                "t={} op={} col={} rows={}",
                i + 1,
                s.op,
                col,
                summarize_row_select(&s.row_select)
            )
        })
        .collect()
}

/// Write a human-readable per-step trace table for one example.
pub fn dump_trace(example: &Example, pred: &Prediction, w: &mut impl Write) -> Result<()> {
    writeln!(w, "question: {}", example.question.join(" "))?;
    writeln!(
        w,
        "pivot_g: {:.2}  pivot_l: {:.2}",
        pred.pivot_greater, pred.pivot_lesser
    )?;
    writeln!(w, "{:>2}  {:<10} {:<7} {}", "t", "op", "column", "row select")?;
    for (i, s) in pred.trace.iter().enumerate() {
        let col = if s.op.takes_column() {
            s.col_name.as_str()
        } else {
            "-"
        };
        writeln!(
            w,
            "{:>2}  {:<10} {:<7} {}",
            i + 1,
            s.op.to_string(),
            col,
            summarize_row_select(&s.row_select)
        )?;
    }
    match &pred.answer {
        Answer::Scalar { scalar } => writeln!(w, "answer: {scalar}")?,
        Answer::Lookup { mask } => {
            let on: usize = mask.iter().flatten().map(|v| *v as usize).sum();
            writeln!(w, "answer: lookup with {on} selected cells")?;
        }
    }
    Ok(())
}

/// [`dump_trace`] to a file path.
pub fn dump_trace_to_path(example: &Example, pred: &Prediction, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    dump_trace(example, pred, &mut f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_decimal_rule() {
        let gold = Answer::Scalar { scalar: 10.0 };
        assert!(score(&Answer::Scalar { scalar: 10.04 }, &gold, ScoreRule::FirstDecimal));
        assert!(!score(&Answer::Scalar { scalar: 10.06 }, &gold, ScoreRule::FirstDecimal));
    }

    #[test]
    fn rounded_string_rule() {
        let gold = Answer::Scalar { scalar: 10.0 };
        assert!(score(&Answer::Scalar { scalar: 10.04 }, &gold, ScoreRule::RoundedString));
        assert!(!score(&Answer::Scalar { scalar: 10.06 }, &gold, ScoreRule::RoundedString));
    }

    #[test]
    fn lookup_must_match_exactly() {
        let gold = Answer::Lookup {
            mask: vec![vec![1, 0], vec![0, 0]],
        };
        let one_off = Answer::Lookup {
            mask: vec![vec![1, 0], vec![0, 1]],
        };
        assert!(score(&gold.clone(), &gold, ScoreRule::FirstDecimal));
        assert!(!score(&one_off, &gold, ScoreRule::FirstDecimal));
    }

    #[test]
    fn kind_mismatch_is_wrong() {
        let s = Answer::Scalar { scalar: 1.0 };
        let l = Answer::Lookup { mask: vec![vec![1]] };
        assert!(!score(&s, &l, ScoreRule::FirstDecimal));
        assert!(!score(&l, &s, ScoreRule::FirstDecimal));
    }

    #[test]
    fn row_select_summaries() {
        assert_eq!(summarize_row_select(&[0.0, 0.0]), "[0]^2");
        assert_eq!(summarize_row_select(&[1.0, 1.0, 1.0]), "[1]^3");
        assert_eq!(summarize_row_select(&[1.0, 0.0, 0.9]), "2 of 3 rows");
    }
}
