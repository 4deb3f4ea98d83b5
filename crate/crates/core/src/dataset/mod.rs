//! Synthetic question/table/answer triples: grammar, sampling, discrete
//! oracle and JSONL persistence.

pub mod io;
pub mod oracle;
pub mod sample;
pub mod templates;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ops::OpKind;

/// Values of one table column; a column is entirely numeric or entirely text.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "values", rename_all = "lowercase")]
pub enum ColumnValues {
    Numeric(Vec<f64>),
    Text(Vec<String>),
}

impl ColumnValues {
    pub fn len(&self) -> usize {
        match self {
            ColumnValues::Numeric(v) => v.len(),
            ColumnValues::Text(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self, ColumnValues::Numeric(_))
    }
}

/// A named column of a table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    #[serde(flatten)]
    pub values: ColumnValues,
}

/// The data source: `M` rows by `C` named columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableInstance {
    pub rows: usize,
    pub columns: Vec<Column>,
}

impl TableInstance {
    pub fn validate(&self) -> Result<()> {
        for c in &self.columns {
            if c.values.len() != self.rows {
                return Err(Error::InvalidConfig(format!(
                    "column {} has {} values, table has {} rows",
                    c.name,
                    c.values.len(),
                    self.rows
                )));
            }
            if let ColumnValues::Numeric(v) = &c.values {
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::InvalidConfig(format!(
                        "column {} contains a non-finite cell",
                        c.name
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn col_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn num_columns(&self) -> usize {
        self.columns.len()
    }
}

/// A number extracted from a question, with the position (in the
/// number-free token sequence) of the word to its left. `left_index == 0`
/// means the number opened the question.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuestionNumber {
    pub value: f64,
    pub left_index: usize,
}

/// Final answer of an example.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Answer {
    Scalar { scalar: f64 },
    Lookup { mask: Vec<Vec<u8>> },
}

/// One step of a gold program: an operation and, when the operation acts
/// on a column, the column name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoldStep {
    pub op: OpKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub col: Option<String>,
}

impl GoldStep {
    pub fn new(op: OpKind) -> Self {
        GoldStep { op, col: None }
    }

    pub fn on(op: OpKind, col: &str) -> Self {
        GoldStep {
            op,
            col: Some(col.to_string()),
        }
    }
}

/// One question/table/answer triple, with its template and gold program.
/// `question` holds the raw tokens (numbers rendered inline); `numbers`
/// holds the preprocessed extraction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub template_id: String,
    pub question: Vec<String>,
    pub numbers: Vec<QuestionNumber>,
    pub table: TableInstance,
    pub answer: Answer,
    pub gold_program: Vec<GoldStep>,
}

pub use io::{read_examples, write_examples, DatasetManifest};
pub use oracle::execute_hard_program;
pub use sample::{build_dataset, sample_example, split_templates, Dataset, Phase, TemplateSplit};
pub use templates::{
    enumerate_templates, grammar_vocabulary, AnswerKind, Category, GrammarConfig, QuestionTemplate,
    TaskKind, TemplateTok,
};
