//! JSONL persistence for examples and the dataset manifest.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::templates::TaskKind;
use crate::dataset::{Answer, Example};
use crate::error::{Error, Result};

/// Write one example per line.
pub fn write_examples(path: &Path, examples: &[Example]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for ex in examples {
        serde_json::to_writer(&mut w, ex)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Read a JSONL example file, validating table shape and finiteness.
/// Malformed lines report their (1-based) line number.
pub fn read_examples(path: &Path) -> Result<Vec<Example>> {
    let r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ex: Example = serde_json::from_str(&line).map_err(|e| Error::DataFormat {
            line: idx + 1,
            msg: e.to_string(),
        })?;
        validate_example(&ex).map_err(|e| Error::DataFormat {
            line: idx + 1,
            msg: e.to_string(),
        })?;
        out.push(ex);
    }
    Ok(out)
}

fn validate_example(ex: &Example) -> Result<()> {
    ex.table.validate()?;
    for n in &ex.numbers {
        if !n.value.is_finite() {
            return Err(Error::InvalidConfig("non-finite question number".into()));
        }
    }
    match &ex.answer {
        Answer::Scalar { scalar } => {
            if !scalar.is_finite() {
                return Err(Error::InvalidConfig("non-finite scalar answer".into()));
            }
        }
        Answer::Lookup { mask } => {
            if mask.len() != ex.table.rows
                || mask.iter().any(|r| r.len() != ex.table.num_columns())
            {
                return Err(Error::InvalidConfig("lookup mask shape mismatch".into()));
            }
        }
    }
    Ok(())
}

/// Summary written next to generated datasets; embeds the exact run
/// configuration that produced them.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub run_config: serde_json::Value,
    pub task: TaskKind,
    pub max_columns: usize,
    pub seed: u64,
    pub train_size: usize,
    pub test_size: usize,
    pub test_templates: usize,
    /// Fraction of distinct test templates observed during training.
    pub seen_fraction: f64,
    /// Per test example (aligned with the test JSONL), whether its
    /// template was seen in training.
    pub test_seen: Vec<bool>,
    pub train_path: String,
    pub test_path: String,
}

impl DatasetManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    }
}
