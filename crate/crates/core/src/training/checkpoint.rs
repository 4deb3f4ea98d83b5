//! Versioned binary checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   8 bytes  b"NPCKPT01"
//! u64     header length in bytes
//! header  JSON: version, train/model configs, vocab, RNG state,
//!         optimizer step/epsilon, run_config, parameter names + shapes
//! arrays  for each parameter in header order: rows*cols f64 LE values,
//!         then the Adam first moments, then the second moments,
//!         in the same order and shapes
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::numerics::{Matrix, ParamStore};
use crate::training::optimizer::Adam;
use crate::training::TrainConfig;
use crate::vocab::Vocab;

const MAGIC: &[u8; 8] = b"NPCKPT01";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything needed to resume training or run inference.
#[derive(Clone)]
pub struct Checkpoint {
    pub version: u32,
    pub train_config: TrainConfig,
    pub model_config: ModelConfig,
    pub vocab: Vocab,
    pub params: ParamStore,
    pub adam: Adam,
    pub rng: ChaCha8Rng,
    /// The full run configuration that produced this artifact.
    pub run_config: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    train_config: TrainConfig,
    model_config: ModelConfig,
    vocab: Vocab,
    rng: ChaCha8Rng,
    adam_step: u64,
    adam_epsilon: f64,
    run_config: serde_json::Value,
    param_names: Vec<String>,
    param_shapes: Vec<(usize, usize)>,
}

fn write_matrix(w: &mut impl Write, m: &Matrix) -> Result<()> {
    for v in m.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_matrix(r: &mut impl Read, rows: usize, cols: usize) -> Result<Matrix> {
    let mut data = vec![0.0; rows * cols];
    let mut buf = [0u8; 8];
    for v in &mut data {
        r.read_exact(&mut buf)?;
        *v = f64::from_le_bytes(buf);
    }
    Matrix::from_vec(rows, cols, data)
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let names: Vec<String> = self
            .params
            .ids()
            .map(|id| self.params.name(id).to_string())
            .collect();
        let shapes: Vec<(usize, usize)> = self
            .params
            .ids()
            .map(|id| self.params.get(id).shape())
            .collect();
        let header = Header {
            version: self.version,
            train_config: self.train_config.clone(),
            model_config: self.model_config.clone(),
            vocab: self.vocab.clone(),
            rng: self.rng.clone(),
            adam_step: self.adam.step,
            adam_epsilon: self.adam.epsilon,
            run_config: self.run_config.clone(),
            param_names: names,
            param_shapes: shapes,
        };
        let header_bytes = serde_json::to_vec(&header)?;

        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_all(&(header_bytes.len() as u64).to_le_bytes())?;
        w.write_all(&header_bytes)?;
        for id in self.params.ids() {
            write_matrix(&mut w, self.params.get(id))?;
        }
        for m in self.adam.m.iter() {
            write_matrix(&mut w, m)?;
        }
        for v in self.adam.v.iter() {
            write_matrix(&mut w, v)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file".into()));
        }
        let mut len_bytes = [0u8; 8];
        r.read_exact(&mut len_bytes)?;
        let header_len = u64::from_le_bytes(len_bytes) as usize;
        let mut header_bytes = vec![0u8; header_len];
        r.read_exact(&mut header_bytes)?;
        let mut header: Header = serde_json::from_slice(&header_bytes)
            .map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
        if header.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {}",
                header.version
            )));
        }
        header.vocab.rebuild_index();

        let mut params = ParamStore::new();
        for (name, (rows, cols)) in header.param_names.iter().zip(&header.param_shapes) {
            params.insert(name, read_matrix(&mut r, *rows, *cols)?);
        }
        let mut adam = Adam::new(&params, header.adam_epsilon);
        adam.step = header.adam_step;
        for m in adam.m.iter_mut() {
            *m = read_matrix(&mut r, m.rows(), m.cols())?;
        }
        for v in adam.v.iter_mut() {
            *v = read_matrix(&mut r, v.rows(), v.cols())?;
        }
        if !params.all_finite() {
            return Err(Error::Checkpoint("non-finite parameter".into()));
        }
        Ok(Checkpoint {
            version: header.version,
            train_config: header.train_config,
            model_config: header.model_config,
            vocab: header.vocab,
            params,
            adam,
            rng: header.rng,
            run_config: header.run_config,
        })
    }
}
