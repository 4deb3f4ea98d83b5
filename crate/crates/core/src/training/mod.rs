//! Losses, the combined objective, Adam with clipping and annealed
//! gradient noise, the training loop and checkpointing.

pub mod checkpoint;
pub mod loss;
pub mod optimizer;
pub mod trainer;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::ModelConfig;

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use loss::{example_loss, lookup_loss, objective, scalar_loss};
pub use optimizer::{noise_and_clip, noise_std, Adam};
pub use trainer::{train, train_continue, EvalSet, TrainOutcome};

/// Hyper-parameter grids searched in the reference experiments.
pub const HUBER_DELTA_GRID: [f64; 3] = [10.0, 25.0, 50.0];
pub const LAMBDA_GRID: [f64; 4] = [25.0, 50.0, 75.0, 100.0];
pub const CLIP_GRID: [f64; 3] = [1.0, 5.0, 50.0];
pub const ADAM_EPSILON_GRID: [f64; 2] = [1e-6, 1e-8];

/// Everything a training run needs beyond the data itself.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub d: usize,
    /// Execution steps `T`.
    pub steps: usize,
    pub batch_size: usize,
    pub huber_delta: f64,
    /// Weight of the lookup loss relative to the scalar loss.
    pub lambda: f64,
    pub adam_epsilon: f64,
    pub clip_threshold: f64,
    pub gradient_noise: bool,
    /// Width of the sigmoid relaxation of the comparisons during training.
    pub soft_tau: f64,
    pub seed: u64,
    pub epochs: usize,
    /// Optimizer steps between hardmax evaluations (0 = at epoch ends only).
    pub eval_every: usize,
    /// Stop early once evaluation accuracy reaches this value.
    pub stop_at_accuracy: Option<f64>,
    pub bidirectional: bool,
    pub question_attention: bool,
    pub text_match: bool,
}

impl TrainConfig {
    pub fn new(d: usize, seed: u64) -> Self {
        TrainConfig {
            d,
            steps: 4,
            batch_size: 50,
            huber_delta: 10.0,
            lambda: 25.0,
            adam_epsilon: 1e-6,
            clip_threshold: 5.0,
            gradient_noise: true,
            soft_tau: 5.0,
            seed,
            epochs: 30,
            eval_every: 0,
            stop_at_accuracy: None,
            bidirectional: false,
            question_attention: false,
            text_match: false,
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            d: self.d,
            steps: self.steps,
            text_match: self.text_match,
            bidirectional: self.bidirectional,
            question_attention: self.question_attention,
        }
    }
}

/// One line of the training metrics log.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: u64,
    pub train_loss: f64,
    pub eval_accuracy: Option<f64>,
    pub grad_norm: f64,
    pub noise_std: f64,
}

/// Write the metrics log as CSV.
pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "step,train_loss,eval_accuracy,grad_norm,noise_std")?;
    for r in rows {
        let acc = r
            .eval_accuracy
            .map(|a| format!("{a}"))
            .unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{}",
            r.step, r.train_loss, acc, r.grad_norm, r.noise_std
        )?;
    }
    w.flush()?;
    Ok(())
}
