//! The training loop: shuffled epochs over a fixed example set, soft
//! forward/backward per mini-batch, clipping and noise, Adam updates,
//! periodic hardmax evaluation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::Example;
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, EvalReport, ScoreRule};
use crate::model::{
    init_params, lookup_params, run_stored_example, ModelParams, RunMode,
};
use crate::numerics::GradStore;
use crate::training::checkpoint::{Checkpoint, CHECKPOINT_VERSION};
use crate::training::loss::{example_loss, objective};
use crate::training::optimizer::{noise_and_clip, Adam};
use crate::training::{MetricsRow, TrainConfig};
use crate::vocab::Vocab;

/// Result of a training run.
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub metrics: Vec<MetricsRow>,
    pub final_eval: Option<EvalReport>,
    /// Set when training aborted on a non-finite loss; the checkpoint is
    /// then the last good snapshot.
    pub diverged: bool,
}

/// Evaluation data threaded through training for periodic accuracy checks.
pub struct EvalSet<'a> {
    pub examples: &'a [Example],
    pub seen: Option<&'a [bool]>,
}

/// Train from a fresh initialization.
pub fn train(
    cfg: &TrainConfig,
    train_set: &[Example],
    eval_set: Option<&EvalSet<'_>>,
    run_config: serde_json::Value,
) -> Result<TrainOutcome> {
    if train_set.is_empty() {
        return Err(Error::InvalidConfig("empty training set".into()));
    }
    let model_config = cfg.model_config();
    let vocab = Vocab::closed(crate::dataset::grammar_vocabulary());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (params, _) = init_params(&model_config, &vocab, &mut rng);
    let adam = Adam::new(&params, cfg.adam_epsilon);
    let checkpoint = Checkpoint {
        version: CHECKPOINT_VERSION,
        train_config: cfg.clone(),
        model_config,
        vocab,
        params,
        adam,
        rng,
        run_config,
    };
    run_epochs(checkpoint, cfg.epochs, train_set, eval_set)
}

/// Continue training from a checkpoint for additional epochs. The restored
/// RNG state makes the continuation bit-identical to an uninterrupted run.
pub fn train_continue(
    checkpoint: Checkpoint,
    extra_epochs: usize,
    train_set: &[Example],
    eval_set: Option<&EvalSet<'_>>,
) -> Result<TrainOutcome> {
    run_epochs(checkpoint, extra_epochs, train_set, eval_set)
}

fn run_epochs(
    mut state: Checkpoint,
    epochs: usize,
    train_set: &[Example],
    eval_set: Option<&EvalSet<'_>>,
) -> Result<TrainOutcome> {
    let cfg = state.train_config.clone();
    let mp = lookup_params(&state.model_config, &state.params)?;
    let mut metrics = Vec::new();
    let mut last_good = state.clone();
    let mut final_eval = None;
    let mut stop = false;

    for _epoch in 0..epochs {
        if stop {
            break;
        }
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut state.rng);

        for batch in order.chunks(cfg.batch_size) {
            let step = state.adam.step + 1;
            let mut grads = GradStore::zeros_like(&state.params);
            let mut losses = Vec::with_capacity(batch.len());
            for &idx in batch {
                let ex = &train_set[idx];
                let mut run = run_stored_example(
                    &state.params,
                    &mp,
                    &state.model_config,
                    &state.vocab,
                    ex,
                    RunMode::Soft {
                        tau: Some(cfg.soft_tau),
                    },
                )?;
                let (scalar, lookup) = (run.scalar, run.lookup);
                let loss = example_loss(
                    &mut run.tape,
                    scalar,
                    lookup,
                    &ex.answer,
                    cfg.huber_delta,
                    cfg.lambda,
                )?;
                losses.push(run.tape.scalar(loss));
                run.tape.backward(loss);
                run.bound
                    .collect_grads(&run.tape, &mut grads, 1.0 / batch.len() as f64)?;
            }
            let train_loss = objective(&losses);
            if !train_loss.is_finite() || !grads.all_finite() {
                return Ok(TrainOutcome {
                    checkpoint: last_good,
                    metrics,
                    final_eval,
                    diverged: true,
                });
            }
            let (grad_norm, noise_std) = noise_and_clip(
                &mut grads,
                step,
                cfg.clip_threshold,
                cfg.gradient_noise,
                &mut state.rng,
            )?;
            state.adam.step(&mut state.params, &grads)?;

            let mut row = MetricsRow {
                step: state.adam.step,
                train_loss,
                eval_accuracy: None,
                grad_norm,
                noise_std,
            };
            if let Some(es) = eval_set {
                if cfg.eval_every > 0 && state.adam.step % cfg.eval_every as u64 == 0 {
                    let report = eval_now(&state, &mp, es)?;
                    row.eval_accuracy = Some(report.accuracy);
                    last_good = state.clone();
                    let reached = cfg
                        .stop_at_accuracy
                        .map_or(false, |t| report.accuracy >= t);
                    final_eval = Some(report);
                    if reached {
                        metrics.push(row);
                        stop = true;
                        break;
                    }
                }
            }
            metrics.push(row);
        }

        if !stop {
            if let Some(es) = eval_set {
                let report = eval_now(&state, &mp, es)?;
                if let Some(last) = metrics.last_mut() {
                    last.eval_accuracy = Some(report.accuracy);
                }
                last_good = state.clone();
                if cfg.stop_at_accuracy.map_or(false, |t| report.accuracy >= t) {
                    stop = true;
                }
                final_eval = Some(report);
            }
        }
    }

    Ok(TrainOutcome {
        checkpoint: state,
        metrics,
        final_eval,
        diverged: false,
    })
}

fn eval_now(state: &Checkpoint, mp: &ModelParams, es: &EvalSet<'_>) -> Result<EvalReport> {
    evaluate(
        &state.params,
        mp,
        &state.model_config,
        &state.vocab,
        es.examples,
        es.seen,
        ScoreRule::FirstDecimal,
    )
}
