//! Optimizing the classifier: warm-up + cosine schedule, AdamW, early
//! stopping on validation accuracy, and checkpoints.

mod adamw;
mod checkpoint;
mod early;
mod sample;
mod schedule;

pub use adamw::{adamw_step, adamw_update, AdamHyper, AdamState};
pub use checkpoint::{Checkpoint, CheckpointConfig, MAGIC};
pub use early::EarlyStopping;
pub use sample::{full_seconds, prepare_sample, PreparedSample, RoundSet, RoundView};
pub use schedule::{lr_at, LrSchedule};

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Split;
use crate::error::{Error, Result};
use crate::eval::{accuracy_curve, predict_rounds};
use crate::fusion::EventVocab;
use crate::model::{sample_loss, ClipMode, ModelConfig, ModelWeights};
use crate::rng::{mix64, SeededRng};
use crate::tensor::{Tensor, TensorError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr_max: f64,
    pub lr_min: f64,
    pub weight_decay: f64,
    pub warmup_steps: u64,
    /// Defaults to `max_epochs × steps per epoch`.
    pub total_steps: Option<u64>,
    pub betas: (f64, f64),
    pub adam_eps: f64,
    pub batch_size: usize,
    /// Epochs without a strict validation improvement before stopping.
    pub patience: usize,
    pub max_epochs: usize,
    /// `(round, t)` samples per epoch; defaults to the number of train rounds.
    pub samples_per_epoch: Option<usize>,
    pub seed: u64,
    /// Feed tactical events through the fusion path (Model B) or not (Model A).
    pub events_enabled: bool,
    pub clip_mode: ClipMode,
    /// Validate every `val_stride_s`-th second of each round.
    pub val_stride_s: usize,
    /// Use only the first `n` validation rounds.
    pub val_rounds: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_max: 1e-4,
            lr_min: 0.0,
            weight_decay: 1e-4,
            warmup_steps: 5000,
            total_steps: None,
            betas: (0.9, 0.999),
            adam_eps: 1e-8,
            batch_size: 16,
            patience: 30,
            max_epochs: 100,
            samples_per_epoch: None,
            seed: 0,
            events_enabled: false,
            clip_mode: ClipMode::UniformHistory,
            val_stride_s: 1,
            val_rounds: None,
        }
    }
}

impl TrainConfig {
    pub fn steps_per_epoch(&self, n_train: usize) -> u64 {
        self.samples_per_epoch.unwrap_or(n_train).div_ceil(self.batch_size) as u64
    }

    /// The schedule for a training split of `n_train` rounds.
    pub fn schedule(&self, n_train: usize) -> Result<LrSchedule> {
        let total = self.total_steps.unwrap_or(self.max_epochs as u64 * self.steps_per_epoch(n_train));
        if self.warmup_steps >= total {
            return Err(Error::Config(format!("warmup_steps ({}) must be below total_steps ({total})", self.warmup_steps)));
        }
        Ok(LrSchedule { lr_max: self.lr_max, lr_min: self.lr_min, warmup_steps: self.warmup_steps, total_steps: total })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.val_stride_s == 0 {
            return bad("batch_size, max_epochs and val_stride_s must be positive");
        }
        if self.samples_per_epoch == Some(0) {
            return bad("samples_per_epoch must be positive");
        }
        if !(self.lr_max >= 0.0 && self.lr_min >= 0.0 && self.lr_min <= self.lr_max) {
            return bad("need 0 ≤ lr_min ≤ lr_max");
        }
        Ok(())
    }

    /// AdamW settings at learning rate `lr`.
    pub fn hyper(&self, lr: f64) -> AdamHyper {
        AdamHyper { lr, beta1: self.betas.0, beta2: self.betas.1, eps: self.adam_eps, weight_decay: self.weight_decay }
    }
}

/// One row of the training history.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
    /// Learning rate of the epoch's last step.
    pub lr: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub best: Checkpoint,
    pub history: Vec<EpochRecord>,
    pub stopped_early: bool,
    /// Steps skipped because a gradient was not finite.
    pub rejected_steps: u64,
}

pub fn write_history_csv(path: &Path, history: &[EpochRecord]) -> Result<()> {
    std::fs::write(path, history_csv(history)).map_err(|e| Error::io(path, e))
}

/// The history as CSV text (`epoch,train_loss,val_accuracy,lr`).
pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in history {
        w.serialize(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory write")).expect("csv is UTF-8")
}

/// Rounds of `split` long enough to yield at least one prediction.
fn usable(set: &RoundSet<'_>, split: Split, fps: usize) -> Vec<usize> {
    (0..set.rounds.len()).filter(|&i| set.rounds[i].split == split && full_seconds(set.rounds[i].n_frames(), fps) >= 1).collect()
}

fn diverged(step: u64) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Tensor(TensorError::NonFinite { .. }) => Error::DivergedLoss { step },
        other => other,
    }
}

/// Loss and parameter gradients of one sample on its own tape.
fn sample_grads(
    weights: &ModelWeights,
    set: &RoundSet<'_>,
    cfg: &TrainConfig,
    (round, t): (usize, usize),
    rng: &mut SeededRng,
    step: u64,
) -> Result<(f64, Vec<Tensor>)> {
    let view = set.round(round);
    let sample = prepare_sample(&weights.config, &weights.vocab, &view, t, cfg.clip_mode, cfg.events_enabled)?;
    let mut tape = crate::tensor::Tape::new();
    let vars = weights.bind(&mut tape, true);
    let target = set.rounds[round].outcome.class_index();
    let loss = sample_loss(&mut tape, weights, &vars, &sample.input(), target, Some(rng)).map_err(diverged(step))?;
    let value = tape.value(loss).data()[0];
    if !value.is_finite() {
        return Err(Error::DivergedLoss { step });
    }
    tape.backward(loss).map_err(|e| diverged(step)(e.into()))?;
    let grads = vars
        .all
        .iter()
        .zip(weights.params.tensors())
        .map(|(&v, p)| tape.grad_tensor(v).unwrap_or_else(|| Tensor::zeros(p.shape())))
        .collect();
    Ok((value, grads))
}

/// Train a fresh model on the train split, validating on the val split after
/// every epoch, and return the checkpoint of the best validation epoch.
///
/// Each batch sample runs on its own tape (in parallel); gradients are summed
/// in sample order, so results do not depend on the thread count.
pub fn train(
    set: &RoundSet<'_>,
    model: &ModelConfig,
    vocab: &EventVocab,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    model.validate()?;
    let fps = model.fps;
    let train_idx = usable(set, Split::Train, fps);
    let mut val_idx = usable(set, Split::Val, fps);
    if train_idx.is_empty() {
        return Err(Error::EmptySplit("train".into()));
    }
    if let Some(n) = cfg.val_rounds {
        val_idx.truncate(n);
    }
    if val_idx.is_empty() {
        return Err(Error::EmptySplit("val".into()));
    }
    let schedule = cfg.schedule(train_idx.len())?;
    let n_samples = cfg.samples_per_epoch.unwrap_or(train_idx.len());

    let mut weights = ModelWeights::init(model, vocab, &mut SeededRng::derive(cfg.seed, 0))?;
    let mut adam = AdamState::zeros_like(weights.params.tensors());
    let mut rng = SeededRng::derive(cfg.seed, 1);
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut history = Vec::new();
    let mut best: Option<Checkpoint> = None;
    let mut step = 0u64;
    let mut rejected = 0u64;
    let mut lr = 0.0;

    for epoch in 1..=cfg.max_epochs {
        // Cycle through fresh shuffles of the train rounds; t is uniform over the round.
        let mut samples = Vec::with_capacity(n_samples);
        while samples.len() < n_samples {
            let mut order = train_idx.clone();
            rng.shuffle(&mut order);
            for i in order.into_iter().take(n_samples - samples.len()) {
                let secs = full_seconds(set.rounds[i].n_frames(), fps);
                samples.push((i, 1 + rng.below(secs)));
            }
        }

        let mut loss_sum = 0.0;
        for batch in samples.chunks(cfg.batch_size) {
            step += 1;
            let seed = mix64(cfg.seed ^ mix64(step));
            let w = &weights;
            let results = batch
                .par_iter()
                .enumerate()
                .map(|(k, &s)| sample_grads(w, set, cfg, s, &mut SeededRng::derive(seed, 2 + k as u64), step))
                .collect::<Result<Vec<_>>>()?;
            let scale = 1.0 / batch.len() as f64;
            let mut grads: Vec<Tensor> = weights.params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
            for (loss, g) in &results {
                loss_sum += loss;
                for (acc, gi) in grads.iter_mut().zip(g) {
                    for (a, b) in acc.data_mut().iter_mut().zip(gi.data()) {
                        *a += b * scale;
                    }
                }
            }
            lr = schedule.at(step);
            match adamw_step(&mut weights.params, &grads, &mut adam, &cfg.hyper(lr)) {
                Ok(()) => {}
                Err(Error::NonFiniteGradient { .. }) => rejected += 1,
                Err(e) => return Err(e),
            }
        }

        let preds = predict_rounds(&weights, set, &val_idx, cfg.clip_mode, cfg.events_enabled, cfg.val_stride_s)?;
        let val_accuracy = accuracy_curve("val", &preds)?.overall;
        let record = EpochRecord { epoch, train_loss: loss_sum / n_samples as f64, val_accuracy, lr };
        on_epoch(&record);
        history.push(record);
        if stopper.observe(epoch, val_accuracy) {
            best = Some(Checkpoint {
                train: cfg.clone(),
                weights: weights.clone(),
                adam: adam.clone(),
                step,
                epoch,
                val_accuracy,
                rng: rng.state(),
            });
        }
        if stopper.should_stop() {
            break;
        }
    }

    let stopped_early = stopper.should_stop();
    let best = best.expect("at least one epoch ran");
    Ok(TrainOutcome { best, history, stopped_early, rejected_steps: rejected })
}
