//! SGD training loop with validation checkpointing.

mod checkpoint;
mod experiment;
mod optim;

use std::path::PathBuf;
use std::time::Instant;

pub use checkpoint::{
    format_key_values, load_checkpoint, parse_key_values, save_checkpoint, sidecar_path,
    Checkpoint, SIDECAR_EXT, WEIGHTS_EXT,
};
pub use experiment::{configure_experiment, transfer_trunk, Experiment, ExperimentSetup};
pub use optim::{lr_schedule, sgd_step, Hyperparams, Optimizer};

use crate::arch::{Mode, NetworkGraph, Op};
use crate::data::{epoch_plan, AugmentationSpec, Dataset, Split};
use crate::error::{Error, Result};
use crate::eval::{accuracy, predict};
use crate::ops::softmax_cross_entropy;
use crate::seed;

pub const DEFAULT_EPOCHS: usize = 20;
pub const DEFAULT_BATCH: usize = 32;
pub const DEFAULT_DROP_FACTOR: f32 = 0.8;
pub const DEFAULT_DROP_PERIOD: usize = 5;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub hyperparams: Hyperparams,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_drop_factor: f32,
    pub lr_drop_period: usize,
    pub seed: u64,
    pub experiment: Experiment,
    pub augmentation: AugmentationSpec,
    /// Where the best-validation weights are written; sidecar sits beside it.
    pub checkpoint: Option<PathBuf>,
    /// Recompute batch-norm running statistics from the train originals
    /// after every epoch, so validation sees statistics of the final weights.
    pub recalibrate_bn: bool,
}

impl TrainConfig {
    pub fn new(experiment: Experiment, hyperparams: Hyperparams, seed: u64) -> Self {
        TrainConfig {
            hyperparams,
            epochs: DEFAULT_EPOCHS,
            batch_size: DEFAULT_BATCH,
            lr_drop_factor: DEFAULT_DROP_FACTOR,
            lr_drop_period: DEFAULT_DROP_PERIOD,
            seed,
            experiment,
            augmentation: AugmentationSpec::new(seed::derive(seed, &[0x4155_4730])),
            checkpoint: None,
            recalibrate_bn: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.hyperparams.validate()?;
        if self.epochs == 0 || self.batch_size == 0 || self.lr_drop_period == 0 {
            return Err(Error::Config(
                "epochs, batch size and drop period must be positive".into(),
            ));
        }
        if !(self.lr_drop_factor > 0.0 && self.lr_drop_factor <= 1.0) {
            return Err(Error::Config(format!(
                "lr drop factor {} outside (0, 1]",
                self.lr_drop_factor
            )));
        }
        self.augmentation.validate()
    }

    pub fn learning_rate(&self, epoch: usize) -> f32 {
        lr_schedule(
            epoch,
            self.hyperparams.learning_rate,
            self.lr_drop_factor,
            self.lr_drop_period,
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    pub learning_rate: f32,
    pub train_loss: f32,
    pub train_accuracy: f32,
    pub val_accuracy: f32,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    /// 1-based epoch with the highest validation accuracy (earliest on ties).
    pub best_epoch: usize,
    pub best_val_accuracy: f32,
    pub checkpoint: Option<PathBuf>,
}

impl TrainReport {
    pub fn train_losses(&self) -> Vec<f32> {
        self.epochs.iter().map(|e| e.train_loss).collect()
    }

    pub fn val_accuracies(&self) -> Vec<f32> {
        self.epochs.iter().map(|e| e.val_accuracy).collect()
    }
}

pub fn train(g: &mut NetworkGraph, data: &Dataset, cfg: &TrainConfig) -> Result<TrainReport> {
    train_with(g, data, cfg, |_| {})
}

/// Runs the epoch loop; `g` holds the best-validation weights on return.
pub fn train_with(
    g: &mut NetworkGraph,
    data: &Dataset,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainReport> {
    cfg.validate()?;
    let input = g.input_shape();
    if input.h != data.size || input.w != data.size {
        return Err(Error::shape(
            "training data",
            "image extent",
            input.h,
            data.size,
        ));
    }
    let train_idx = data.indices(Split::Train);
    let val_idx = data.indices(Split::Validation);
    if train_idx.is_empty() {
        return Err(Error::Empty("no train rows in manifest".into()));
    }
    if val_idx.is_empty() {
        return Err(Error::Empty("no validation rows in manifest".into()));
    }
    let val_labels: Vec<usize> = val_idx.iter().map(|&i| data.label(i)).collect();

    let mut optimizer = Optimizer::new(g);
    let mut stats = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f32, NetworkGraph)> = None;

    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        let lr = cfg.learning_rate(epoch);
        let plan = epoch_plan(train_idx.len(), epoch, &cfg.augmentation);
        let mut loss_sum = 0.0f64;
        let mut correct = 0usize;
        for (b, chunk) in plan.chunks(cfg.batch_size).enumerate() {
            let batch = data.augmented_batch(&train_idx, chunk, epoch, &cfg.augmentation)?;
            let trace = g.forward_train(&batch.images)?;
            let logits = trace.output(g.logits_index()).expect("logits retained");
            let (loss, dlogits) = softmax_cross_entropy(logits, &batch.labels)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "loss at epoch {epoch}, batch {}",
                    b + 1
                )));
            }
            let k = logits.shape().c;
            correct += batch
                .labels
                .iter()
                .enumerate()
                .filter(|&(n, &y)| argmax(&logits.data()[n * k..(n + 1) * k]) == y)
                .count();
            loss_sum += loss as f64 * chunk.len() as f64;
            let grads = g.backward(trace, &dlogits)?;
            if !grads.is_finite() {
                return Err(Error::NonFinite(format!(
                    "gradient at epoch {epoch}, batch {}",
                    b + 1
                )));
            }
            optimizer.step(g, &grads, &cfg.hyperparams, lr)?;
        }

        if cfg.recalibrate_bn {
            recalibrate_batch_norm(g, data, &train_idx, cfg.batch_size)?;
        }
        let probs = predict(g, data, &val_idx, cfg.batch_size)?;
        let val_accuracy = accuracy(&probs, &val_labels);
        let s = EpochStats {
            epoch,
            learning_rate: lr,
            train_loss: (loss_sum / plan.len() as f64) as f32,
            train_accuracy: correct as f32 / plan.len() as f32,
            val_accuracy,
            seconds: started.elapsed().as_secs_f64(),
        };
        on_epoch(&s);
        if best
            .as_ref()
            .map_or(true, |(_, acc, _)| val_accuracy > *acc)
        {
            if let Some(path) = &cfg.checkpoint {
                save_checkpoint(g, &data.norm, &sidecar(cfg, g, &s), path)?;
            }
            best = Some((epoch, val_accuracy, g.clone()));
        }
        stats.push(s);
    }

    let (best_epoch, best_val_accuracy, best_graph) = best.expect("at least one epoch");
    *g = best_graph;
    Ok(TrainReport {
        epochs: stats,
        best_epoch,
        best_val_accuracy,
        checkpoint: cfg.checkpoint.clone(),
    })
}

/// Replaces every batch-norm running mean and variance with the sample-weighted
/// average of the batch statistics over `indices`, using the current weights.
pub fn recalibrate_batch_norm(
    g: &mut NetworkGraph,
    data: &Dataset,
    indices: &[usize],
    batch_size: usize,
) -> Result<()> {
    let saved: Vec<(usize, f32)> = g
        .nodes()
        .iter()
        .enumerate()
        .filter_map(|(i, n)| match &n.op {
            Op::BatchNorm(p) => Some((i, p.momentum_stat)),
            _ => None,
        })
        .collect();
    if saved.is_empty() || indices.is_empty() {
        return Ok(());
    }
    let set_momentum = |g: &mut NetworkGraph, m: &dyn Fn(f32) -> f32| {
        for &(i, old) in &saved {
            if let Op::BatchNorm(p) = &mut g.nodes_mut()[i].op {
                p.momentum_stat = m(old);
            }
        }
    };
    let mut seen = 0usize;
    let mut outcome = Ok(());
    for chunk in indices.chunks(batch_size.max(1)) {
        // keep seen/(seen+n) of the old value: a running sample-weighted mean
        let keep = seen as f32 / (seen + chunk.len()) as f32;
        set_momentum(g, &|_| keep);
        outcome = data
            .batch(chunk)
            .and_then(|b| g.forward(&b.images, Mode::Train).map(|_| ()));
        if outcome.is_err() {
            break;
        }
        seen += chunk.len();
    }
    set_momentum(g, &|old| old);
    outcome
}

fn sidecar(cfg: &TrainConfig, g: &NetworkGraph, s: &EpochStats) -> Vec<(String, String)> {
    let hp = &cfg.hyperparams;
    [
        ("experiment", cfg.experiment.to_string()),
        ("arch", g.variant().to_string()),
        ("epoch", s.epoch.to_string()),
        ("val_accuracy", s.val_accuracy.to_string()),
        ("train_loss", s.train_loss.to_string()),
        ("train_accuracy", s.train_accuracy.to_string()),
        ("learning_rate", hp.learning_rate.to_string()),
        ("momentum", hp.momentum.to_string()),
        ("l2", hp.l2.to_string()),
        ("epochs", cfg.epochs.to_string()),
        ("batch_size", cfg.batch_size.to_string()),
        ("seed", cfg.seed.to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

pub(crate) fn argmax(v: &[f32]) -> usize {
    v.iter()
        .enumerate()
        .fold(0, |best, (i, &x)| if x > v[best] { i } else { best })
}
