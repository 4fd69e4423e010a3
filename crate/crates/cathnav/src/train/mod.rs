//! Supervised behavior-cloning loop: Adam with per-epoch cosine annealing,
//! full-validation pass after every epoch, best-checkpoint retention, and
//! patience-based early stopping. Loss is MSE in raw action units.

pub mod batch;
pub mod checkpoint;

pub use batch::{encode_episodes, AssembledBatch, Batcher, EncodedEpisodes};
pub use checkpoint::{apply_params, load_checkpoint, save_checkpoint, CheckpointMeta};

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::nn::{clip_grad_norm, Adam, AdamConfig, TensorMap};
use crate::policy::{CvaPolicy, ForwardOpts, LstmPolicy};

/// Mean squared error over the whole batch and all 3 action dimensions.
pub fn mse_loss(pred: &Array2<f64>, target: &Array2<f64>) -> Result<f64> {
    if pred.dim() != target.dim() {
        return Err(Error::ShapeMismatch(format!(
            "mse shapes {:?} vs {:?}",
            pred.dim(),
            target.dim()
        )));
    }
    let n = (pred.nrows() * pred.ncols()) as f64;
    Ok((pred - target).mapv(|v| v * v).sum() / n)
}

/// d(mse)/d(pred).
pub fn mse_grad(pred: &Array2<f64>, target: &Array2<f64>) -> Array2<f64> {
    let n = (pred.nrows() * pred.ncols()) as f64;
    (pred - target) * (2.0 / n)
}

/// Per-epoch cosine annealing from `base` toward 0: lr(e) = base * (1 +
/// cos(pi * e / t_max)) / 2, e zero-based.
pub fn cosine_lr(base: f64, epoch: usize, t_max: usize) -> f64 {
    base * (1.0 + (std::f64::consts::PI * epoch as f64 / t_max as f64).cos()) / 2.0
}

/// A model trainable by the supervised loop.
pub trait SupervisedModel {
    type Cache;
    fn kind(&self) -> &'static str;
    fn params(&self) -> &TensorMap;
    fn params_mut(&mut self) -> &mut TensorMap;
    fn forward_train(
        &self,
        batch: &AssembledBatch,
        rng: Option<&mut ChaCha20Rng>,
    ) -> Result<(Array2<f64>, Self::Cache)>;
    fn backward_train(&self, cache: &Self::Cache, dout: &Array2<f64>) -> TensorMap;
}

impl SupervisedModel for CvaPolicy {
    type Cache = crate::policy::CvaCache;

    fn kind(&self) -> &'static str {
        "cva"
    }
    fn params(&self) -> &TensorMap {
        &self.params
    }
    fn params_mut(&mut self) -> &mut TensorMap {
        &mut self.params
    }
    fn forward_train(
        &self,
        batch: &AssembledBatch,
        rng: Option<&mut ChaCha20Rng>,
    ) -> Result<(Array2<f64>, Self::Cache)> {
        let tokens = batch
            .tokens
            .as_ref()
            .ok_or_else(|| Error::Training("policy batch lacks visual tokens".into()))?;
        let goals = batch
            .goals
            .as_ref()
            .ok_or_else(|| Error::Training("policy batch lacks goal embeddings".into()))?;
        self.forward_batch(
            &batch.states,
            tokens,
            goals,
            batch.batch,
            ForwardOpts {
                bypass_goal: batch.bypass_goal,
            },
            rng,
        )
    }
    fn backward_train(&self, cache: &Self::Cache, dout: &Array2<f64>) -> TensorMap {
        self.backward_batch(cache, dout)
    }
}

impl SupervisedModel for LstmPolicy {
    type Cache = crate::policy::LstmCache;

    fn kind(&self) -> &'static str {
        "lstm"
    }
    fn params(&self) -> &TensorMap {
        &self.params
    }
    fn params_mut(&mut self) -> &mut TensorMap {
        &mut self.params
    }
    fn forward_train(
        &self,
        batch: &AssembledBatch,
        _rng: Option<&mut ChaCha20Rng>,
    ) -> Result<(Array2<f64>, Self::Cache)> {
        self.forward_batch(&batch.states, batch.batch)
    }
    fn backward_train(&self, cache: &Self::Cache, dout: &Array2<f64>) -> TensorMap {
        self.backward_batch(cache, dout)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
    pub lr: f64,
    /// Kept out of train_log.jsonl so identical runs produce identical logs;
    /// written to the timing.jsonl sidecar instead.
    #[serde(skip)]
    pub wallclock_s: f64,
}

/// Counts of samples drawn per split, separated by whether they fed a
/// gradient step or an eval-only pass.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AccessAudit {
    pub grad_samples: BTreeMap<String, usize>,
    pub eval_samples: BTreeMap<String, usize>,
}

pub struct TrainOutcome {
    pub log: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val: f64,
    pub best_params: TensorMap,
    pub stopped_early: bool,
    pub audit: AccessAudit,
}

/// Mean MSE of the model over every window of the batcher, eval mode.
pub fn evaluate_mse<M: SupervisedModel>(
    model: &M,
    batcher: &Batcher,
    batch_size: usize,
) -> Result<f64> {
    let m = batcher.windows.len();
    if m == 0 {
        return Err(Error::Training("empty evaluation set".into()));
    }
    let mut sq_sum = 0.0;
    let mut count = 0usize;
    let idxs: Vec<usize> = (0..m).collect();
    for chunk in idxs.chunks(batch_size) {
        let b = batcher.assemble(chunk)?;
        let (pred, _) = model.forward_train(&b, None)?;
        sq_sum += (&pred - &b.targets).mapv(|v| v * v).sum();
        count += chunk.len();
    }
    Ok(sq_sum / (count as f64 * 3.0))
}

/// Full predictions of the model over every window, in window order: [M, 3].
pub fn predict_all<M: SupervisedModel>(
    model: &M,
    batcher: &Batcher,
    batch_size: usize,
) -> Result<Array2<f64>> {
    let m = batcher.windows.len();
    let mut out = Array2::zeros((m, 3));
    let idxs: Vec<usize> = (0..m).collect();
    let mut row = 0;
    for chunk in idxs.chunks(batch_size) {
        let b = batcher.assemble(chunk)?;
        let (pred, _) = model.forward_train(&b, None)?;
        out.slice_mut(ndarray::s![row..row + chunk.len(), ..])
            .assign(&pred);
        row += chunk.len();
    }
    Ok(out)
}

/// Runs the supervised loop. The best-validation parameter snapshot is
/// returned (and written to `<out_dir>/best.cnav` alongside `last.cnav` and
/// `train_log.jsonl` when an output directory is given); the model itself is
/// left at the final epoch.
#[allow(clippy::too_many_arguments)]
pub fn train<M: SupervisedModel>(
    model: &mut M,
    train_batcher: &Batcher,
    train_split: &str,
    val_batcher: &Batcher,
    val_split: &str,
    cfg: &TrainConfig,
    stats_fingerprint: &str,
    encoder_fingerprint: &str,
    config_echo: serde_json::Value,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    if train_batcher.windows.is_empty() || val_batcher.windows.is_empty() {
        return Err(Error::Training("train and val sets must be non-empty".into()));
    }
    if cfg.batch_size == 0 || cfg.early_stop_patience == 0 {
        return Err(Error::Training("batch_size and patience must be >= 1".into()));
    }
    let t_max = cfg.t_max();
    let start = Instant::now();
    let mut optimizer = Adam::new(model.params(), AdamConfig::default());
    let mut audit = AccessAudit::default();
    let mut log: Vec<EpochRecord> = Vec::new();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0usize;
    let mut best_params = model.params().clone();
    let mut fails = 0usize;
    let mut stopped_early = false;

    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
    }

    for epoch in 0..cfg.max_epochs {
        let lr = cosine_lr(cfg.lr, epoch, t_max);
        let mut shuffle_rng = ChaCha20Rng::seed_from_u64(cfg.seed);
        shuffle_rng.set_stream(2 * epoch as u64);
        let mut dropout_rng = ChaCha20Rng::seed_from_u64(cfg.seed);
        dropout_rng.set_stream(2 * epoch as u64 + 1);

        let mut order: Vec<usize> = (0..train_batcher.windows.len()).collect();
        order.shuffle(&mut shuffle_rng);

        let mut sq_sum = 0.0;
        let mut n_samples = 0usize;
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let b = train_batcher.assemble(chunk)?;
            let (pred, cache) = model.forward_train(&b, Some(&mut dropout_rng))?;
            let loss = mse_loss(&pred, &b.targets)?;
            if !loss.is_finite() {
                return Err(Error::Training(format!(
                    "non-finite train loss {loss} at epoch {epoch}, batch {bi}"
                )));
            }
            let dout = mse_grad(&pred, &b.targets);
            let mut grads = model.backward_train(&cache, &dout);
            if let Some(c) = cfg.grad_clip {
                clip_grad_norm(&mut grads, c);
            }
            optimizer.step(model.params_mut(), &grads, lr);
            sq_sum += loss * (chunk.len() * 3) as f64;
            n_samples += chunk.len();
            *audit.grad_samples.entry(train_split.to_string()).or_insert(0) += chunk.len();
        }
        let train_mse = sq_sum / (n_samples as f64 * 3.0);

        let val_mse = evaluate_mse(model, val_batcher, cfg.batch_size)?;
        if !val_mse.is_finite() {
            return Err(Error::Training(format!(
                "non-finite validation loss {val_mse} at epoch {epoch}"
            )));
        }
        *audit.eval_samples.entry(val_split.to_string()).or_insert(0) +=
            val_batcher.windows.len();

        log.push(EpochRecord {
            epoch,
            train_mse,
            val_mse,
            lr,
            wallclock_s: start.elapsed().as_secs_f64(),
        });

        if best_val - val_mse > cfg.min_delta {
            best_val = val_mse;
            best_epoch = epoch;
            best_params = model.params().clone();
            fails = 0;
        } else {
            fails += 1;
            if fails >= cfg.early_stop_patience {
                stopped_early = true;
                break;
            }
        }
    }

    if let Some(dir) = out_dir {
        let meta = |epoch: usize, val: f64| CheckpointMeta {
            kind: model.kind().to_string(),
            epoch,
            val_mse: val,
            stats_fingerprint: stats_fingerprint.to_string(),
            encoder_fingerprint: encoder_fingerprint.to_string(),
            config: config_echo.clone(),
        };
        save_checkpoint(&dir.join("best.cnav"), &best_params, &meta(best_epoch, best_val))?;
        let last = log.last().expect("at least one epoch ran");
        save_checkpoint(
            &dir.join("last.cnav"),
            model.params(),
            &meta(last.epoch, last.val_mse),
        )?;
        let mut f = std::fs::File::create(dir.join("train_log.jsonl"))?;
        let mut t = std::fs::File::create(dir.join("timing.jsonl"))?;
        for rec in &log {
            writeln!(f, "{}", serde_json::to_string(rec)?)?;
            writeln!(
                t,
                "{{\"epoch\":{},\"wallclock_s\":{}}}",
                rec.epoch, rec.wallclock_s
            )?;
        }
    }

    Ok(TrainOutcome {
        log,
        best_epoch,
        best_val,
        best_params,
        stopped_early,
        audit,
    })
}
