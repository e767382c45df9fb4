//! Losses, optimizer and the training loop.

mod loss;
mod optim;

pub use loss::{consistency_loss, consistency_loss_with, forward_l2_loss, reverse_l2_loss};
pub use optim::{clip_global_norm, global_norm, lr_schedule, AdamW};

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::{error, info};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{sample_training_sequence_with, Direction, OperatorDataset, TrainingSequence};
use crate::error::{Error, Result};
use crate::model::{
    init_params, load_checkpoint, save_checkpoint, Checkpoint, ModelConfig, ModelParams,
};
use crate::rng::{derive_labeled, rng_from};

pub const LOSS_CSV: &str = "loss.csv";
pub const CHECKPOINT_DIR: &str = "checkpoint";
const CSV_HEADER: &str = "step,lr,loss_forward,loss_reverse,loss_consistency";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMix {
    /// Forward and reverse L2, each sequence oriented by a fair coin.
    ForwardReverse,
    /// Forward L2 plus the consistency loss on the same sequences reversed.
    ForwardConsistency,
    ForwardOnly,
}

impl std::str::FromStr for LossMix {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "forward_reverse" => Ok(LossMix::ForwardReverse),
            "forward_consistency" => Ok(LossMix::ForwardConsistency),
            "forward_only" => Ok(LossMix::ForwardOnly),
            other => Err(Error::Argument(format!("unknown loss mix {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub total_steps: usize,
    pub warmup_fraction: f64,
    pub peak_lr: f64,
    /// Forward sequences per step (expected count for the forward/reverse mix).
    pub batch_forward: usize,
    /// Reverse sequences per step (expected count for the forward/reverse mix).
    pub batch_reverse: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
    pub clip_norm: f64,
    /// Pairs per training sequence (`I`).
    pub seq_len: usize,
    pub seed: u64,
    pub loss_mix: LossMix,
    /// Steps between loss CSV rows.
    pub log_every: usize,
    /// Steps between checkpoints; zero writes only the final one.
    pub checkpoint_every: usize,
}

impl TrainConfig {
    pub fn paper() -> Self {
        TrainConfig {
            total_steps: 1_000_000,
            warmup_fraction: 0.1,
            peak_lr: 1e-4,
            batch_forward: 8,
            batch_reverse: 8,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            weight_decay: 1e-4,
            clip_norm: 1.0,
            seq_len: 6,
            seed: 0,
            loss_mix: LossMix::ForwardReverse,
            log_every: 100,
            checkpoint_every: 10_000,
        }
    }

    pub fn desk() -> Self {
        TrainConfig {
            total_steps: 5000,
            peak_lr: 1e-3,
            batch_forward: 2,
            batch_reverse: 2,
            seq_len: 4,
            log_every: 1,
            checkpoint_every: 1000,
            ..Self::paper()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.warmup_fraction > 0.0 && self.warmup_fraction < 1.0) {
            return Err(Error::Config(format!(
                "warmup fraction must lie in (0, 1), got {}",
                self.warmup_fraction
            )));
        }
        if !(self.peak_lr > 0.0 && self.peak_lr.is_finite()) {
            return Err(Error::Config(format!(
                "peak learning rate must be positive, got {}",
                self.peak_lr
            )));
        }
        if self.seq_len < 2 {
            return Err(Error::Config(
                "training sequences need at least two pairs".into(),
            ));
        }
        if self.batch_forward == 0 {
            return Err(Error::Config("forward batch size must be positive".into()));
        }
        if self.loss_mix == LossMix::ForwardReverse && self.batch_reverse == 0 {
            return Err(Error::Config(
                "the forward/reverse mix needs a reverse batch".into(),
            ));
        }
        if self.log_every == 0 {
            return Err(Error::Config("log interval must be positive".into()));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::Config("gradient clip norm must be positive".into()));
        }
        Ok(())
    }
}

/// Losses of one optimizer step; a family absent from the batch is `None`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub step: usize,
    pub lr: f64,
    pub loss_forward: Option<f64>,
    pub loss_reverse: Option<f64>,
    pub loss_consistency: Option<f64>,
}

impl LossRecord {
    pub fn total(&self) -> f64 {
        [self.loss_forward, self.loss_reverse, self.loss_consistency]
            .iter()
            .flatten()
            .sum()
    }

    pub fn csv_row(&self) -> String {
        let f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{}",
            self.step,
            self.lr,
            f(self.loss_forward),
            f(self.loss_reverse),
            f(self.loss_consistency)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Job {
    ForwardL2,
    ReverseL2,
    Consistency,
}

/// Trainer state: parameters, optimizer moments and the step counter.
///
/// Each step draws its batch from a stream seeded by `(seed, step)`, so a
/// restored checkpoint continues exactly as an uninterrupted run would.
pub struct Trainer<'a> {
    pub cfg: TrainConfig,
    pub params: ModelParams<f32>,
    pub optimizer: AdamW,
    pub step: usize,
    datasets: &'a [OperatorDataset],
}

fn check_datasets(
    datasets: &[OperatorDataset],
    cfg: &TrainConfig,
    model: &ModelConfig,
) -> Result<()> {
    if datasets.is_empty() {
        return Err(Error::Argument(
            "training needs at least one operator dataset".into(),
        ));
    }
    if cfg.seq_len > model.max_pairs {
        return Err(Error::Config(format!(
            "sequence length {} exceeds the model's {} pairs",
            cfg.seq_len, model.max_pairs
        )));
    }
    for ds in datasets {
        if ds.pairs.len() < cfg.seq_len {
            return Err(Error::Argument(format!(
                "operator {} holds {} pairs, fewer than the sequence length {}",
                ds.id,
                ds.pairs.len(),
                cfg.seq_len
            )));
        }
        if ds.n() % model.grid_stride != 0 {
            return Err(Error::Argument(format!(
                "grid of {} cells is not divisible by the grid stride {}",
                ds.n(),
                model.grid_stride
            )));
        }
    }
    Ok(())
}

impl<'a> Trainer<'a> {
    pub fn new(
        cfg: TrainConfig,
        model: &ModelConfig,
        datasets: &'a [OperatorDataset],
    ) -> Result<Self> {
        cfg.validate()?;
        check_datasets(datasets, &cfg, model)?;
        let params = init_params(model, derive_labeled(cfg.seed, "init", 0))?;
        let optimizer = AdamW::new(
            params.len(),
            cfg.beta1,
            cfg.beta2,
            cfg.adam_eps,
            cfg.weight_decay,
        );
        Ok(Trainer {
            cfg,
            params,
            optimizer,
            step: 0,
            datasets,
        })
    }

    pub fn from_checkpoint(
        cfg: TrainConfig,
        ckpt: Checkpoint,
        datasets: &'a [OperatorDataset],
    ) -> Result<Self> {
        cfg.validate()?;
        check_datasets(datasets, &cfg, &ckpt.params.config)?;
        let mut optimizer = AdamW::new(
            ckpt.params.len(),
            cfg.beta1,
            cfg.beta2,
            cfg.adam_eps,
            cfg.weight_decay,
        );
        if let Some((m, v)) = ckpt.moments {
            optimizer.m = m;
            optimizer.v = v;
        }
        optimizer.t = ckpt.step;
        Ok(Trainer {
            cfg,
            params: ckpt.params,
            optimizer,
            step: ckpt.step,
            datasets,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            params: self.params.clone(),
            step: self.step,
            moments: Some((self.optimizer.m.clone(), self.optimizer.v.clone())),
        }
    }

    pub fn is_done(&self) -> bool {
        self.step >= self.cfg.total_steps
    }

    fn draw_batch(&self) -> Result<Vec<(Job, TrainingSequence)>> {
        let mut rng = rng_from(derive_labeled(
            self.cfg.seed,
            "train-step",
            self.step as u64,
        ));
        let draw = |orientation: Direction, rng: &mut rand_chacha::ChaCha8Rng| {
            let op = rng.random_range(0..self.datasets.len());
            sample_training_sequence_with(&self.datasets[op], self.cfg.seq_len, orientation, rng)
        };
        let mut jobs = Vec::new();
        match self.cfg.loss_mix {
            LossMix::ForwardReverse => {
                for _ in 0..self.cfg.batch_forward + self.cfg.batch_reverse {
                    let orientation = if rng.random_bool(0.5) {
                        Direction::Forward
                    } else {
                        Direction::Reverse
                    };
                    let seq = draw(orientation, &mut rng)?;
                    let job = match orientation {
                        Direction::Forward => Job::ForwardL2,
                        Direction::Reverse => Job::ReverseL2,
                    };
                    jobs.push((job, seq));
                }
            }
            LossMix::ForwardConsistency => {
                let seqs = (0..self.cfg.batch_forward)
                    .map(|_| draw(Direction::Forward, &mut rng))
                    .collect::<Result<Vec<_>>>()?;
                for seq in &seqs {
                    jobs.push((Job::Consistency, seq.reversed()));
                }
                jobs.extend(seqs.into_iter().map(|s| (Job::ForwardL2, s)));
            }
            LossMix::ForwardOnly => {
                for _ in 0..self.cfg.batch_forward {
                    jobs.push((Job::ForwardL2, draw(Direction::Forward, &mut rng)?));
                }
            }
        }
        Ok(jobs)
    }

    /// Runs one optimizer step and returns its losses.
    pub fn train_step(&mut self) -> Result<LossRecord> {
        let jobs = self.draw_batch()?;
        let count = |j: Job| jobs.iter().filter(|(k, _)| *k == j).count();
        let (n_fwd, n_rev, n_cons) = (
            count(Job::ForwardL2),
            count(Job::ReverseL2),
            count(Job::Consistency),
        );
        // L2 terms average over every L2 sequence; consistency is a separate family.
        let n_l2 = (n_fwd + n_rev) as f64;
        let params = &self.params;
        let results: Vec<(Job, f64, Vec<f32>)> = jobs
            .par_iter()
            .map(|(job, seq)| {
                let mut grad = vec![0.0f32; params.len()];
                let loss = match job {
                    Job::ForwardL2 => forward_l2_loss(params, seq, 1.0 / n_l2, Some(&mut grad))?,
                    Job::ReverseL2 => reverse_l2_loss(params, seq, 1.0 / n_l2, Some(&mut grad))?,
                    Job::Consistency => {
                        consistency_loss(params, seq, 1.0 / n_cons as f64, Some(&mut grad))?
                    }
                };
                Ok((*job, loss, grad))
            })
            .collect::<Result<_>>()?;
        let mut grad = vec![0.0f32; self.params.len()];
        let mut sums = [0.0f64; 3];
        for (job, loss, g) in &results {
            let slot = match job {
                Job::ForwardL2 => 0,
                Job::ReverseL2 => 1,
                Job::Consistency => 2,
            };
            sums[slot] += loss;
            for (a, b) in grad.iter_mut().zip(g) {
                *a += *b;
            }
        }
        let mean = |s: f64, n: usize| (n > 0).then(|| s / n as f64);
        let lr = lr_schedule(
            self.step,
            self.cfg.total_steps,
            self.cfg.warmup_fraction,
            self.cfg.peak_lr,
        );
        let record = LossRecord {
            step: self.step,
            lr,
            loss_forward: mean(sums[0], n_fwd),
            loss_reverse: mean(sums[1], n_rev),
            loss_consistency: mean(sums[2], n_cons),
        };
        if !record.total().is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numeric {
                index: self.step,
                context: format!("non-finite training loss at step {}: {record:?}", self.step),
            });
        }
        clip_global_norm(&mut grad, self.cfg.clip_norm);
        self.optimizer.step(&mut self.params.data, &grad, lr)?;
        self.step += 1;
        Ok(record)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams<f32>,
    pub history: Vec<LossRecord>,
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Directory receiving the loss CSV and checkpoints.
    pub out_dir: Option<PathBuf>,
    /// Continue from the checkpoint in `out_dir` when one exists.
    pub resume: bool,
}

fn write_csv(path: &Path, rows: &[String]) -> Result<()> {
    let mut text = String::with_capacity(64 * (rows.len() + 1));
    text.push_str(CSV_HEADER);
    text.push('\n');
    for r in rows {
        let _ = writeln!(text, "{r}");
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_csv_rows(path: &Path, before_step: usize) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for line in text.lines().skip(1) {
        let step: usize = line
            .split(',')
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format(path, format!("malformed row {line:?}")))?;
        if step < before_step {
            rows.push(line.to_string());
        }
    }
    Ok(rows)
}

/// Trains to `cfg.total_steps`, logging every step and, with an output
/// directory, writing the loss CSV and periodic checkpoints.
///
/// On a non-finite loss the last good parameters are checkpointed before
/// the error is returned.
pub fn train(
    cfg: &TrainConfig,
    model: &ModelConfig,
    datasets: &[OperatorDataset],
    opts: &TrainOptions,
) -> Result<TrainOutcome> {
    let ckpt_dir = opts.out_dir.as_ref().map(|d| d.join(CHECKPOINT_DIR));
    let csv_path = opts.out_dir.as_ref().map(|d| d.join(LOSS_CSV));
    let resumable = opts.resume
        && ckpt_dir
            .as_ref()
            .is_some_and(|d| d.join(crate::model::MANIFEST_FILE).exists());
    let mut trainer = if resumable {
        let ckpt = load_checkpoint(ckpt_dir.as_ref().expect("checked above"))?;
        if &ckpt.params.config != model {
            return Err(Error::Config(
                "checkpoint model configuration differs from the run".into(),
            ));
        }
        info!("resuming from step {}", ckpt.step);
        Trainer::from_checkpoint(cfg.clone(), ckpt, datasets)?
    } else {
        Trainer::new(cfg.clone(), model, datasets)?
    };
    if let Some(dir) = &opts.out_dir {
        crate::storage::ensure_dir(dir)?;
    }
    let mut rows = match &csv_path {
        Some(p) if resumable && p.exists() => read_csv_rows(p, trainer.step)?,
        _ => Vec::new(),
    };
    let mut history = Vec::new();
    while !trainer.is_done() {
        let record = match trainer.train_step() {
            Ok(r) => r,
            Err(e) => {
                error!("training aborted: {e}");
                if let Some(dir) = &ckpt_dir {
                    save_checkpoint(&trainer.checkpoint(), dir)?;
                    error!("last good parameters saved to {}", dir.display());
                }
                if let Some(p) = &csv_path {
                    write_csv(p, &rows)?;
                }
                return Err(e);
            }
        };
        let step = record.step;
        if step % cfg.log_every == 0 || trainer.is_done() {
            rows.push(record.csv_row());
        }
        if step % 100 == 0 {
            info!(
                "step {step} lr {:.3e} loss {:.5}",
                record.lr,
                record.total()
            );
        }
        history.push(record);
        let periodic = cfg.checkpoint_every > 0 && trainer.step % cfg.checkpoint_every == 0;
        if periodic && !trainer.is_done() {
            if let Some(dir) = &ckpt_dir {
                save_checkpoint(&trainer.checkpoint(), dir)?;
            }
            if let Some(p) = &csv_path {
                write_csv(p, &rows)?;
            }
        }
    }
    if let Some(dir) = &ckpt_dir {
        save_checkpoint(&trainer.checkpoint(), dir)?;
    }
    if let Some(p) = &csv_path {
        write_csv(p, &rows)?;
    }
    Ok(TrainOutcome {
        params: trainer.params,
        history,
    })
}

/// Trailing moving average of the forward loss over `window` steps that
/// contain a forward term.
pub fn smoothed_forward_loss(history: &[LossRecord], window: usize) -> Vec<(usize, f64)> {
    let points: Vec<(usize, f64)> = history
        .iter()
        .filter_map(|r| r.loss_forward.map(|l| (r.step, l)))
        .collect();
    (0..points.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(window.max(1));
            let slice = &points[lo..=i];
            (
                points[i].0,
                slice.iter().map(|p| p.1).sum::<f64>() / slice.len() as f64,
            )
        })
        .collect()
}
