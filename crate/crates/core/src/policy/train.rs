//! Minibatch training with Adam.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::arch::{HeadKind, PolicyArchitecture};
use super::features::{snippet_samples, Sample};
use super::model::{accumulate, batch_loss, LossKind, ModelWeights, Tape};
use crate::domain::{AblationMode, FeatureScaler, Snippet};
use crate::error::{Error, Result};
use crate::seeds::{derive_seed, splitmix64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Final learning rate as a fraction of `learning_rate`, reached by a
    /// cosine schedule over all steps. 1 keeps the rate constant.
    pub final_lr_fraction: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Global gradient-norm clip; 0 disables clipping.
    pub clip_norm: f64,
    /// Share of episodes held out for validation when no explicit
    /// validation set is given.
    pub validation_fraction: f64,
    /// Caps the number of training pairs (random subset); 0 keeps all.
    pub max_samples: usize,
    /// Caps the number of validation pairs; 0 keeps all.
    pub max_val_samples: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            final_lr_fraction: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 64,
            epochs: 8,
            clip_norm: 5.0,
            validation_fraction: 0.15,
            max_samples: 0,
            max_val_samples: 10_000,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| x > 0.0 && x < 1.0;
        if !(unit(self.learning_rate) && unit(self.beta1) && unit(self.beta2)) {
            return Err(Error::config("learning rate and decay rates must lie in (0, 1)"));
        }
        if !(self.final_lr_fraction > 0.0 && self.final_lr_fraction <= 1.0) {
            return Err(Error::config("final learning-rate fraction must lie in (0, 1]"));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::config("batch size and epochs must be at least 1"));
        }
        if !(self.epsilon > 0.0) || !(self.clip_norm >= 0.0) {
            return Err(Error::config("epsilon must be positive and clip norm non-negative"));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::config("validation fraction must lie in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-sample training loss over the epoch.
    pub train_loss: f64,
    /// Mean per-sample validation loss after the epoch.
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
}

impl TrainingLog {
    pub fn best(&self) -> Option<&EpochRecord> {
        self.epochs
            .iter()
            .min_by(|a, b| a.val_loss.total_cmp(&b.val_loss))
    }

    /// One `epoch train_loss val_loss` line per epoch.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# epoch train_loss val_loss\n");
        for r in &self.epochs {
            out.push_str(&format!("{} {:.9e} {:.9e}\n", r.epoch, r.train_loss, r.val_loss));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub weights: ModelWeights,
    pub log: TrainingLog,
}

pub fn loss_kind(arch: &PolicyArchitecture) -> LossKind {
    match arch.head {
        HeadKind::Deterministic => LossKind::Mse,
        HeadKind::Mixture { .. } => LossKind::Nll,
    }
}

/// Trains on `snippets`, holding out a seeded share of episodes for
/// validation.
pub fn train(
    snippets: &[Snippet],
    arch: &PolicyArchitecture,
    mode: AblationMode,
    cfg: &TrainConfig,
) -> Result<Trained> {
    cfg.validate()?;
    let cut = (cfg.validation_fraction * u32::MAX as f64) as u64;
    let (val, train): (Vec<Snippet>, Vec<Snippet>) = snippets
        .iter()
        .cloned()
        .partition(|s| (splitmix64(derive_seed(cfg.seed, s.episode_id)) & 0xffff_ffff) < cut);
    let (train, val) = if val.is_empty() || train.is_empty() {
        (snippets.to_vec(), snippets.to_vec())
    } else {
        (train, val)
    };
    train_with_validation(&train, &val, arch, mode, cfg)
}

/// Trains on `train`, selecting the epoch with the lowest loss on `val`.
pub fn train_with_validation(
    train: &[Snippet],
    val: &[Snippet],
    arch: &PolicyArchitecture,
    mode: AblationMode,
    cfg: &TrainConfig,
) -> Result<Trained> {
    let train = snippet_samples(train, mode, arch.history)?;
    let val = snippet_samples(val, mode, arch.history)?;
    train_samples(train, val, arch, mode, cfg)
}

/// Trains on encoded pairs. The scaler is fitted on `train`.
pub fn train_samples(
    mut train: Vec<Sample>,
    mut val: Vec<Sample>,
    arch: &PolicyArchitecture,
    mode: AblationMode,
    cfg: &TrainConfig,
) -> Result<Trained> {
    cfg.validate()?;
    arch.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::config("training and validation sets must be non-empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0x7472_6169));
    if cfg.max_samples > 0 && train.len() > cfg.max_samples {
        train.shuffle(&mut rng);
        train.truncate(cfg.max_samples);
    }
    if cfg.max_val_samples > 0 && val.len() > cfg.max_val_samples {
        val.shuffle(&mut rng);
        val.truncate(cfg.max_val_samples);
    }
    let scaler = FeatureScaler::fit(arch.input_dim(), train.iter().map(|s| s.input.as_slice()))?;
    let mut w = ModelWeights::init(arch.clone(), mode, scaler, derive_seed(cfg.seed, 0x696e_6974))?;
    if let HeadKind::Deterministic = arch.head {
        let mean = train.iter().map(|s| s.target).sum::<f64>() / train.len() as f64;
        let bias = w.layout().head().1.offset;
        w.params[bias] = mean;
    }
    let kind = loss_kind(arch);

    let n = w.params.len();
    let mut adam = Adam::new(n, cfg);
    let mut grad = vec![0.0; n];
    let mut tape = Tape::new(arch);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = TrainingLog::default();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let total_steps = cfg.epochs * train.len().div_ceil(cfg.batch_size);
    let mut step = 0;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            grad.fill(0.0);
            let loss = accumulate(&w, chunk.iter().map(|&i| &train[i]), kind, &mut tape, &mut grad)?;
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    detail: format!("non-finite training loss {loss}"),
                });
            }
            total += loss;
            let scale = 1.0 / chunk.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            clip(&mut grad, cfg.clip_norm);
            adam.lr = scheduled_lr(cfg, step, total_steps);
            step += 1;
            adam.step(&mut w.params, &grad);
        }
        let val_loss = batch_loss(&w, &val, kind)? / val.len() as f64;
        let train_loss = total / train.len() as f64;
        if !val_loss.is_finite() || w.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Divergence {
                epoch,
                detail: format!("non-finite validation loss {val_loss}"),
            });
        }
        log::debug!("epoch {epoch}: train {train_loss:.6} val {val_loss:.6}");
        log.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        if best.as_ref().is_none_or(|(b, _)| val_loss < *b) {
            best = Some((val_loss, w.params.clone()));
        }
    }
    let (_, params) = best.expect("at least one epoch ran");
    w.set_params(&params);
    Ok(Trained { weights: w, log })
}

fn scheduled_lr(cfg: &TrainConfig, step: usize, total: usize) -> f64 {
    let f = cfg.final_lr_fraction;
    let progress = if total > 1 { step as f64 / (total - 1) as f64 } else { 0.0 };
    cfg.learning_rate * (f + (1.0 - f) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos()))
}

fn clip(grad: &mut [f64], max_norm: f64) {
    if max_norm <= 0.0 {
        return;
    }
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
}

/// Adam with bias correction.
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    fn new(n: usize, cfg: &TrainConfig) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.epsilon,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}
