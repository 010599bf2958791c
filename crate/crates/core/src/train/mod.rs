//! Losses, the training loop with its checkpoint / LR-backtracking /
//! early-stopping callbacks, cross-validation and successive-halving search.

mod cv;
mod tune;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::{stratified_indices, FeatureMatrix};
use crate::error::{Error, Result};
use crate::metrics::MetricsReport;
use crate::models::{class1_scores, Mode, Model};
use crate::optim::{AdamState, NesterovState};
use crate::rng::RngStream;
use crate::tensor::Tensor;

pub use cv::{cross_validate, cross_validate_with, CvReport, MetricSummary};
pub use tune::{successive_halving, tune, Dimension, HalvingResult, SearchSpace, TrialRecord, TuneReport, RUNG_EPOCHS};

const CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Optimizer {
    Adam,
    Nesterov { momentum: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    Bce,
    /// `(p₁ − y)²`, used for the variational classifiers.
    Square,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub lr_factor: f64,
    pub lr_patience: usize,
    pub early_stop_patience: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
    pub loss: Loss,
    /// Validation share carved from the training set when none is given.
    pub val_fraction: f64,
    /// Extend KAN grids every this many epochs (0 disables).
    pub grid_update_every: usize,
    pub max_grid: usize,
    pub tolerance: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 100,
            learning_rate: 1e-3,
            batch_size: 32,
            lr_factor: 0.5,
            lr_patience: 5,
            early_stop_patience: 10,
            seed: 0,
            optimizer: Optimizer::Adam,
            loss: Loss::Bce,
            val_fraction: 0.2,
            grid_update_every: 5,
            max_grid: 24,
            tolerance: 1e-6,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr_patience == 0 || self.early_stop_patience == 0 {
            return Err(Error::Param("patiences must be positive".into()));
        }
        if !(self.lr_factor > 0.0 && self.lr_factor < 1.0) {
            return Err(Error::Param(format!("lr factor {} not in (0, 1)", self.lr_factor)));
        }
        if self.batch_size == 0 {
            return Err(Error::Param("batch size must be positive".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Param(format!("learning rate {}", self.learning_rate)));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::Param(format!("validation fraction {}", self.val_fraction)));
        }
        Ok(())
    }
}

/// Binary cross-entropy of the `[batch, 2]` sigmoid outputs against one-hot
/// targets, averaged over outputs and batch:
/// `−½[log p_y + log(1 − p_other)]`. Equals `−log p_y` when `p₀ = 1 − p₁`.
/// Clamped entries get zero gradient.
pub fn bce_loss(probs: &Tensor, labels: &[u8]) -> Result<(f64, Tensor)> {
    check_batch(probs, labels)?;
    let b = labels.len() as f64;
    let mut grad = Tensor::zeros(probs.shape());
    let mut loss = 0.0;
    for (r, &y) in labels.iter().enumerate() {
        let (c, o) = (usize::from(y), 1 - usize::from(y));
        let (py, po) = (probs.get2(r, c), probs.get2(r, o));
        let (pyc, poc) = (py.clamp(CLAMP, 1.0 - CLAMP), po.clamp(CLAMP, 1.0 - CLAMP));
        loss -= 0.5 * (pyc.ln() + (1.0 - poc).ln());
        let g = grad.data_mut();
        if pyc == py {
            g[2 * r + c] = -0.5 / (py * b);
        }
        if poc == po {
            g[2 * r + o] = 0.5 / ((1.0 - po) * b);
        }
    }
    Ok((loss / b, grad))
}

/// Mean `(p₁ − y)²`.
pub fn square_loss(probs: &Tensor, labels: &[u8]) -> Result<(f64, Tensor)> {
    check_batch(probs, labels)?;
    let b = labels.len() as f64;
    let mut grad = Tensor::zeros(probs.shape());
    let mut loss = 0.0;
    for (r, &y) in labels.iter().enumerate() {
        let e = probs.get2(r, 1) - f64::from(y);
        loss += e * e;
        grad.data_mut()[2 * r + 1] = 2.0 * e / b;
    }
    Ok((loss / b, grad))
}

fn check_batch(probs: &Tensor, labels: &[u8]) -> Result<()> {
    if probs.rank() != 2 || probs.last_dim() != 2 || probs.dim0() != labels.len() || labels.is_empty() {
        return Err(Error::Shape(format!("{:?} outputs for {} labels", probs.shape(), labels.len())));
    }
    Ok(())
}

fn loss_fn(kind: Loss) -> fn(&Tensor, &[u8]) -> Result<(f64, Tensor)> {
    match kind {
        Loss::Bce => bce_loss,
        Loss::Square => square_loss,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub lr_reductions: Vec<usize>,
    pub stopped_early: bool,
    /// Loss of every optimizer step, in order.
    pub step_losses: Vec<f64>,
    /// Wall-clock time; kept out of serialised reports so they stay
    /// reproducible.
    #[serde(skip)]
    pub wall_seconds: f64,
}

/// Equality ignores wall-clock time.
impl PartialEq for History {
    fn eq(&self, o: &Self) -> bool {
        self.epochs == o.epochs
            && self.best_epoch == o.best_epoch
            && self.lr_reductions == o.lr_reductions
            && self.stopped_early == o.stopped_early
            && self.step_losses == o.step_losses
    }
}

impl History {
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for e in &self.epochs {
            wr.serialize(e)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Raw `[n, 2]` outputs in inference mode, evaluated in chunks.
pub fn predict_outputs(model: &Model, m: &FeatureMatrix) -> Result<Tensor> {
    const CHUNK: usize = 256;
    let mut out = Vec::with_capacity(2 * m.n_rows());
    for start in (0..m.n_rows()).step_by(CHUNK) {
        let idx: Vec<usize> = (start..(start + CHUNK).min(m.n_rows())).collect();
        out.extend_from_slice(model.predict(&m.select(&idx).to_tensor())?.data());
    }
    Tensor::new(vec![m.n_rows(), 2], out)
}

/// Class-1 scores in inference mode.
pub fn predict_scores(model: &Model, m: &FeatureMatrix) -> Result<Vec<f64>> {
    Ok(class1_scores(&predict_outputs(model, m)?))
}

pub fn evaluate(model: &Model, m: &FeatureMatrix, tau: f64) -> Result<MetricsReport> {
    MetricsReport::compute(&predict_scores(model, m)?, &m.labels, tau)
}

/// Loss and accuracy in inference mode.
fn score_set(model: &Model, m: &FeatureMatrix, loss: Loss) -> Result<(f64, f64)> {
    let out = predict_outputs(model, m)?;
    let (l, _) = loss_fn(loss)(&out, &m.labels)?;
    let s = class1_scores(&out);
    let correct = s.iter().zip(&m.labels).filter(|(p, &y)| u8::from(**p > 0.5) == y).count();
    Ok((l, correct as f64 / m.n_rows() as f64))
}

enum OptState {
    Adam(AdamState),
    Nesterov(NesterovState),
}

impl OptState {
    fn new(kind: Optimizer, lr: f64, shapes: &[Vec<usize>]) -> Self {
        match kind {
            Optimizer::Adam => Self::Adam(AdamState::new(lr, shapes)),
            Optimizer::Nesterov { momentum } => Self::Nesterov(NesterovState::new(lr, momentum, shapes)),
        }
    }

    fn sync(&mut self, kind: Optimizer, lr: f64, shapes: &[Vec<usize>]) {
        match self {
            Self::Adam(a) => a.sync_shapes(shapes),
            Self::Nesterov(_) => *self = Self::new(kind, lr, shapes),
        }
    }
}

/// Loss, parameter gradients and the number of correct training-mode calls.
fn batch_grads(model: &Model, x: &Tensor, y: &[u8], loss: Loss, rng: &mut RngStream) -> Result<(f64, Vec<Tensor>, usize)> {
    let (probs, cache) = model.forward(x, Mode::Train(rng))?;
    let (l, g) = loss_fn(loss)(&probs, y)?;
    let grads = model.backward(&cache.ok_or(Error::MissingCache)?, &g)?;
    let correct = class1_scores(&probs).iter().zip(y).filter(|(p, &t)| u8::from(**p > 0.5) == t).count();
    Ok((l, grads, correct))
}

const SHUFFLE_STREAM: u64 = 0xB47C;
const DROPOUT_STREAM: u64 = 0xD209;

/// Mini-batch training with the callback stack. Returns the weights with the
/// best validation accuracy (the initial weights when no epoch ran).
pub fn fit(model: Model, train: &FeatureMatrix, val: Option<&FeatureMatrix>, cfg: &TrainConfig) -> Result<(Model, History)> {
    cfg.validate()?;
    let started = Instant::now();
    let carved;
    let (train, val) = match val {
        Some(v) => (train.clone(), v),
        None => {
            let (a, b) = stratified_indices(&train.labels, 1.0 - cfg.val_fraction, cfg.seed)?;
            carved = train.select(&b);
            (train.select(&a), &carved)
        }
    };
    if train.n_rows() == 0 || val.n_rows() == 0 {
        return Err(Error::Param("training and validation sets must be non-empty".into()));
    }
    let mut model = model;
    let mut history = History::default();
    let mut lr = cfg.learning_rate;
    let mut opt = OptState::new(cfg.optimizer, lr, &model.param_shapes());
    let mut best: Option<Model> = None;
    let mut best_acc = f64::NEG_INFINITY;
    let mut best_loss = f64::INFINITY;
    let (mut wait_lr, mut wait_stop) = (0usize, 0usize);
    let shuffle = RngStream::new(cfg.seed, SHUFFLE_STREAM);
    let mut dropout = RngStream::new(cfg.seed, DROPOUT_STREAM);
    let train_x = train.to_tensor();

    for epoch in 0..cfg.max_epochs {
        if cfg.grid_update_every > 0 && epoch % cfg.grid_update_every == 0 && model.grid_update(&train_x, cfg.max_grid)? {
            opt.sync(cfg.optimizer, lr, &model.param_shapes());
        }
        let order = shuffle.child(epoch as u64).permutation(train.n_rows());
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch = train.select(chunk);
            let x = batch.to_tensor();
            let (l, c) = match &mut opt {
                OptState::Adam(a) => {
                    let (l, g, c) = batch_grads(&model, &x, &batch.labels, cfg.loss, &mut dropout)?;
                    check_loss(l, epoch, bi)?;
                    a.learning_rate = lr;
                    a.step(&mut model.params_mut(), &g)?;
                    (l, c)
                }
                OptState::Nesterov(n) => {
                    let mut probe = model.clone();
                    for (p, a) in probe.params_mut().into_iter().zip(n.lookahead(&model.params())) {
                        *p = a;
                    }
                    let (l, g, c) = batch_grads(&probe, &x, &batch.labels, cfg.loss, &mut dropout)?;
                    check_loss(l, epoch, bi)?;
                    n.learning_rate = lr;
                    n.step(&mut model.params_mut(), &g)?;
                    (l, c)
                }
            };
            history.step_losses.push(l);
            loss_sum += l * chunk.len() as f64;
            correct += c;
        }
        let n = train.n_rows() as f64;
        let (val_loss, val_acc) = score_set(&model, val, cfg.loss)?;
        if !val_loss.is_finite() {
            return Err(Error::Divergence(format!("validation loss is {val_loss} after epoch {epoch}")));
        }
        history.epochs.push(EpochRecord {
            epoch,
            lr,
            train_loss: loss_sum / n,
            train_accuracy: correct as f64 / n,
            val_loss,
            val_accuracy: val_acc,
        });
        if val_acc > best_acc + cfg.tolerance {
            best_acc = val_acc;
            best = Some(model.clone());
            history.best_epoch = Some(epoch);
        }
        if val_loss < best_loss - cfg.tolerance {
            best_loss = val_loss;
            wait_lr = 0;
            wait_stop = 0;
        } else {
            wait_lr += 1;
            wait_stop += 1;
        }
        if wait_stop >= cfg.early_stop_patience {
            history.stopped_early = true;
            break;
        }
        if wait_lr >= cfg.lr_patience {
            if let Some(b) = &best {
                model = b.clone();
            }
            lr *= cfg.lr_factor;
            opt = OptState::new(cfg.optimizer, lr, &model.param_shapes());
            history.lr_reductions.push(epoch);
            wait_lr = 0;
        }
    }
    history.wall_seconds = started.elapsed().as_secs_f64();
    Ok((best.unwrap_or(model), history))
}

fn check_loss(l: f64, epoch: usize, batch: usize) -> Result<()> {
    if l.is_finite() {
        Ok(())
    } else {
        Err(Error::Divergence(format!("loss is {l} at epoch {epoch}, batch {batch}")))
    }
}
