use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::model::{argmax, cross_entropy, forward_batch, loss_and_grad};
use super::params::ModelParams;
use crate::error::{Error, Result};
use crate::hierarchy::Hierarchy;
use crate::rng::{derive_seed, seeded};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    #[default]
    AdamW,
}

impl std::str::FromStr for Optimizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" | "sgd-momentum" => Ok(Optimizer::Sgd),
            "adamw" | "adam" => Ok(Optimizer::AdamW),
            other => Err(Error::InvalidArgument(format!(
                "unknown optimizer {other:?}"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub early_stop_min_delta: f64,
    pub optimizer: Optimizer,
    /// Disables early stopping; every epoch runs and the final parameters are kept.
    #[serde(default)]
    pub fixed_epochs: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 256,
            learning_rate: 0.005,
            weight_decay: 1e-5,
            seed: 42,
            max_epochs: 100,
            early_stop_patience: 10,
            early_stop_min_delta: 0.001,
            optimizer: Optimizer::AdamW,
            fixed_epochs: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.into()));
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return bad("learning rate must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.weight_decay) {
            return bad("weight decay must lie in [0, 1)");
        }
        if self.early_stop_patience == 0 {
            return bad("patience must be at least 1");
        }
        if !(self.early_stop_min_delta >= 0.0) {
            return bad("min_delta must be non-negative");
        }
        Ok(())
    }
}

/// Indices into a dataset.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// Seeded shuffle, then `train_frac` / `val_frac` / remainder.
    pub fn random(n: usize, train_frac: f64, val_frac: f64, seed: u64) -> Result<Split> {
        if !(train_frac > 0.0 && val_frac > 0.0 && train_frac + val_frac < 1.0) {
            return Err(Error::InvalidArgument(
                "split fractions must be positive and sum below 1".into(),
            ));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut seeded(seed));
        let n_train = (n as f64 * train_frac).round() as usize;
        let n_val = (n as f64 * val_frac).round() as usize;
        let split = Split {
            test: idx.split_off((n_train + n_val).min(n)),
            val: idx.split_off(n_train.min(idx.len())),
            train: idx,
        };
        split.check(n)?;
        Ok(split)
    }

    fn check(&self, n: usize) -> Result<()> {
        for (name, part) in [
            ("train", &self.train),
            ("validation", &self.val),
            ("test", &self.test),
        ] {
            if part.is_empty() {
                return Err(Error::InvalidArgument(format!("empty {name} split")));
            }
            if let Some(&i) = part.iter().find(|&&i| i >= n) {
                return Err(Error::InvalidArgument(format!(
                    "{name} index {i} out of range"
                )));
            }
        }
        Ok(())
    }
}

/// Graphs per forward pass during evaluation.
const EVAL_CHUNK: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub history: Vec<EpochMetrics>,
    /// Epoch whose parameters were returned.
    pub best_epoch: usize,
    pub test: Evaluation,
}

pub fn evaluate(
    data: &[(Hierarchy, usize)],
    indices: &[usize],
    p: &ModelParams,
) -> Result<Evaluation> {
    if indices.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot evaluate an empty set".into(),
        ));
    }
    let mut loss = 0.0;
    let mut correct = 0;
    for chunk in indices.chunks(EVAL_CHUNK) {
        let hs: Vec<&Hierarchy> = chunk.iter().map(|&i| &data[i].0).collect();
        let logits = forward_batch(&hs, p)?;
        for (r, &i) in chunk.iter().enumerate() {
            let label = data[i].1;
            if label >= p.config.classes {
                return Err(Error::InvalidLabel {
                    label,
                    classes: p.config.classes,
                });
            }
            let z = logits.row(r).transpose();
            loss += cross_entropy(&z, label);
            correct += usize::from(argmax(&z) == label);
        }
    }
    let n = indices.len() as f64;
    Ok(Evaluation {
        loss: loss / n,
        accuracy: correct as f64 / n,
    })
}

struct OptState {
    kind: Optimizer,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl OptState {
    const MOMENTUM: f64 = 0.9;
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(kind: Optimizer, len: usize) -> Self {
        OptState {
            kind,
            m: vec![0.0; len],
            v: if kind == Optimizer::AdamW {
                vec![0.0; len]
            } else {
                Vec::new()
            },
            t: 0,
        }
    }

    /// Decoupled decay `θ ← θ(1 − wd)` followed by the gradient step.
    fn step(&mut self, theta: &mut [f64], grad: &[f64], lr: f64, wd: f64) {
        self.t += 1;
        let decay = 1.0 - wd;
        match self.kind {
            Optimizer::Sgd => {
                for ((x, &g), m) in theta.iter_mut().zip(grad).zip(&mut self.m) {
                    *m = Self::MOMENTUM * *m + g;
                    *x = *x * decay - lr * *m;
                }
            }
            Optimizer::AdamW => {
                let c1 = 1.0 - Self::BETA1.powi(self.t);
                let c2 = 1.0 - Self::BETA2.powi(self.t);
                for (((x, &g), m), v) in
                    theta.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v)
                {
                    *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
                    *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
                    let update = (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
                    *x = *x * decay - lr * update;
                }
            }
        }
    }
}

/// Mini-batch training with early stopping on validation loss.
///
/// Batch order in epoch `e` comes from `derive_seed(cfg.seed, e)`, so runs are
/// reproducible apart from `wall_seconds`.
pub fn train(
    data: &[(Hierarchy, usize)],
    split: &Split,
    cfg: &TrainConfig,
    p0: &ModelParams,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    split.check(data.len())?;
    let start = Instant::now();
    let mut params = p0.clone();
    let mut theta = params.to_flat();
    let mut opt = OptState::new(cfg.optimizer, theta.len());
    let mut best = (f64::INFINITY, params.clone(), 0usize);
    let mut since_best = 0;
    let mut history = Vec::new();
    let mut order = split.train.clone();

    for epoch in 1..=cfg.max_epochs {
        order.clone_from(&split.train);
        order.shuffle(&mut seeded(derive_seed(cfg.seed, epoch as u64)));
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(&Hierarchy, usize)> =
                chunk.iter().map(|&i| (&data[i].0, data[i].1)).collect();
            let res = loss_and_grad(&batch, &params)?;
            loss_sum += res.loss * chunk.len() as f64;
            correct += res.correct;
            opt.step(
                &mut theta,
                &res.grads.to_flat(),
                cfg.learning_rate,
                cfg.weight_decay,
            );
            params.load_flat(&theta)?;
        }
        let n_train = order.len() as f64;
        let val = evaluate(data, &split.val, &params)?;
        let metrics = EpochMetrics {
            epoch,
            train_loss: loss_sum / n_train,
            train_acc: correct as f64 / n_train,
            val_loss: val.loss,
            val_acc: val.accuracy,
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: train loss {:.4} acc {:.3}, val loss {:.4} acc {:.3}",
            metrics.train_loss,
            metrics.train_acc,
            val.loss,
            val.accuracy
        );
        history.push(metrics);
        if !val.loss.is_finite() {
            return Err(Error::NonFinite("validation loss"));
        }
        if cfg.fixed_epochs {
            best = (val.loss, params.clone(), epoch);
            continue;
        }
        if val.loss < best.0 - cfg.early_stop_min_delta {
            best = (val.loss, params.clone(), epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.early_stop_patience {
                log::info!("early stop after epoch {epoch}, best epoch {}", best.2);
                break;
            }
        }
    }
    let (_, params, best_epoch) = if cfg.max_epochs == 0 {
        (0.0, params, 0)
    } else {
        best
    };
    let test = evaluate(data, &split.test, &params)?;
    Ok(TrainOutcome {
        params,
        history,
        best_epoch,
        test,
    })
}

pub const METRICS_HEADER: &str = "epoch,train_loss,train_acc,val_loss,val_acc,wall_seconds";

pub fn metrics_csv(history: &[EpochMetrics]) -> String {
    let mut out = format!("{METRICS_HEADER}\n");
    for m in history {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            m.epoch, m.train_loss, m.train_acc, m.val_loss, m.val_acc, m.wall_seconds
        )
        .unwrap();
    }
    out
}
