//! Losses, metrics, AdamW training and ablations.
//!
//! Training runs in double precision on a single thread. Given the seed, the shuffles, the
//! updates and therefore the loss history are reproducible bit for bit.

pub mod loss;
pub mod metrics;

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use loss::{loss, loss_and_grad, LossTerms, LossWeights};
pub use metrics::{beta0, beta0_term, iou, MetricContext, MetricsReport, BETA0_LEVELS, IOU_LEVEL};

use crate::model::{HsdContext, HsdModel, ModelConfig, Variant};
use crate::tasks::{Dataset, Sample, TaskKind};
use crate::{Dec64, Error, Model64, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    /// Decoupled weight decay; `None` picks 1e-4 for vector tasks and 1e-5 for scalar ones.
    pub weight_decay: Option<f64>,
    pub lambda_flux: f64,
    pub lambda_div: f64,
    /// L1 weight on spectral coefficients for scalar tasks.
    pub l1: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            epochs: 50,
            batch: 64,
            weight_decay: None,
            lambda_flux: 1.0,
            lambda_div: 0.1,
            l1: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(format!("train config: {what}")));
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad("lr must be a finite non-negative number");
        }
        if self.epochs == 0 || self.batch == 0 {
            return bad("epochs and batch must be positive");
        }
        if self.weight_decay.is_some_and(|w| !(w >= 0.0)) || !(self.lambda_flux > 0.0) || !(self.lambda_div >= 0.0) {
            return bad("weights must be non-negative (λ_flux positive)");
        }
        if !(self.l1 >= 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.adam_eps > 0.0) {
            return bad("optimizer constants out of range");
        }
        Ok(())
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights { lambda_flux: self.lambda_flux, lambda_div: self.lambda_div, l1: self.l1 }
    }

    pub fn decay_for(&self, kind: TaskKind) -> f64 {
        self.weight_decay.unwrap_or(if kind.is_vector() { 1e-4 } else { 1e-5 })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val: f64,
}

impl History {
    /// `epoch,train_loss,val_loss` with shortest round-trip float formatting.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss\n");
        for r in &self.epochs {
            let _ = writeln!(s, "{},{:?},{:?}", r.epoch, r.train_loss, r.val_loss);
        }
        s
    }
}

/// Model configuration with degrees set for a task.
pub fn config_for_task(mut config: ModelConfig, kind: TaskKind) -> ModelConfig {
    config.degree = kind.target_degree();
    config.input_degree = kind.input_degree();
    config
}

/// Everything fixed during a training run on one complex.
pub struct Trainer<'a> {
    pub dec: &'a Dec64,
    pub kind: TaskKind,
    pub config: TrainConfig,
}

impl<'a> Trainer<'a> {
    pub fn new(dec: &'a Dec64, kind: TaskKind, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { dec, kind, config })
    }

    /// Loss of one sample and its gradient accumulated into `grad` (scaled by `scale`).
    pub fn sample_step(&self, model: &Model64, s: &Sample<f64>, grad: Option<(&mut [f64], f64)>) -> Result<LossTerms> {
        let trace = model.forward(&s.input)?;
        let pred = crate::Cochain::new(model.context.degree(), trace.output().clone());
        let (terms, g) = loss_and_grad(
            &pred,
            &s.target,
            self.dec,
            Some(&model.context.subspace),
            self.kind,
            &self.config.weights(),
        )?;
        if let Some((grad, scale)) = grad {
            model.backward(&trace, &(g * scale), grad)?;
        }
        Ok(terms)
    }

    /// Mean loss over samples.
    pub fn mean_loss<'s>(&self, model: &Model64, samples: impl Iterator<Item = &'s Sample<f64>>) -> Result<f64> {
        let (mut sum, mut n) = (0.0, 0usize);
        for s in samples {
            sum += self.sample_step(model, s, None)?.total;
            n += 1;
        }
        Ok(if n == 0 { f64::NAN } else { sum / n as f64 })
    }

    /// AdamW with cosine decay to zero over all steps, keeping the parameters of the epoch with
    /// the lowest validation loss (training loss when there is no validation split).
    pub fn fit(&self, model: &mut Model64, data: &Dataset<f64>) -> Result<History> {
        if data.kind() != self.kind {
            return Err(Error::InvalidParameter(format!("dataset is {}, trainer is {}", data.kind(), self.kind)));
        }
        if model.context.degree() != self.kind.target_degree() || model.context.input_degree != self.kind.input_degree() {
            return Err(Error::DegreeMismatch { expected: self.kind.target_degree(), got: model.context.degree() });
        }
        if model.context.complex_hash != data.complex_hash {
            return Err(Error::ComplexMismatch(model.context.complex_hash.clone(), data.complex_hash.clone()));
        }
        let c = &self.config;
        let train = data.split.train.clone();
        if train.is_empty() {
            return Err(Error::InvalidParameter("empty training split".into()));
        }
        let n_params = model.param_count();
        let decay_mask: Vec<bool> = {
            let mut m = vec![false; n_params];
            for t in model.manifest() {
                if t.shape.len() == 2 || t.name.ends_with("kernel") {
                    m[t.offset..t.offset + t.len()].iter_mut().for_each(|v| *v = true);
                }
            }
            m
        };
        let wd = c.decay_for(self.kind);
        let steps_per_epoch = train.len().div_ceil(c.batch);
        let total_steps = (steps_per_epoch * c.epochs) as f64;
        let mut m1 = vec![0.0; n_params];
        let mut m2 = vec![0.0; n_params];
        let mut grad = vec![0.0; n_params];
        let mut step = 0usize;
        let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
        let mut history = History { best_val: f64::INFINITY, ..Default::default() };
        let mut best = model.params.clone();
        for epoch in 0..c.epochs {
            let mut order = train.clone();
            order.shuffle(&mut rng);
            let mut train_sum = 0.0;
            for (b, chunk) in order.chunks(c.batch).enumerate() {
                grad.iter_mut().for_each(|g| *g = 0.0);
                let scale = 1.0 / chunk.len() as f64;
                for &i in chunk {
                    let t = self.sample_step(model, &data.samples[i], Some((&mut grad, scale)))?;
                    if !t.total.is_finite() {
                        return Err(Error::NonFiniteLoss { epoch, step: b });
                    }
                    train_sum += t.total;
                }
                step += 1;
                let lr = c.lr * 0.5 * (1.0 + (std::f64::consts::PI * (step - 1) as f64 / total_steps).cos());
                let bc1 = 1.0 - c.beta1.powi(step as i32);
                let bc2 = 1.0 - c.beta2.powi(step as i32);
                for j in 0..n_params {
                    let g = grad[j];
                    m1[j] = c.beta1 * m1[j] + (1.0 - c.beta1) * g;
                    m2[j] = c.beta2 * m2[j] + (1.0 - c.beta2) * g * g;
                    let upd = (m1[j] / bc1) / ((m2[j] / bc2).sqrt() + c.adam_eps);
                    let p = &mut model.params[j];
                    if decay_mask[j] {
                        *p -= lr * wd * *p;
                    }
                    *p -= lr * upd;
                }
            }
            let train_loss = train_sum / train.len() as f64;
            let val_loss = if data.split.val.is_empty() {
                self.mean_loss(model, data.train())?
            } else {
                self.mean_loss(model, data.val())?
            };
            if !val_loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, step: steps_per_epoch });
            }
            if val_loss < history.best_val {
                history.best_val = val_loss;
                history.best_epoch = epoch;
                best.copy_from_slice(&model.params);
            }
            history.epochs.push(EpochRecord { epoch, train_loss, val_loss });
        }
        model.params = best;
        Ok(history)
    }

    /// Mean metrics over samples.
    pub fn evaluate<'s>(
        &self,
        model: &Model64,
        metrics: &MetricContext<'_>,
        samples: impl Iterator<Item = &'s Sample<f64>>,
    ) -> Result<MetricsReport> {
        let mut reports = Vec::new();
        for s in samples {
            let pred = model.predict(&s.input)?;
            reports.push(metrics.evaluate(&pred, &s.target)?);
        }
        Ok(MetricsReport::mean(&reports))
    }
}

/// Builds the `variant` of the model described by `config` on `complex`, trains it and returns it
/// with its history. The context is built once by the caller and cloned in.
pub fn ablate(
    variant: Variant,
    config: &ModelConfig,
    context: &HsdContext<f64>,
    trainer: &Trainer<'_>,
    data: &Dataset<f64>,
    seed: u64,
) -> Result<(Model64, History)> {
    let config = ModelConfig { variant, ..config_for_task(config.clone(), trainer.kind) };
    let mut model = HsdModel::new(context.clone(), config, seed)?;
    let history = trainer.fit(&mut model, data)?;
    Ok((model, history))
}

/// One row of an ablation comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub seed: u64,
    pub val_loss: f64,
    pub val_mse: f64,
    pub val_rel_l2: f64,
}

/// Markdown table of ablation rows.
pub fn ablation_table(rows: &[AblationRow]) -> String {
    let mut s = String::from("| variant | seed | val loss | val mse | val rel L2 |\n|---|---|---|---|---|\n");
    for r in rows {
        let _ = writeln!(s, "| {} | {} | {:.4e} | {:.4e} | {:.4e} |", r.variant, r.seed, r.val_loss, r.val_mse, r.val_rel_l2);
    }
    s
}

/// Largest deviation of output harmonic coefficients from the reference over the samples.
pub fn harmonic_violation<'s>(model: &Model64, samples: impl Iterator<Item = &'s Sample<f64>>) -> Result<f64> {
    let mut worst = 0.0f64;
    for s in samples {
        let trace = model.forward(&s.input)?;
        for d in model.diagnostics(&trace) {
            worst = worst.max(d.harmonic_error);
        }
    }
    Ok(worst)
}
