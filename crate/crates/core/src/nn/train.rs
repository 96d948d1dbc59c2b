//! Mini-batch Adam training on the squared-error loss.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::label::LfLabel;
use super::model::{loss, MlpModel, HIDDEN};
use crate::frontend::FeatureWindow;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            batch: 64,
            epochs: 30,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidInput(format!("lr must be positive, got {}", self.lr)));
        }
        if self.batch == 0 {
            return Err(Error::InvalidInput("batch must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidInput("Adam betas must lie in [0, 1)".into()));
        }
        if !(self.eps > 0.0) {
            return Err(Error::InvalidInput("Adam eps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean mini-batch loss of each epoch, `epochs` entries.
    pub loss_curve: Vec<f64>,
    /// Training-mode loss over the dataset before the first update.
    pub initial_loss: f64,
    /// The same measurement after the last update.
    pub final_loss: f64,
}

/// Input vectors stored column-wise.
pub fn batch_inputs<'a>(rows: impl ExactSizeIterator<Item = &'a [f64]>) -> DMatrix<f64> {
    let n = rows.len();
    let mut it = rows.peekable();
    let dim = it.peek().map_or(0, |r| r.len());
    let mut m = DMatrix::zeros(dim, n);
    for (j, r) in it.enumerate() {
        m.column_mut(j).copy_from_slice(r);
    }
    m
}

pub fn batch_labels<'a>(labels: impl ExactSizeIterator<Item = &'a LfLabel>) -> DMatrix<f64> {
    let n = labels.len();
    let mut m = DMatrix::zeros(4, n);
    for (j, l) in labels.enumerate() {
        m.column_mut(j).copy_from_slice(&l.to_array());
    }
    m
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    fn new(model: &MlpModel) -> Self {
        let zeros: Vec<Vec<f64>> = model.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    fn step(&mut self, model: &mut MlpModel, grads: &[Vec<f64>], cfg: &TrainConfig) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        for (k, param) in model.tensors_mut().into_iter().enumerate() {
            let (m, v, g) = (&mut self.m[k], &mut self.v[k], &grads[k]);
            for i in 0..param.len() {
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                param[i] -= cfg.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + cfg.eps);
            }
        }
    }
}

/// Training-mode loss over consecutive batches, weighted by batch size.
fn dataset_loss(model: &MlpModel, data: &[(FeatureWindow, LfLabel)], batch: usize) -> f64 {
    let mut total = 0.0;
    for chunk in data.chunks(batch) {
        let x = batch_inputs(chunk.iter().map(|(w, _)| w.values.as_slice()));
        let y = batch_labels(chunk.iter().map(|(_, l)| l));
        total += loss(&model.forward_train(&x).out, &y) * chunk.len() as f64;
    }
    total / data.len() as f64
}

/// Trains a freshly initialized full-size model.
pub fn train(
    data: &[(FeatureWindow, LfLabel)],
    cfg: &TrainConfig,
) -> Result<(MlpModel, TrainReport)> {
    let inputs = data.first().map_or(0, |(w, _)| w.values.len());
    train_model(MlpModel::new(inputs, HIDDEN, cfg.seed), data, cfg)
}

/// Trains `model` in place of a fresh one; the shuffle order depends only on
/// `cfg.seed`, so identical inputs give bit-identical results.
pub fn train_model(
    mut model: MlpModel,
    data: &[(FeatureWindow, LfLabel)],
    cfg: &TrainConfig,
) -> Result<(MlpModel, TrainReport)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidInput("training set is empty".into()));
    }
    for (i, (w, l)) in data.iter().enumerate() {
        if w.values.len() != model.inputs() {
            return Err(Error::InvalidInput(format!(
                "sample {i} has {} inputs, model expects {}",
                w.values.len(),
                model.inputs()
            )));
        }
        if !l.to_array().iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput(format!("label {i} is not finite")));
        }
    }

    let initial_loss = dataset_loss(&model, data, cfg.batch);
    let mut adam = Adam::new(&model);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut loss_curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch) {
            let x = batch_inputs(chunk.iter().map(|&i| data[i].0.values.as_slice()));
            let y = batch_labels(chunk.iter().map(|&i| &data[i].1));
            let cache = model.forward_train(&x);
            let l = loss(&cache.out, &y);
            if !l.is_finite() {
                return Err(Error::Diverged { epoch, loss: l });
            }
            total += l * chunk.len() as f64;
            let grads = model.backward(&cache, &y);
            model.update_running_stats(&cache);
            adam.step(&mut model, &grads, cfg);
        }
        let epoch_loss = total / data.len() as f64;
        log::info!("epoch {:>3}: loss {epoch_loss:.6e}", epoch + 1);
        loss_curve.push(epoch_loss);
    }
    let final_loss = dataset_loss(&model, data, cfg.batch);
    if !final_loss.is_finite() {
        return Err(Error::Diverged {
            epoch: cfg.epochs,
            loss: final_loss,
        });
    }
    Ok((
        model,
        TrainReport {
            loss_curve,
            initial_loss,
            final_loss,
        },
    ))
}
