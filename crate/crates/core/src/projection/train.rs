//! Mini-batch Adam regression of the model onto nearest-neighbor targets.

use ndarray::{Array1, Array2, Zip};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::ProjectionSample;
use super::mlp::{Gradients, MlpModel, Normalization};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Cosine-annealed floor reached at the last epoch; equal to
    /// `learning_rate` for a constant rate.
    pub final_learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    /// Fraction of the dataset held out for validation.
    pub holdout_fraction: f64,
    /// Held-out MSE (standardized units) the run is expected to reach.
    pub max_holdout_mse: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 80,
            batch_size: 256,
            learning_rate: 1e-3,
            final_learning_rate: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            holdout_fraction: 0.05,
            max_holdout_mse: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.learning_rate <= 0.0 || self.final_learning_rate <= 0.0 {
            return Err(Error::Validation("epochs, batch size and learning rates must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::Validation("holdout_fraction must be in [0, 1)".into()));
        }
        Ok(())
    }

    fn rate_at(&self, epoch: usize) -> f64 {
        if self.epochs <= 1 {
            return self.learning_rate;
        }
        let t = epoch as f64 / (self.epochs - 1) as f64;
        self.final_learning_rate
            + 0.5 * (self.learning_rate - self.final_learning_rate) * (1.0 + (std::f64::consts::PI * t).cos())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean training MSE per epoch (standardized units).
    pub train_loss: Vec<f64>,
    /// Held-out MSE per epoch (standardized units); empty without a holdout.
    pub holdout_loss: Vec<f64>,
    pub holdout_indices: Vec<usize>,
    pub threshold_met: Option<bool>,
}

struct Adam {
    m: Gradients,
    v: Gradients,
    t: i32,
}

impl Adam {
    fn new(model: &MlpModel) -> Self {
        let zeros = || Gradients {
            weight: model.layers.iter().map(|l| Array2::zeros(l.weight.raw_dim())).collect(),
            bias: model.layers.iter().map(|l| Array1::zeros(l.bias.raw_dim())).collect(),
        };
        Adam {
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    fn step(&mut self, model: &mut MlpModel, g: &Gradients, lr: f64, cfg: &TrainConfig) {
        self.t += 1;
        let (b1, b2, eps) = (cfg.beta1, cfg.beta2, cfg.epsilon);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        for (i, layer) in model.layers.iter_mut().enumerate() {
            Zip::from(&mut layer.weight)
                .and(&mut self.m.weight[i])
                .and(&mut self.v.weight[i])
                .and(&g.weight[i])
                .for_each(|w, m, v, g| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *w -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                });
            Zip::from(&mut layer.bias)
                .and(&mut self.m.bias[i])
                .and(&mut self.v.bias[i])
                .and(&g.bias[i])
                .for_each(|w, m, v, g| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *w -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                });
        }
    }
}

/// Standardized inputs and targets as `(n, 6)` arrays.
fn standardized(norm: &Normalization, samples: &[ProjectionSample], idx: &[usize]) -> (Array2<f64>, Array2<f64>) {
    let mut x = Array2::zeros((idx.len(), 6));
    let mut y = Array2::zeros((idx.len(), 6));
    for (r, &i) in idx.iter().enumerate() {
        let xi = norm.normalize_input(&samples[i].input.to_array());
        let yi = norm.normalize_output(&samples[i].target.to_array());
        for k in 0..6 {
            x[(r, k)] = xi[k];
            y[(r, k)] = yi[k];
        }
    }
    (x, y)
}

/// Mean squared error over all entries, scaled by `scale`, and its gradients.
pub fn loss_and_gradients(model: &MlpModel, x: &Array2<f64>, y: &Array2<f64>, scale: f64) -> (f64, Gradients) {
    let (out, tape) = model.forward_normalized(x.view());
    let diff = &out - y;
    let n = diff.len() as f64;
    let loss = scale * diff.mapv(|d| d * d).sum() / n;
    let grad_out = diff.mapv(|d| scale * 2.0 * d / n);
    let (grads, _) = model.backward(&tape, &grad_out, true);
    (loss, grads.expect("parameter gradients requested"))
}

pub fn mse(model: &MlpModel, x: &Array2<f64>, y: &Array2<f64>) -> f64 {
    let (out, _) = model.forward_normalized(x.view());
    (&out - y).mapv(|d| d * d).mean().unwrap_or(0.0)
}

/// Trains `model` in place; normalization statistics are fitted to the
/// training split and stored in the model.
pub fn train(model: &mut MlpModel, dataset: &[ProjectionSample], cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::Validation("empty training set".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut rng);
    let n_hold = ((dataset.len() as f64) * cfg.holdout_fraction).floor() as usize;
    let n_hold = n_hold.min(dataset.len() - 1);
    let (hold_idx, train_idx) = order.split_at(n_hold);
    let mut hold_idx = hold_idx.to_vec();
    hold_idx.sort_unstable();
    let mut train_idx = train_idx.to_vec();

    let inputs: Vec<[f64; 6]> = train_idx.iter().map(|&i| dataset[i].input.to_array()).collect();
    let targets: Vec<[f64; 6]> = train_idx.iter().map(|&i| dataset[i].target.to_array()).collect();
    model.norm = Normalization::fit(&inputs, &targets);

    let (hx, hy) = standardized(&model.norm, dataset, &hold_idx);
    let mut adam = Adam::new(model);
    let mut report = TrainReport {
        train_loss: Vec::with_capacity(cfg.epochs),
        holdout_loss: Vec::new(),
        holdout_indices: hold_idx.clone(),
        threshold_met: None,
    };

    for epoch in 0..cfg.epochs {
        let lr = cfg.rate_at(epoch);
        train_idx.shuffle(&mut rng);
        let mut total = 0.0;
        let mut count = 0usize;
        for (b, batch) in train_idx.chunks(cfg.batch_size).enumerate() {
            let (x, y) = standardized(&model.norm, dataset, batch);
            let (loss, grads) = loss_and_gradients(model, &x, &y, 1.0);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    step: epoch,
                    detail: format!("batch {} of epoch {}, lr {:e}", b, epoch, lr),
                });
            }
            adam.step(model, &grads, lr, cfg);
            total += loss * batch.len() as f64;
            count += batch.len();
        }
        let epoch_loss = total / count as f64;
        report.train_loss.push(epoch_loss);
        if !hold_idx.is_empty() {
            let h = mse(model, &hx, &hy);
            report.holdout_loss.push(h);
            log::info!("epoch {:>4}  lr {:.2e}  train {:.6}  holdout {:.6}", epoch, lr, epoch_loss, h);
        } else {
            log::info!("epoch {:>4}  lr {:.2e}  train {:.6}", epoch, lr, epoch_loss);
        }
    }
    if !model.is_finite() {
        return Err(Error::NonFiniteLoss {
            step: cfg.epochs,
            detail: "non-finite model parameters after training".into(),
        });
    }
    if let (Some(limit), Some(last)) = (cfg.max_holdout_mse, report.holdout_loss.last()) {
        let ok = *last <= limit;
        if !ok {
            log::warn!("held-out MSE {:.6} above configured limit {:.6}", last, limit);
        }
        report.threshold_met = Some(ok);
    }
    Ok(report)
}

/// Largest relative error between backpropagated parameter gradients and
/// central differences (step `h` in standardized units) for one sample.
pub fn train_gradient_check(model: &MlpModel, sample: &ProjectionSample, h: f64) -> f64 {
    let (x, y) = standardized(&model.norm, std::slice::from_ref(sample), &[0]);
    let (_, grads) = loss_and_gradients(model, &x, &y, 1.0);
    let mut worst = 0.0f64;
    let mut probe = model.clone();
    for l in 0..model.layers.len() {
        for idx in 0..model.layers[l].weight.len() {
            let analytic = grads.weight[l].as_slice().unwrap()[idx];
            let orig = model.layers[l].weight.as_slice().unwrap()[idx];
            probe.layers[l].weight.as_slice_mut().unwrap()[idx] = orig + h;
            let lp = loss_and_gradients(&probe, &x, &y, 1.0).0;
            probe.layers[l].weight.as_slice_mut().unwrap()[idx] = orig - h;
            let lm = loss_and_gradients(&probe, &x, &y, 1.0).0;
            probe.layers[l].weight.as_slice_mut().unwrap()[idx] = orig;
            worst = worst.max(relative_error(analytic, (lp - lm) / (2.0 * h)));
        }
        for idx in 0..model.layers[l].bias.len() {
            let analytic = grads.bias[l][idx];
            let orig = model.layers[l].bias[idx];
            probe.layers[l].bias[idx] = orig + h;
            let lp = loss_and_gradients(&probe, &x, &y, 1.0).0;
            probe.layers[l].bias[idx] = orig - h;
            let lm = loss_and_gradients(&probe, &x, &y, 1.0).0;
            probe.layers[l].bias[idx] = orig;
            worst = worst.max(relative_error(analytic, (lp - lm) / (2.0 * h)));
        }
    }
    worst
}

/// `|a - b| / max(|a|, |b|)` with an absolute floor of 1e-8 on the scale.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}
