//! Seeded mini-batch training with momentum and gradient-norm clipping.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ctc::ctc_loss;
use super::model::{AcousticModel, DropoutSpec, Params};
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Gradients with a larger global norm are rescaled to this norm.
    pub clip_norm: f64,
    /// Fraction of examples held out to report generalisation loss.
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 8,
            epochs: 60,
            clip_norm: 5.0,
            holdout_fraction: 0.1,
            seed: 7,
        }
    }
}

/// One training example: feature frames and target labels.
#[derive(Clone, Debug)]
pub struct Example<T: Real> {
    pub features: Array2<T>,
    pub target: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub initial_holdout_loss: f64,
    pub final_holdout_loss: f64,
    pub epoch_train_loss: Vec<f64>,
    pub train_examples: usize,
    pub holdout_examples: usize,
}

/// Mean dropout-off CTC loss over `examples`.
pub fn mean_loss<T: Real>(model: &AcousticModel<T>, examples: &[Example<T>]) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::Empty);
    }
    let mut total = 0.0;
    for ex in examples {
        total += ctc_loss(&model.logits(&ex.features, None)?, &ex.target)?.loss.to_f64_lossy();
    }
    Ok(total / examples.len() as f64)
}

/// Trains in place. The held-out slice is the tail of `examples`; when it
/// would be empty the training set doubles as the held-out set.
pub fn train<T: Real>(model: &mut AcousticModel<T>, examples: &[Example<T>], cfg: &TrainConfig) -> Result<TrainReport> {
    if examples.is_empty() {
        return Err(Error::Empty);
    }
    if cfg.batch_size == 0 || !(0.0..1.0).contains(&cfg.momentum) || cfg.learning_rate < 0.0 {
        return Err(Error::InvalidParameter(format!("training config {cfg:?}")));
    }
    let n_hold = ((examples.len() as f64) * cfg.holdout_fraction).floor() as usize;
    let n_hold = n_hold.min(examples.len() - 1);
    let (fit, hold) = examples.split_at(examples.len() - n_hold);
    let hold = if hold.is_empty() { fit } else { hold };

    let initial = mean_loss(model, hold)?;
    let lr = T::lit(cfg.learning_rate);
    let mu = T::lit(cfg.momentum);
    let clip = T::lit(cfg.clip_norm);
    let mut velocity: Params<T> = model.params.zeros_like();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..fit.len()).collect();
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    let mut step: u64 = 0;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grad = model.params.zeros_like();
            for (j, &idx) in batch.iter().enumerate() {
                let ex = &fit[idx];
                let spec = DropoutSpec::new(model.train_dropout_rate, cfg.seed ^ (step << 16) ^ j as u64);
                let tape = model.forward_tape(&ex.features, Some(&spec))?;
                let ctc = ctc_loss(&tape.logits, &ex.target)?;
                let loss = ctc.loss.to_f64_lossy();
                if !loss.is_finite() {
                    return Err(Error::Divergence { step: step as usize, detail: format!("epoch {epoch}: loss {loss}") });
                }
                sum += loss;
                let (g, _) = model.backward(&tape, &ctc.grad, true)?;
                grad.scale_add(T::one(), &g.expect("parameter gradients requested"), T::one());
            }
            grad.scale(T::one() / T::from_usize_lossy(batch.len()));
            let norm = grad.norm();
            if !norm.is_finite() {
                return Err(Error::Divergence { step: step as usize, detail: format!("epoch {epoch}: gradient norm {norm}") });
            }
            if norm > clip {
                grad.scale(clip / norm);
            }
            velocity.scale_add(mu, &grad, T::one());
            model.params.scale_add(T::one(), &velocity, -lr);
            step += 1;
        }
        epoch_loss.push(sum / fit.len() as f64);
    }
    if !model.params.is_finite() {
        return Err(Error::Divergence { step: step as usize, detail: "non-finite parameters".into() });
    }
    Ok(TrainReport {
        initial_holdout_loss: initial,
        final_holdout_loss: mean_loss(model, hold)?,
        epoch_train_loss: epoch_loss,
        train_examples: fit.len(),
        holdout_examples: n_hold,
    })
}
