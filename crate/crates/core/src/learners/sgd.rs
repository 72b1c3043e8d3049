use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::model::{Arch, Model};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::seed::{self, stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    #[serde(default)]
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(learning_rate: f64, batch_size: usize, epochs: usize, seed: u64) -> Self {
        TrainConfig {
            learning_rate,
            batch_size,
            epochs,
            seed,
        }
    }

    /// Initial training recipe: 50 epochs at 0.01.
    pub fn initial(seed: u64) -> Self {
        Self::new(0.01, 32, 50, seed)
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        TrainConfig { seed, ..self.clone() }
    }

    /// A zero learning rate is accepted so that "no-op" updates can be
    /// expressed; negative or non-finite rates are not.
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!(
                "learning_rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DPConfig {
    pub clip_norm: f64,
    pub noise_multiplier: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
}

fn default_delta() -> f64 {
    1e-4
}

impl DPConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip_norm > 0.0) || !self.clip_norm.is_finite() {
            return Err(Error::Config(format!("clip_norm must be > 0, got {}", self.clip_norm)));
        }
        if !(self.noise_multiplier >= 0.0) || !self.noise_multiplier.is_finite() {
            return Err(Error::Config(format!(
                "noise_multiplier must be >= 0, got {}",
                self.noise_multiplier
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config(format!("delta must be in (0, 1), got {}", self.delta)));
        }
        Ok(())
    }
}

/// Gradient step on one batch. With `dp`, per-example gradients are clipped,
/// summed, perturbed with `N(0, (sigma*C)^2)` per coordinate and then averaged.
fn step(
    model: &mut Model,
    data: &Dataset,
    batch: &[usize],
    eta: f64,
    dp: Option<&DPConfig>,
    noise: &mut seed::Rng,
) -> Result<()> {
    let p = model.params().len();
    let mut sum = vec![0.0; p];
    match dp {
        None => {
            for &i in batch {
                model.accumulate_grad(data.row(i), data.label(i), &mut sum)?;
            }
            if sum.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite {
                    context: "gradient".into(),
                });
            }
        }
        Some(dp) => {
            let mut g = vec![0.0; p];
            for &i in batch {
                g.iter_mut().for_each(|v| *v = 0.0);
                model.accumulate_grad(data.row(i), data.label(i), &mut g)?;
                let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                if !norm.is_finite() {
                    return Err(Error::NonFinite {
                        context: "per-example gradient".into(),
                    });
                }
                let scale = if norm > dp.clip_norm { dp.clip_norm / norm } else { 1.0 };
                debug_assert!(
                    norm * scale <= dp.clip_norm * (1.0 + 1e-12),
                    "clipped gradient norm {} exceeds {}",
                    norm * scale,
                    dp.clip_norm
                );
                for (s, v) in sum.iter_mut().zip(&g) {
                    *s += scale * v;
                }
            }
            let std = dp.noise_multiplier * dp.clip_norm;
            if std > 0.0 {
                for s in &mut sum {
                    let z: f64 = StandardNormal.sample(noise);
                    *s += std * z;
                }
            }
        }
    }
    let rate = eta / batch.len() as f64;
    for (w, g) in model.params_mut().iter_mut().zip(&sum) {
        *w -= rate * g;
    }
    if model.params().iter().any(|w| !w.is_finite()) {
        return Err(Error::NonFinite {
            context: "parameters after step".into(),
        });
    }
    Ok(())
}

fn check_batch(model: &Model, batch: &Dataset) -> Result<()> {
    model.arch().check_data(batch)?;
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    Ok(())
}

/// `theta - (eta / B) * sum of cross-entropy gradients over the batch`.
pub fn sgd_step(model: &Model, batch: &Dataset, eta: f64) -> Result<Model> {
    check_batch(model, batch)?;
    let mut out = model.clone();
    let idx: Vec<usize> = (0..batch.len()).collect();
    step(&mut out, batch, &idx, eta, None, &mut seed::rng(0))?;
    Ok(out)
}

pub fn dp_sgd_step(model: &Model, batch: &Dataset, eta: f64, dp: &DPConfig, seed: u64) -> Result<Model> {
    dp.validate()?;
    check_batch(model, batch)?;
    let mut out = model.clone();
    let idx: Vec<usize> = (0..batch.len()).collect();
    step(&mut out, batch, &idx, eta, Some(dp), &mut seed::rng(seed))?;
    Ok(out)
}

/// Minibatch SGD starting from `model`. The data is reshuffled every epoch and
/// the final short batch is kept.
pub fn train(model: &Model, data: &Dataset, config: &TrainConfig) -> Result<Model> {
    run(model, data, config, None)
}

pub fn train_dp(model: &Model, data: &Dataset, config: &TrainConfig, dp: &DPConfig) -> Result<Model> {
    dp.validate()?;
    run(model, data, config, Some(dp))
}

fn run(model: &Model, data: &Dataset, config: &TrainConfig, dp: Option<&DPConfig>) -> Result<Model> {
    config.validate()?;
    check_batch(model, data)?;
    let mut out = model.clone();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut shuffle = seed::rng(seed::child(config.seed, stream::SHUFFLE));
    let mut noise = seed::rng(seed::child(config.seed, stream::NOISE));
    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle);
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            step(&mut out, data, batch, config.learning_rate, dp, &mut noise).map_err(|e| match e {
                Error::NonFinite { context } => Error::NonFinite {
                    context: format!("{context} at epoch {epoch}, batch {b}"),
                },
                other => other,
            })?;
        }
    }
    Ok(out)
}

/// Initialise from `child(config.seed, INIT)` and train on `d0`.
pub fn train_initial(arch: &Arch, config: &TrainConfig, d0: &Dataset) -> Result<Model> {
    config.validate()?;
    arch.check_data(d0)?;
    let init = Model::init(arch.clone(), seed::child(config.seed, stream::INIT))?;
    train(&init, d0, config)
}
