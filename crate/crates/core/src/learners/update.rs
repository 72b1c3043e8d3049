use serde::{Deserialize, Serialize};

use super::model::Model;
use super::sgd::{train, train_dp, DPConfig, TrainConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateKind {
    /// Fine-tune on the newest update set only.
    SgdNew,
    /// Fine-tune on everything seen so far, `D0 ∪ ... ∪ Di`.
    SgdFull,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UpdateStrategy {
    pub kind: UpdateKind,
    pub config: TrainConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dp: Option<DPConfig>,
}

impl UpdateStrategy {
    /// 10 epochs at 0.001.
    pub fn sgd_new(seed: u64) -> Self {
        UpdateStrategy {
            kind: UpdateKind::SgdNew,
            config: TrainConfig::new(0.001, 32, 10, seed),
            dp: None,
        }
    }

    /// 10 epochs at 0.01.
    pub fn sgd_full(seed: u64) -> Self {
        UpdateStrategy {
            kind: UpdateKind::SgdFull,
            config: TrainConfig::new(0.01, 32, 10, seed),
            dp: None,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        UpdateStrategy {
            config: self.config.with_seed(seed),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if let Some(dp) = &self.dp {
            dp.validate()?;
        }
        Ok(())
    }
}

/// `f0 ... fk` together with the data that produced them.
#[derive(Clone, Debug)]
pub struct UpdateTrace {
    models: Vec<Model>,
    update_sets: Vec<Dataset>,
    initial_set: Dataset,
    strategies: Vec<UpdateStrategy>,
}

impl UpdateTrace {
    pub fn new(f0: Model, d0: Dataset) -> Result<Self> {
        f0.arch().check_data(&d0)?;
        Ok(UpdateTrace {
            models: vec![f0],
            update_sets: Vec::new(),
            initial_set: d0,
            strategies: Vec::new(),
        })
    }

    /// Number of updates applied so far.
    pub fn k(&self) -> usize {
        self.update_sets.len()
    }

    pub fn models(&self) -> &[Model] {
        &self.models
    }

    pub fn model(&self, i: usize) -> &Model {
        &self.models[i]
    }

    pub fn first(&self) -> &Model {
        &self.models[0]
    }

    pub fn last(&self) -> &Model {
        self.models.last().expect("trace always holds f0")
    }

    pub fn update_sets(&self) -> &[Dataset] {
        &self.update_sets
    }

    /// `D_i` for `i` in `1..=k`.
    pub fn update_set(&self, i: usize) -> &Dataset {
        &self.update_sets[i - 1]
    }

    pub fn initial_set(&self) -> &Dataset {
        &self.initial_set
    }

    pub fn strategies(&self) -> &[UpdateStrategy] {
        &self.strategies
    }

    /// `D0 ∪ ... ∪ Dk`.
    pub fn all_training_data(&self) -> Result<Dataset> {
        let mut parts = vec![&self.initial_set];
        parts.extend(self.update_sets.iter());
        Dataset::concat(&parts)
    }
}

/// Apply one update: `f_i = A_up(f_{i-1}; D_i, ..., D_0)`, appending `f_i`,
/// `D_i` and the strategy to the trace.
pub fn update_model<'t>(trace: &'t mut UpdateTrace, di: Dataset, strategy: &UpdateStrategy) -> Result<&'t Model> {
    strategy.validate()?;
    let prev = trace.last();
    prev.arch().check_data(&di)?;
    if di.is_empty() {
        return Err(Error::Empty("update set"));
    }
    let data = match strategy.kind {
        UpdateKind::SgdNew => di.clone(),
        UpdateKind::SgdFull => {
            let mut parts = vec![&trace.initial_set];
            parts.extend(trace.update_sets.iter());
            parts.push(&di);
            Dataset::concat(&parts)?
        }
    };
    let next = match &strategy.dp {
        None => train(prev, &data, &strategy.config)?,
        Some(dp) => train_dp(prev, &data, &strategy.config, dp)?,
    };
    trace.models.push(next);
    trace.update_sets.push(di);
    trace.strategies.push(strategy.clone());
    Ok(trace.last())
}
