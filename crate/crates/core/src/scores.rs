//! Per-example membership scores. Every score is oriented so that a LOWER
//! value is more member-like.

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::learners::{self, argmax, train_initial, Arch, Checkpoint, Model, TrainConfig, UpdateKind, UpdateStrategy};
use crate::seed::{self, stream};
use crate::stats;

/// Floor applied to the fitted OUT standard deviation.
pub const LIRA_STD_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    Loss,
    Lira,
    Gap,
}

impl ScoreKind {
    pub fn name(self) -> &'static str {
        match self {
            ScoreKind::Loss => "loss",
            ScoreKind::Lira => "lira",
            ScoreKind::Gap => "gap",
        }
    }
}

/// Per-model statistic the LiRA Gaussian is fitted to.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LiraStatistic {
    #[default]
    LogLoss,
    /// Negated logit of the true-class confidence, `-log(p_y / (1 - p_y))`.
    LogitConfidence,
}

/// Which half of a shadow pair a target model should be compared against.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Before,
    After,
}

pub fn loss_score(x: &[f64], y: usize, f: &Model) -> Result<f64> {
    learners::loss(f, x, y)
}

/// 0 when `f` classifies `(x, y)` correctly, 1 otherwise.
pub fn gap_score(x: &[f64], y: usize, f: &Model) -> Result<f64> {
    if y >= f.arch().classes {
        return Err(Error::InvalidInput(format!("label {y} out of range")));
    }
    Ok(if argmax(&f.logits(x)?) == y { 0.0 } else { 1.0 })
}

fn statistic(kind: LiraStatistic, x: &[f64], y: usize, f: &Model) -> Result<f64> {
    match kind {
        LiraStatistic::LogLoss => loss_score(x, y, f),
        LiraStatistic::LogitConfidence => {
            if y >= f.arch().classes {
                return Err(Error::InvalidInput(format!("label {y} out of range")));
            }
            let z = f.logits(x)?;
            let others: Vec<f64> = z.iter().enumerate().filter(|&(j, _)| j != y).map(|(_, &v)| v).collect();
            let m = others.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + others.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            Ok(lse - z[y])
        }
    }
}

/// How shadow pairs are trained: a base model on a random half of the pool,
/// then one update on `n_update` points from the other half.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShadowRecipe {
    pub arch: Arch,
    pub initial: TrainConfig,
    pub update: UpdateStrategy,
    pub n_update: usize,
    #[serde(default)]
    pub statistic: LiraStatistic,
}

/// One shadow `(f0, f1)` pair with its pool splits.
#[derive(Clone, Debug, PartialEq)]
pub struct ShadowPair {
    pub before: Model,
    pub after: Model,
    /// Pool indices `f0` was trained on.
    pub base_members: Vec<usize>,
    /// Pool indices of the update set.
    pub update_members: Vec<usize>,
    /// Pool indices seen by neither model.
    pub outsiders: Vec<usize>,
}

impl ShadowPair {
    pub fn is_out(&self, pool_index: usize) -> bool {
        self.outsiders.binary_search(&pool_index).is_ok()
    }
}

#[derive(Clone, Debug)]
pub struct ShadowSet {
    pool: Dataset,
    pairs: Vec<ShadowPair>,
    statistic: LiraStatistic,
    index: HashMap<(Vec<u64>, usize), usize>,
}

fn row_key(x: &[f64], y: usize) -> (Vec<u64>, usize) {
    (x.iter().map(|v| v.to_bits()).collect(), y)
}

pub fn train_shadows(pool: &Dataset, m: usize, recipe: &ShadowRecipe, seed: u64) -> Result<ShadowSet> {
    train_shadows_with(Execution::default(), pool, m, recipe, seed)
}

pub fn train_shadows_with(
    exec: Execution,
    pool: &Dataset,
    m: usize,
    recipe: &ShadowRecipe,
    seed: u64,
) -> Result<ShadowSet> {
    if m == 0 {
        return Err(Error::Config("shadow count must be >= 1".into()));
    }
    recipe.arch.check_data(pool)?;
    let half = pool.len() / 2;
    let rest = pool.len() - half;
    if half == 0 || rest < 2 * recipe.n_update || recipe.n_update == 0 {
        return Err(Error::Insufficient(format!(
            "shadow pool of {} points cannot hold a half split plus {} update and {} outside points",
            pool.len(),
            recipe.n_update,
            recipe.n_update
        )));
    }
    let pairs = exec.try_map(m, |j| -> Result<ShadowPair> {
        let s = seed::child(seed, j as u64);
        let mut order: Vec<usize> = (0..pool.len()).collect();
        order.shuffle(&mut seed::rng(seed::child(s, stream::SHUFFLE)));
        let mut base_members = order[..half].to_vec();
        let mut update_members = order[half..half + recipe.n_update].to_vec();
        let mut outsiders = order[half + recipe.n_update..].to_vec();
        base_members.sort_unstable();
        update_members.sort_unstable();
        outsiders.sort_unstable();

        let base = pool.subset(&base_members);
        let before = train_initial(&recipe.arch, &recipe.initial.with_seed(seed::child(s, stream::TRAIN)), &base)?;
        let upd = pool.subset(&update_members);
        let data = match recipe.update.kind {
            UpdateKind::SgdNew => upd,
            UpdateKind::SgdFull => Dataset::concat(&[&base, &upd])?,
        };
        let strategy = recipe.update.with_seed(seed::child(s, stream::UPDATE));
        let after = match &strategy.dp {
            None => learners::train(&before, &data, &strategy.config)?,
            Some(dp) => learners::train_dp(&before, &data, &strategy.config, dp)?,
        };
        Ok(ShadowPair {
            before,
            after,
            base_members,
            update_members,
            outsiders,
        })
    })?;
    Ok(ShadowSet::from_parts(pool.clone(), pairs, recipe.statistic))
}

impl ShadowSet {
    pub fn from_parts(pool: Dataset, pairs: Vec<ShadowPair>, statistic: LiraStatistic) -> Self {
        let mut index = HashMap::with_capacity(pool.len());
        for (i, (x, y)) in pool.iter().enumerate() {
            index.entry(row_key(x, y)).or_insert(i);
        }
        ShadowSet {
            pool,
            pairs,
            statistic,
            index,
        }
    }

    pub fn pool(&self) -> &Dataset {
        &self.pool
    }

    pub fn pairs(&self) -> &[ShadowPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn statistic(&self) -> LiraStatistic {
        self.statistic
    }

    /// Index of `(x, y)` in the shadow pool, if it is a pool point.
    pub fn pool_index(&self, x: &[f64], y: usize) -> Option<usize> {
        self.index.get(&row_key(x, y)).copied()
    }

    /// Mean and floored sample std of the statistic over the shadows that
    /// did not train on `(x, y)`. Points outside the pool are OUT everywhere.
    pub fn out_stats(&self, x: &[f64], y: usize, stage: Stage) -> Result<(f64, f64)> {
        let pool_idx = self.pool_index(x, y);
        let mut values = Vec::with_capacity(self.pairs.len());
        for pair in &self.pairs {
            if pool_idx.is_some_and(|i| !pair.is_out(i)) {
                continue;
            }
            let model = match stage {
                Stage::Before => &pair.before,
                Stage::After => &pair.after,
            };
            values.push(statistic(self.statistic, x, y, model)?);
        }
        if values.len() < 2 {
            return Err(Error::Insufficient(format!(
                "LiRA needs at least 2 OUT shadows for the point, found {}",
                values.len()
            )));
        }
        Ok((stats::mean(&values), stats::sample_std(&values).max(LIRA_STD_FLOOR)))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let repr = ShadowSetRepr {
            pool: self.pool.clone(),
            statistic: self.statistic,
            pairs: self
                .pairs
                .iter()
                .map(|p| ShadowPairRepr {
                    before: p.before.to_checkpoint(),
                    after: p.after.to_checkpoint(),
                    base_members: p.base_members.clone(),
                    update_members: p.update_members.clone(),
                    outsiders: p.outsiders.clone(),
                })
                .collect(),
        };
        let bytes = serde_json::to_vec(&repr)?;
        std::fs::write(path.as_ref(), bytes).map_err(|e| Error::io(path.as_ref(), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = std::fs::read(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        let repr: ShadowSetRepr = serde_json::from_slice(&bytes)?;
        let pairs = repr
            .pairs
            .into_iter()
            .map(|p| {
                Ok(ShadowPair {
                    before: Model::from_checkpoint(&p.before)?,
                    after: Model::from_checkpoint(&p.after)?,
                    base_members: p.base_members,
                    update_members: p.update_members,
                    outsiders: p.outsiders,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ShadowSet::from_parts(repr.pool, pairs, repr.statistic))
    }
}

#[derive(Serialize, Deserialize)]
struct ShadowSetRepr {
    pool: Dataset,
    statistic: LiraStatistic,
    pairs: Vec<ShadowPairRepr>,
}

#[derive(Serialize, Deserialize)]
struct ShadowPairRepr {
    before: Checkpoint,
    after: Checkpoint,
    base_members: Vec<usize>,
    update_members: Vec<usize>,
    outsiders: Vec<usize>,
}

/// `(stat(f) - mu_out) / s_out` against the shadows of the given stage.
pub fn lira_score(x: &[f64], y: usize, f: &Model, shadows: &ShadowSet, stage: Stage) -> Result<f64> {
    let (mu, s) = shadows.out_stats(x, y, stage)?;
    Ok((statistic(shadows.statistic, x, y, f)? - mu) / s)
}

/// Evaluate any score kind. LiRA needs `shadows`.
pub fn score(
    kind: ScoreKind,
    x: &[f64],
    y: usize,
    f: &Model,
    shadows: Option<&ShadowSet>,
    stage: Stage,
) -> Result<f64> {
    match kind {
        ScoreKind::Loss => loss_score(x, y, f),
        ScoreKind::Gap => gap_score(x, y, f),
        ScoreKind::Lira => {
            let shadows = shadows.ok_or_else(|| Error::Config("the LiRA score needs a shadow set".into()))?;
            lira_score(x, y, f, shadows, stage)
        }
    }
}
