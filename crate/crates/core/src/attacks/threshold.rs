use serde::{Deserialize, Serialize};

use super::combine::{combined_score, Combiner, Scorer};
use crate::error::{Error, Result};
use crate::scores::ShadowSet;
use crate::stats::quantile;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    /// Median of the batch.
    #[default]
    Accuracy,
    /// 10th percentile of the batch.
    Precision,
}

impl ThresholdMode {
    pub fn level(self) -> f64 {
        match self {
            ThresholdMode::Accuracy => 0.5,
            ThresholdMode::Precision => 0.1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    In,
    Out,
}

impl Verdict {
    pub fn is_in(self) -> bool {
        self == Verdict::In
    }
}

/// IN iff `combined < threshold`; ties are OUT.
pub fn decide(combined: f64, threshold: f64) -> Verdict {
    if combined < threshold {
        Verdict::In
    } else {
        Verdict::Out
    }
}

pub fn calibrate_batch(combined_scores: &[f64], mode: ThresholdMode) -> Result<f64> {
    quantile(combined_scores, mode.level())
}

pub fn calibrate_rank(out_scores: &[f64], q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidInput(format!("rank level q must be in (0, 1), got {q}")));
    }
    quantile(out_scores, q)
}

/// Combined scores of the first shadow pair on its own update set and on an
/// equal number of points neither shadow model saw, paired with membership.
/// Points the score cannot be evaluated on (LiRA without enough OUT shadows)
/// are skipped.
pub fn transfer_scores(shadows: &ShadowSet, combiner: Combiner, scorer: &Scorer<'_>) -> Result<Vec<(f64, bool)>> {
    let pair = shadows
        .pairs()
        .first()
        .ok_or_else(|| Error::Config("transfer calibration needs a shadow pair".into()))?;
    let pool = shadows.pool();
    let ins = pair.update_members.iter().map(|&i| (i, true));
    let outs = pair.outsiders.iter().take(pair.update_members.len()).map(|&i| (i, false));
    let mut out = Vec::with_capacity(2 * pair.update_members.len());
    for (i, member) in ins.chain(outs) {
        match combined_score(pool.row(i), pool.label(i), (0, &pair.before), (1, &pair.after), combiner, scorer) {
            Ok(v) => out.push((v, member)),
            Err(Error::Insufficient(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    if out.is_empty() {
        return Err(Error::Insufficient("no shadow point could be scored for transfer".into()));
    }
    Ok(out)
}

/// Batch calibration run on the first shadow pair instead of the target.
pub fn calibrate_transfer(
    shadows: &ShadowSet,
    combiner: Combiner,
    scorer: &Scorer<'_>,
    mode: ThresholdMode,
) -> Result<f64> {
    let scores: Vec<f64> = transfer_scores(shadows, combiner, scorer)?.into_iter().map(|(s, _)| s).collect();
    calibrate_batch(&scores, mode)
}
