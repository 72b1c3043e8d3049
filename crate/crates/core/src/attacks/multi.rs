use super::combine::{combined_score, Combiner, Scorer};
use super::threshold::{decide, Verdict};
use crate::error::{Error, Result};
use crate::learners::UpdateTrace;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MultiUpdateDecision {
    Out,
    /// Member of update set `D_epoch`, `epoch` in `1..=k`.
    In { epoch: usize },
}

impl MultiUpdateDecision {
    pub fn is_in(self) -> bool {
        matches!(self, MultiUpdateDecision::In { .. })
    }

    pub fn epoch(self) -> Option<usize> {
        match self {
            MultiUpdateDecision::In { epoch } => Some(epoch),
            MultiUpdateDecision::Out => None,
        }
    }
}

/// Compare only `f0` and `fk`.
pub fn back_front(
    x: &[f64],
    y: usize,
    trace: &UpdateTrace,
    combiner: Combiner,
    scorer: &Scorer<'_>,
    threshold: f64,
) -> Result<Verdict> {
    let k = trace.k();
    if k == 0 {
        return Err(Error::Empty("update trace"));
    }
    let s = combined_score(x, y, (0, trace.first()), (k, trace.last()), combiner, scorer)?;
    Ok(decide(s, threshold))
}

/// Per-epoch thresholds for [`delta_attack`].
///
/// `batch[i][p]` is the combined score of calibration point `p` on the pair
/// `(f_i, f_{i+1})`. Epochs are calibrated in ascending order; each threshold
/// sits halfway between the `n_up`-th and `(n_up+1)`-th smallest score among
/// the points not yet assigned to an earlier epoch, and the points below it are
/// then removed from later rounds.
pub fn delta_thresholds(batch: &[Vec<f64>], k: usize, n_up: usize) -> Result<Vec<f64>> {
    if batch.len() != k {
        return Err(Error::Dimension {
            expected: k,
            found: batch.len(),
            context: "delta calibration pair count",
        });
    }
    if k == 0 || n_up == 0 {
        return Err(Error::InvalidInput("delta calibration needs k >= 1 and n_up >= 1".into()));
    }
    let n = batch[0].len();
    if batch.iter().any(|b| b.len() != n) {
        return Err(Error::InvalidInput("every pair must score the same calibration points".into()));
    }
    if n < k * n_up {
        return Err(Error::Insufficient(format!(
            "delta calibration needs at least {} points, got {n}",
            k * n_up
        )));
    }
    let mut unassigned: Vec<usize> = (0..n).collect();
    let mut thresholds = Vec::with_capacity(k);
    for scores in batch {
        let mut sorted: Vec<f64> = unassigned.iter().map(|&p| scores[p]).collect();
        sorted.sort_by(f64::total_cmp);
        let last = sorted[n_up - 1];
        let t = match sorted.get(n_up) {
            Some(&next) => 0.5 * (last + next),
            None => last + last.abs().max(1.0),
        };
        unassigned.retain(|&p| !(scores[p] < t));
        thresholds.push(t);
    }
    Ok(thresholds)
}

/// Scan consecutive pairs and report the first epoch whose combined score
/// falls below its threshold.
pub fn delta_attack(
    x: &[f64],
    y: usize,
    trace: &UpdateTrace,
    combiner: Combiner,
    scorer: &Scorer<'_>,
    thresholds: &[f64],
) -> Result<MultiUpdateDecision> {
    let k = trace.k();
    if thresholds.len() != k {
        return Err(Error::Dimension {
            expected: k,
            found: thresholds.len(),
            context: "delta thresholds vs trace updates",
        });
    }
    for i in 1..=k {
        let s = combined_score(x, y, (i - 1, trace.model(i - 1)), (i, trace.model(i)), combiner, scorer)?;
        if decide(s, thresholds[i - 1]).is_in() {
            return Ok(MultiUpdateDecision::In { epoch: i });
        }
    }
    Ok(MultiUpdateDecision::Out)
}

/// First-match scan over precomputed per-pair combined scores.
pub fn delta_decide(scores: &[f64], thresholds: &[f64]) -> MultiUpdateDecision {
    scores
        .iter()
        .zip(thresholds)
        .position(|(&s, &t)| decide(s, t).is_in())
        .map_or(MultiUpdateDecision::Out, |i| MultiUpdateDecision::In { epoch: i + 1 })
}
