use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One challenge answered by one attack.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub world: usize,
    pub point: usize,
    pub attack: String,
    /// Hidden update index, `1..=k`.
    pub a: usize,
    /// Hidden membership bit.
    pub b: u8,
    pub a_hat: usize,
    pub b_hat: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub combined: Option<f64>,
    /// Score of the challenge point on each model the attack looked at.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scores: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub thresholds: Vec<f64>,
}

impl TrialRecord {
    pub fn generic_correct(&self) -> bool {
        self.b == self.b_hat
    }

    pub fn specific_correct(&self) -> bool {
        self.b == self.b_hat && (self.b == 0 || self.a == self.a_hat)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub attack: String,
    pub trials: usize,
    pub accuracy: f64,
    /// Binomial standard error of `accuracy`.
    pub accuracy_stderr: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub generic_accuracy: f64,
    pub specific_accuracy: f64,
    pub counts: Counts,
    /// `epoch_confusion[truth][guess]`, index 0 meaning OUT and `i` meaning
    /// IN at update `i`.
    pub epoch_confusion: Vec<Vec<usize>>,
    /// Set on every attack that attains the highest accuracy of its run.
    #[serde(default)]
    pub best: bool,
}

impl MetricsReport {
    /// Recompute accuracy, precision and recall from the counts and compare
    /// exactly.
    pub fn check_consistency(&self) -> Result<()> {
        let c = self.counts;
        let n = c.tp + c.fp + c.tn + c.fn_;
        let acc = (c.tp + c.tn) as f64 / n as f64;
        let prec = (c.tp + c.fp > 0).then(|| c.tp as f64 / (c.tp + c.fp) as f64);
        let rec = (c.tp + c.fn_ > 0).then(|| c.tp as f64 / (c.tp + c.fn_) as f64);
        if n != self.trials || acc != self.accuracy || prec != self.precision || rec != self.recall {
            return Err(Error::InvalidInput(format!(
                "metrics for {} are inconsistent with their counts",
                self.attack
            )));
        }
        Ok(())
    }
}

/// Aggregate the records of one attack.
pub fn compute_metrics(records: &[TrialRecord]) -> Result<MetricsReport> {
    let first = records.first().ok_or(Error::Empty("trial records"))?;
    let k = records.iter().map(|r| r.a.max(r.a_hat)).max().unwrap_or(1).max(1);
    let mut c = Counts::default();
    let mut generic = 0usize;
    let mut specific = 0usize;
    let mut confusion = vec![vec![0usize; k + 1]; k + 1];
    for r in records {
        if r.b > 1 || r.b_hat > 1 {
            return Err(Error::InvalidInput("membership bits must be 0 or 1".into()));
        }
        match (r.b, r.b_hat) {
            (1, 1) => c.tp += 1,
            (0, 1) => c.fp += 1,
            (0, 0) => c.tn += 1,
            _ => c.fn_ += 1,
        }
        generic += usize::from(r.generic_correct());
        specific += usize::from(r.specific_correct());
        let truth = if r.b == 1 { r.a } else { 0 };
        let guess = if r.b_hat == 1 { r.a_hat } else { 0 };
        confusion[truth][guess] += 1;
    }
    let n = records.len();
    let accuracy = (c.tp + c.tn) as f64 / n as f64;
    let report = MetricsReport {
        attack: first.attack.clone(),
        trials: n,
        accuracy,
        accuracy_stderr: (accuracy * (1.0 - accuracy) / n as f64).sqrt(),
        precision: (c.tp + c.fp > 0).then(|| c.tp as f64 / (c.tp + c.fp) as f64),
        recall: (c.tp + c.fn_ > 0).then(|| c.tp as f64 / (c.tp + c.fn_) as f64),
        generic_accuracy: generic as f64 / n as f64,
        specific_accuracy: specific as f64 / n as f64,
        counts: c,
        epoch_confusion: confusion,
        best: false,
    };
    report.check_consistency()?;
    Ok(report)
}

/// Specific accuracy of guessing both bits uniformly at random: `1 / (2k)`.
pub fn baseline_random(k: usize) -> Result<f64> {
    if k < 1 {
        return Err(Error::InvalidInput("k must be >= 1".into()));
    }
    Ok(1.0 / (2.0 * k as f64))
}

/// Specific accuracy of a generic attack with accuracy `p` that guesses the
/// update index uniformly: `p / k`.
pub fn baseline_generic(p: f64, k: usize) -> Result<f64> {
    if k < 1 {
        return Err(Error::InvalidInput("k must be >= 1".into()));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidInput(format!("p must be in [0, 1], got {p}")));
    }
    Ok(p / k as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(b: u8, b_hat: u8) -> TrialRecord {
        TrialRecord {
            world: 0,
            point: 0,
            attack: "t".into(),
            a: 1,
            a_hat: 1,
            b,
            b_hat,
            combined: None,
            scores: vec![],
            thresholds: vec![],
        }
    }

    #[test]
    fn confusion_arithmetic() {
        let mut rs = vec![rec(1, 1), rec(1, 1), rec(0, 1), rec(1, 0)];
        rs.extend((0..4).map(|_| rec(0, 0)));
        let m = compute_metrics(&rs).unwrap();
        assert_eq!(m.precision, Some(2.0 / 3.0));
        assert_eq!(m.recall, Some(2.0 / 3.0));
        assert_eq!(m.accuracy, 6.0 / 8.0);
    }

    #[test]
    fn always_in_under_balance() {
        let rs = vec![rec(1, 1), rec(0, 1), rec(1, 1), rec(0, 1)];
        let m = compute_metrics(&rs).unwrap();
        assert_eq!(m.recall, Some(1.0));
        assert_eq!(m.precision, Some(0.5));
    }

    #[test]
    fn baselines() {
        assert_eq!(baseline_random(1).unwrap(), 0.5);
        assert_eq!(baseline_random(4).unwrap(), 0.125);
        assert_eq!(baseline_random(10).unwrap(), 0.05);
        assert!(baseline_random(0).is_err());
        assert_eq!(baseline_generic(0.5, 2).unwrap(), 0.25);
        assert_eq!(baseline_generic(1.0, 1).unwrap(), 1.0);
        assert_eq!(baseline_generic(0.5, 8).unwrap(), 0.0625);
        assert!(baseline_generic(1.5, 2).is_err());
    }

    #[test]
    fn empty_rejected() {
        assert!(compute_metrics(&[]).is_err());
    }
}
