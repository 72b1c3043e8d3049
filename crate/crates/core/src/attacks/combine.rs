use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::Model;
use crate::scores::{self, ScoreKind, ShadowSet, Stage};

pub const DEFAULT_DAMPING: f64 = 1e-6;

fn default_damping() -> f64 {
    DEFAULT_DAMPING
}

/// How the scores on the model before and after an update are merged into one
/// scalar. Lower combined values are more member-like.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum Combiner {
    /// `s1 - s0`
    Diff,
    /// `(s1 + c) / (s0 + c)`
    Ratio {
        #[serde(default = "default_damping")]
        damping: f64,
    },
}

impl Combiner {
    pub fn ratio() -> Self {
        Combiner::Ratio {
            damping: DEFAULT_DAMPING,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Combiner::Diff => "score_diff",
            Combiner::Ratio { .. } => "score_ratio",
        }
    }

    pub fn validate(self) -> Result<()> {
        if let Combiner::Ratio { damping } = self {
            if !(damping > 0.0) || !damping.is_finite() {
                return Err(Error::Config(format!("ratio damping must be > 0, got {damping}")));
            }
        }
        Ok(())
    }

    pub fn combine(self, before: f64, after: f64) -> Result<f64> {
        self.validate()?;
        let v = match self {
            Combiner::Diff => after - before,
            Combiner::Ratio { damping } => (after + damping) / (before + damping),
        };
        if !v.is_finite() {
            return Err(Error::NonFinite {
                context: format!("{} of {after} and {before}", self.name()),
            });
        }
        Ok(v)
    }
}

/// A score function bound to whatever calibration data it needs.
#[derive(Clone, Copy, Debug)]
pub struct Scorer<'a> {
    pub kind: ScoreKind,
    pub shadows: Option<&'a ShadowSet>,
}

impl<'a> Scorer<'a> {
    pub fn new(kind: ScoreKind, shadows: Option<&'a ShadowSet>) -> Self {
        Scorer { kind, shadows }
    }

    pub fn loss() -> Self {
        Scorer::new(ScoreKind::Loss, None)
    }

    pub fn eval(&self, x: &[f64], y: usize, f: &Model, stage: Stage) -> Result<f64> {
        scores::score(self.kind, x, y, f, self.shadows, stage)
    }
}

/// The shadow stage a model at position `i` of an update trace is compared with.
pub fn stage_of(i: usize) -> Stage {
    if i == 0 {
        Stage::Before
    } else {
        Stage::After
    }
}

/// Combined score of `(x, y)` on models `f_i -> f_j` of a trace.
pub fn combined_score(
    x: &[f64],
    y: usize,
    (i, fi): (usize, &Model),
    (j, fj): (usize, &Model),
    combiner: Combiner,
    scorer: &Scorer<'_>,
) -> Result<f64> {
    let before = scorer.eval(x, y, fi, stage_of(i))?;
    let after = scorer.eval(x, y, fj, stage_of(j))?;
    combiner.combine(before, after)
}

/// `l(x, y; f1) - l(x, y; f0)`.
pub fn score_diff(x: &[f64], y: usize, f0: &Model, f1: &Model, scorer: &Scorer<'_>) -> Result<f64> {
    combined_score(x, y, (0, f0), (1, f1), Combiner::Diff, scorer)
}

/// `(l(x, y; f1) + c) / (l(x, y; f0) + c)`.
pub fn score_ratio(x: &[f64], y: usize, f0: &Model, f1: &Model, scorer: &Scorer<'_>, c: f64) -> Result<f64> {
    combined_score(x, y, (0, f0), (1, f1), Combiner::Ratio { damping: c }, scorer)
}
