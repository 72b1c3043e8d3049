use std::path::{Path, PathBuf};

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::attacks::{Combiner, ThresholdMode};
use crate::data::{load_csv, load_idx, ClassGaussians, EmpiricalPool, Population};
use crate::error::{Error, Result};
use crate::learners::{Arch, TrainConfig, UpdateStrategy};
use crate::scores::{LiraStatistic, ScoreKind};
use crate::seed;

pub const SCHEMA_VERSION: u32 = 1;

/// Where data points come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PopulationConfig {
    /// Spherical Gaussian classes whose means are drawn i.i.d.
    /// `N(0, mean_scale^2)` from `means_seed`.
    Gaussian {
        classes: usize,
        dim: usize,
        mean_scale: f64,
        #[serde(default = "one")]
        sigma: f64,
        #[serde(default)]
        means_seed: u64,
    },
    /// Spherical Gaussian classes with explicit means.
    GaussianMeans {
        means: Vec<Vec<f64>>,
        #[serde(default = "one")]
        sigma: f64,
    },
    /// A Gaussian population with every class mean moved by
    /// `scale * N(0, I)` drawn from `seed`.
    Perturbed {
        base: Box<PopulationConfig>,
        scale: f64,
        #[serde(default)]
        seed: u64,
    },
    /// An IDX image/label pair used as a finite pool.
    Idx {
        images: PathBuf,
        labels: PathBuf,
        #[serde(default)]
        normalize: bool,
    },
    /// A headed CSV used as a finite pool.
    Csv {
        path: PathBuf,
        label_column: String,
        #[serde(default)]
        normalize: bool,
    },
}

fn one() -> f64 {
    1.0
}

impl PopulationConfig {
    /// The Gaussian population, for the variants that describe one.
    pub fn gaussian(&self) -> Result<ClassGaussians> {
        match self {
            PopulationConfig::Gaussian {
                classes,
                dim,
                mean_scale,
                sigma,
                means_seed,
            } => ClassGaussians::random(*classes, *dim, *mean_scale, *sigma, *means_seed)
                .map_err(|e| Error::Config(e.to_string())),
            PopulationConfig::GaussianMeans { means, sigma } => {
                ClassGaussians::new(means.clone(), vec![*sigma; means.len()]).map_err(|e| Error::Config(e.to_string()))
            }
            PopulationConfig::Perturbed { base, scale, seed } => {
                let mut g = base.gaussian()?;
                let mut rng = seed::rng(*seed);
                for m in &mut g.means {
                    for v in m.iter_mut() {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        *v += scale * z;
                    }
                }
                Ok(g)
            }
            _ => Err(Error::Config("population is not Gaussian".into())),
        }
    }

    /// Build the population. Relative file paths resolve against `base_dir`.
    pub fn build(&self, base_dir: &Path) -> Result<Box<dyn Population>> {
        match self {
            PopulationConfig::Idx {
                images,
                labels,
                normalize,
            } => {
                let mut data = load_idx(base_dir.join(images), base_dir.join(labels))?;
                if *normalize {
                    data.standardize();
                }
                Ok(Box::new(EmpiricalPool { data }))
            }
            PopulationConfig::Csv {
                path,
                label_column,
                normalize,
            } => {
                let mut data = load_csv(base_dir.join(path), label_column)?;
                if *normalize {
                    data.standardize();
                }
                Ok(Box::new(EmpiricalPool { data }))
            }
            _ => Ok(Box::new(self.gaussian()?)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Instantiation {
    Single,
    Multi {
        k: usize,
    },
    /// Update sets and OUT points come from `(1 - alpha) * population + alpha * target`.
    Shift {
        target: PopulationConfig,
        alpha: f64,
    },
}

impl Instantiation {
    pub fn k(&self) -> usize {
        match self {
            Instantiation::Multi { k } => *k,
            _ => 1,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Instantiation::Single => "single",
            Instantiation::Multi { .. } => "multi",
            Instantiation::Shift { .. } => "shift",
        }
    }
}

/// Hidden layer sizes; input and output sizes come from the population.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default)]
    pub hidden: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case", deny_unknown_fields)]
pub enum ThresholdSpec {
    Batch {
        #[serde(default)]
        mode: ThresholdMode,
    },
    Transfer {
        #[serde(default)]
        mode: ThresholdMode,
    },
    Rank {
        q: f64,
    },
}

impl ThresholdSpec {
    fn label(&self) -> String {
        match self {
            ThresholdSpec::Batch { mode } => format!("batch-{}", mode_name(*mode)),
            ThresholdSpec::Transfer { mode } => format!("transfer-{}", mode_name(*mode)),
            ThresholdSpec::Rank { q } => format!("rank-{q}"),
        }
    }
}

fn mode_name(m: ThresholdMode) -> &'static str {
    match m {
        ThresholdMode::Accuracy => "accuracy",
        ThresholdMode::Precision => "precision",
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    /// IN iff `f_k` classifies the point correctly.
    Gap,
    /// IN iff the loss on `f_k` is below `f_k`'s average training loss.
    Loss,
    /// IN iff the LiRA score on `f_k` is below the calibration-batch median.
    Lira,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum AttackSpec {
    /// Single-update attack on `(f0, f1)`, Back-Front on `(f0, fk)` when k > 1.
    Update {
        combiner: Combiner,
        score: ScoreKind,
        threshold: ThresholdSpec,
    },
    /// Consecutive-pair scan with per-epoch batch-calibrated thresholds.
    Delta { combiner: Combiner, score: ScoreKind },
    /// Uses only the final model.
    Baseline { kind: BaselineKind },
    /// Answers IN every time (harness check).
    AlwaysIn,
    /// Fair coin (harness check).
    CoinFlip,
}

impl AttackSpec {
    pub fn name(&self) -> String {
        match self {
            AttackSpec::Update {
                combiner,
                score,
                threshold,
            } => format!("update/{}/{}/{}", combiner.name(), score.name(), threshold.label()),
            AttackSpec::Delta { combiner, score } => format!("delta/{}/{}", combiner.name(), score.name()),
            AttackSpec::Baseline { kind } => format!(
                "baseline/{}",
                match kind {
                    BaselineKind::Gap => "gap",
                    BaselineKind::Loss => "loss",
                    BaselineKind::Lira => "lira",
                }
            ),
            AttackSpec::AlwaysIn => "control/always_in".into(),
            AttackSpec::CoinFlip => "control/coin_flip".into(),
        }
    }

    pub fn needs_shadows(&self) -> bool {
        match self {
            AttackSpec::Update { score, threshold, .. } => {
                *score == ScoreKind::Lira || matches!(threshold, ThresholdSpec::Transfer { .. })
            }
            AttackSpec::Delta { score, .. } => *score == ScoreKind::Lira,
            AttackSpec::Baseline { kind } => *kind == BaselineKind::Lira,
            AttackSpec::AlwaysIn | AttackSpec::CoinFlip => false,
        }
    }

    /// True for attacks that compare models across an update.
    pub fn uses_updates(&self) -> bool {
        matches!(self, AttackSpec::Update { .. } | AttackSpec::Delta { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShadowConfig {
    #[serde(default = "default_shadow_count")]
    pub count: usize,
    /// Defaults to `2 * n0`.
    #[serde(default)]
    pub pool_size: Option<usize>,
    #[serde(default)]
    pub statistic: LiraStatistic,
}

fn default_shadow_count() -> usize {
    8
}

impl Default for ShadowConfig {
    fn default() -> Self {
        ShadowConfig {
            count: default_shadow_count(),
            pool_size: None,
            statistic: LiraStatistic::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    NUp,
    K,
    Alpha,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    pub instantiation: Instantiation,
    pub population: PopulationConfig,
    #[serde(default)]
    pub model: ModelConfig,
    pub n0: usize,
    pub n_up: usize,
    #[serde(default = "default_initial")]
    pub initial: TrainConfig,
    #[serde(default = "default_update")]
    pub update: UpdateStrategy,
    pub attacks: Vec<AttackSpec>,
    #[serde(default)]
    pub shadows: ShadowConfig,
    pub worlds: usize,
    pub points_per_world: usize,
    /// Fix the hidden membership bit of every challenge (harness testing).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub force_membership: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

fn default_initial() -> TrainConfig {
    TrainConfig::initial(0)
}

fn default_update() -> UpdateStrategy {
    UpdateStrategy::sgd_new(0)
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        Self::from_json(&text)
    }

    pub fn k(&self) -> usize {
        self.instantiation.k()
    }

    pub fn needs_shadows(&self) -> bool {
        self.attacks.iter().any(AttackSpec::needs_shadows)
    }

    pub fn arch(&self, dim: usize, classes: usize) -> Arch {
        Arch {
            input: dim,
            hidden: self.model.hidden.clone(),
            classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "unsupported schema_version {}, expected {SCHEMA_VERSION}",
                self.schema_version
            ));
        }
        if self.n0 == 0 || self.n_up == 0 {
            return bad("n0 and n_up must be positive".into());
        }
        if self.worlds == 0 || self.points_per_world == 0 {
            return bad("worlds and points_per_world must be positive".into());
        }
        if self.attacks.is_empty() {
            return bad("at least one attack is required".into());
        }
        match &self.instantiation {
            Instantiation::Multi { k } if *k < 2 => {
                return bad(format!("the multi-update instantiation needs k >= 2, got {k}"));
            }
            Instantiation::Shift { alpha, .. } if !(0.0..=1.0).contains(alpha) => {
                return bad(format!("shift alpha must be in [0, 1], got {alpha}"));
            }
            _ => {}
        }
        self.initial.validate()?;
        self.update.validate()?;
        for a in &self.attacks {
            match a {
                AttackSpec::Update {
                    combiner, threshold, ..
                } => {
                    combiner.validate()?;
                    match threshold {
                        ThresholdSpec::Rank { q } if !(*q > 0.0 && *q < 1.0) => {
                            return bad(format!("rank threshold q must be in (0, 1), got {q}"));
                        }
                        ThresholdSpec::Transfer { .. } if self.k() > 1 => {
                            return bad("transfer thresholds are only defined for a single update".into());
                        }
                        _ => {}
                    }
                }
                AttackSpec::Delta { combiner, .. } => combiner.validate()?,
                _ => {}
            }
        }
        if self.needs_shadows() {
            if self.shadows.count < 2 {
                return bad("LiRA and transfer attacks need at least 2 shadow models".into());
            }
            let pool = self.shadow_pool_size();
            if pool / 2 == 0 || pool - pool / 2 < 2 * self.n_up {
                return bad(format!("shadow pool of {pool} points is too small for n_up = {}", self.n_up));
            }
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                return bad("sweep needs at least one value".into());
            }
            for &v in &s.values {
                let ok = match s.parameter {
                    SweepParameter::NUp | SweepParameter::K => v >= 1.0 && v.fract() == 0.0,
                    SweepParameter::Alpha => (0.0..=1.0).contains(&v),
                };
                if !ok {
                    return bad(format!("invalid sweep value {v} for {:?}", s.parameter));
                }
            }
            if s.parameter == SweepParameter::Alpha && !matches!(self.instantiation, Instantiation::Shift { .. }) {
                return bad("an alpha sweep needs the shift instantiation".into());
            }
            if s.parameter == SweepParameter::K && !matches!(self.instantiation, Instantiation::Multi { .. }) {
                return bad("a k sweep needs the multi instantiation".into());
            }
        }
        Ok(())
    }

    pub fn shadow_pool_size(&self) -> usize {
        self.shadows.pool_size.unwrap_or(2 * self.n0.max(self.n_up))
    }
}
