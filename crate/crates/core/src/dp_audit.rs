//! Privacy accounting for DP-SGD updates and empirical ε lower bounds from
//! attack precision.

use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::attacks::{Combiner, ThresholdMode};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::experiment::{run_experiment_with, AttackSpec, ExperimentConfig, Instantiation, ThresholdSpec};
use crate::learners::DPConfig;
use crate::scores::ScoreKind;

/// Rényi orders `1.25, 1.5, ..., 64`.
pub fn rdp_orders() -> Vec<f64> {
    (5..=256).map(|i| i as f64 * 0.25).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccountantInput {
    pub noise_multiplier: f64,
    pub steps: usize,
    pub sampling_rate: f64,
    pub delta: f64,
}

impl AccountantInput {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_multiplier >= 0.0) || self.noise_multiplier.is_nan() {
            return Err(Error::InvalidInput(format!(
                "noise multiplier must be >= 0, got {}",
                self.noise_multiplier
            )));
        }
        if self.steps == 0 {
            return Err(Error::InvalidInput("steps must be >= 1".into()));
        }
        if !(self.sampling_rate > 0.0 && self.sampling_rate <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "sampling rate must be in (0, 1], got {}",
                self.sampling_rate
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidInput(format!("delta must be in (0, 1), got {}", self.delta)));
        }
        Ok(())
    }
}

fn ln_binomial(n: u64, k: u64) -> f64 {
    statrs::function::factorial::ln_binomial(n, k)
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

/// RDP of one step of the Poisson-subsampled Gaussian mechanism at order
/// `alpha`.
///
/// `q = 1` is the plain Gaussian mechanism, `alpha / (2 sigma^2)`. For
/// `q < 1` the binomial expansion
/// `A = Σ_k C(a,k) (1-q)^(a-k) q^k exp((k^2-k)/(2 sigma^2))`, `RDP = ln A / (a-1)`
/// is exact at integer orders; fractional orders use the next integer, which
/// upper-bounds them because RDP is non-decreasing in the order.
pub fn rdp_step(q: f64, sigma: f64, alpha: f64) -> f64 {
    if sigma == 0.0 {
        return f64::INFINITY;
    }
    if q >= 1.0 {
        return alpha / (2.0 * sigma * sigma);
    }
    let a = alpha.ceil() as u64;
    let (lq, l1q) = (q.ln(), (1.0 - q).ln());
    let terms: Vec<f64> = (0..=a)
        .map(|k| {
            let kf = k as f64;
            ln_binomial(a, k) + (a - k) as f64 * l1q + kf * lq + (kf * kf - kf) / (2.0 * sigma * sigma)
        })
        .collect();
    (log_sum_exp(&terms) / (a as f64 - 1.0)).max(0.0)
}

/// Upper bound on ε after `steps` compositions, minimised over
/// [`rdp_orders`]. `sigma = 0` gives infinity.
pub fn rdp_epsilon(input: &AccountantInput) -> Result<f64> {
    input.validate()?;
    if input.noise_multiplier == 0.0 {
        return Ok(f64::INFINITY);
    }
    let log_inv_delta = (1.0 / input.delta).ln();
    Ok(rdp_orders()
        .into_iter()
        .map(|a| {
            input.steps as f64 * rdp_step(input.sampling_rate, input.noise_multiplier, a) + log_inv_delta / (a - 1.0)
        })
        .fold(f64::INFINITY, f64::min))
}

/// Two-sided Clopper-Pearson interval at `confidence`.
///
/// The lower end solves `P[Bin(n, p) >= s] = (1 - confidence) / 2`, the upper
/// end `P[Bin(n, p) <= s] = (1 - confidence) / 2`.
pub fn clopper_pearson(successes: usize, trials: usize, confidence: f64) -> Result<(f64, f64)> {
    if successes > trials {
        return Err(Error::InvalidInput(format!(
            "successes {successes} exceed trials {trials}"
        )));
    }
    if trials == 0 {
        return Err(Error::InvalidInput("trials must be >= 1".into()));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::InvalidInput(format!("confidence must be in (0, 1), got {confidence}")));
    }
    let tail = (1.0 - confidence) / 2.0;
    let (s, n) = (successes as f64, trials as f64);
    // P[X >= s] = I_p(s, n - s + 1), increasing in p.
    let lower = if successes == 0 {
        0.0
    } else {
        bisect(|p| beta_reg(s, n - s + 1.0, p) - tail)
    };
    // P[X <= s] = 1 - I_p(s + 1, n - s), decreasing in p.
    let upper = if successes == trials {
        1.0
    } else {
        bisect(|p| tail - (1.0 - beta_reg(s + 1.0, n - s, p)))
    };
    Ok((lower, upper))
}

/// Root of an increasing function on `[0, 1]`.
fn bisect(f: impl Fn(f64) -> f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Invert `precision <= e^ε / (1 + e^ε)`: `ε_lb = max(0, ln(p / (1 - p)))`,
/// infinite at `p = 1`.
pub fn epsilon_lower_bound(precision_lower: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&precision_lower) {
        return Err(Error::InvalidInput(format!(
            "precision must be in [0, 1], got {precision_lower}"
        )));
    }
    if precision_lower == 1.0 {
        return Ok(f64::INFINITY);
    }
    Ok((precision_lower / (1.0 - precision_lower)).ln().max(0.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditResult {
    pub noise_multiplier: f64,
    pub steps: usize,
    pub sampling_rate: f64,
    pub delta: f64,
    /// Accountant upper bound; `null` in JSON when infinite.
    pub epsilon: Option<f64>,
    /// Correct IN guesses.
    pub successes: usize,
    /// All IN guesses.
    pub trials: usize,
    pub confidence: f64,
    pub precision: Option<f64>,
    pub precision_lower: f64,
    /// `null` in JSON when infinite.
    pub epsilon_lower: Option<f64>,
    /// Accuracy of the attack over all challenges.
    pub accuracy: f64,
}

impl AuditResult {
    pub fn epsilon_value(&self) -> f64 {
        self.epsilon.unwrap_or(f64::INFINITY)
    }

    pub fn epsilon_lower_value(&self) -> f64 {
        self.epsilon_lower.unwrap_or(f64::INFINITY)
    }

    /// The empirical lower bound does not exceed the accountant's bound.
    pub fn is_sound(&self) -> bool {
        self.epsilon_lower_value() <= self.epsilon_value()
    }
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// Build an [`AuditResult`] from precision counts.
pub fn audit_counts(
    input: &AccountantInput,
    successes: usize,
    trials: usize,
    confidence: f64,
    accuracy: f64,
) -> Result<AuditResult> {
    let eps = rdp_epsilon(input)?;
    let (precision_lower, precision) = if trials == 0 {
        (0.0, None)
    } else {
        (clopper_pearson(successes, trials, confidence)?.0, Some(successes as f64 / trials as f64))
    };
    Ok(AuditResult {
        noise_multiplier: input.noise_multiplier,
        steps: input.steps,
        sampling_rate: input.sampling_rate,
        delta: input.delta,
        epsilon: finite(eps),
        successes,
        trials,
        confidence,
        precision,
        precision_lower,
        epsilon_lower: finite(epsilon_lower_bound(precision_lower)?),
        accuracy,
    })
}

/// A grid of noise multipliers applied to the update of a single-update
/// experiment. The update is full-batch DP-SGD (sampling rate 1, one step per
/// epoch); the initial model is trained without privacy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DpAuditConfig {
    pub experiment: ExperimentConfig,
    pub noise_multipliers: Vec<f64>,
    #[serde(default = "default_clip")]
    pub clip_norm: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
    #[serde(default = "default_attack")]
    pub attack: AttackSpec,
}

fn default_clip() -> f64 {
    0.5
}

fn default_delta() -> f64 {
    1e-4
}

fn default_confidence() -> f64 {
    0.98
}

/// ScoreDiff on the loss with a batch median threshold.
pub fn default_attack() -> AttackSpec {
    AttackSpec::Update {
        combiner: Combiner::Diff,
        score: ScoreKind::Loss,
        threshold: ThresholdSpec::Batch {
            mode: ThresholdMode::Accuracy,
        },
    }
}

impl DpAuditConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !matches!(self.experiment.instantiation, Instantiation::Single) {
            return Err(Error::Config("dp audit requires a single-update experiment".into()));
        }
        if self.noise_multipliers.is_empty() {
            return Err(Error::Config("noise_multipliers must not be empty".into()));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::Config(format!("confidence must be in (0, 1), got {}", self.confidence)));
        }
        if matches!(self.attack, AttackSpec::Delta { .. }) {
            return Err(Error::Config("the delta attack needs more than one update".into()));
        }
        for &sigma in &self.noise_multipliers {
            self.dp(sigma).validate()?;
        }
        self.experiment_for(self.noise_multipliers[0]).validate()
    }

    fn dp(&self, sigma: f64) -> DPConfig {
        DPConfig {
            clip_norm: self.clip_norm,
            noise_multiplier: sigma,
            delta: self.delta,
        }
    }

    /// The experiment run at noise multiplier `sigma`.
    pub fn experiment_for(&self, sigma: f64) -> ExperimentConfig {
        let mut c = self.experiment.clone();
        c.update.dp = Some(self.dp(sigma));
        c.update.config.batch_size = c.n_up;
        c.attacks = vec![self.attack];
        c.sweep = None;
        c
    }

    pub fn accountant_input(&self, sigma: f64) -> AccountantInput {
        AccountantInput {
            noise_multiplier: sigma,
            steps: self.experiment.update.config.epochs,
            sampling_rate: 1.0,
            delta: self.delta,
        }
    }
}

/// Audit every noise multiplier of the grid, in grid order.
pub fn run_audit(config: &DpAuditConfig, exec: Execution, base_dir: &Path) -> Result<Vec<AuditResult>> {
    config.validate()?;
    config
        .noise_multipliers
        .iter()
        .map(|&sigma| {
            let out = run_experiment_with(&config.experiment_for(sigma), exec, base_dir)?;
            let m = out
                .report
                .attacks
                .first()
                .ok_or_else(|| Error::InvalidInput("audit produced no attack report".into()))?;
            let c = m.counts;
            audit_counts(&config.accountant_input(sigma), c.tp, c.tp + c.fp, config.confidence, m.accuracy)
        })
        .collect()
}

/// One row per grid point: `noise_multiplier, epsilon, precision,
/// precision_lower, epsilon_lower, trials`.
pub fn write_audit_csv(results: &[AuditResult], path: &Path) -> Result<()> {
    #[derive(Serialize)]
    struct Row {
        noise_multiplier: f64,
        epsilon: Option<f64>,
        precision: Option<f64>,
        precision_lower: f64,
        epsilon_lower: Option<f64>,
        trials: usize,
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::InvalidInput(format!("{other:?}")),
    })?;
    for r in results {
        w.serialize(Row {
            noise_multiplier: r.noise_multiplier,
            epsilon: r.epsilon,
            precision: r.precision,
            precision_lower: r.precision_lower,
            epsilon_lower: r.epsilon_lower,
            trials: r.trials,
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
