//! Gaussian mean estimation as an exactly analysable model of updates.
//!
//! The "model" here is the sample mean of its training set. Membership
//! distinguishers compare log-densities of the released estimate under the
//! IN and OUT hypotheses; everything runs in log space because the linear
//! densities underflow for a few hundred dimensions.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::attacks::Verdict;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::seed::{child, rng, Rng};
use crate::stats;

/// Spherical Gaussian population `N(mu, sigma^2 I)` with an initial set of
/// `n0` points and an update of `n1` points.
#[derive(Clone, Debug, PartialEq)]
pub struct MeanWorld {
    pub mu: Vec<f64>,
    pub sigma: f64,
    pub n0: usize,
    pub n1: usize,
    pub seed: u64,
}

/// One draw of a [`MeanWorld`].
#[derive(Clone, Debug)]
pub struct MeanSample {
    pub d0: Vec<Vec<f64>>,
    pub d1: Vec<Vec<f64>>,
    pub estimates: MeanEstimates,
}

impl MeanWorld {
    pub fn new(mu: Vec<f64>, sigma: f64, n0: usize, n1: usize, seed: u64) -> Result<Self> {
        let w = MeanWorld {
            mu,
            sigma,
            n0,
            n1,
            seed,
        };
        w.validate()?;
        Ok(w)
    }

    /// Zero-mean world of dimension `d`.
    pub fn centered(d: usize, sigma: f64, n0: usize, n1: usize, seed: u64) -> Result<Self> {
        Self::new(vec![0.0; d], sigma, n0, n1, seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mu.is_empty() {
            return Err(Error::InvalidInput("d must be >= 1".into()));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidInput(format!("sigma must be positive, got {}", self.sigma)));
        }
        if self.n1 < 1 {
            return Err(Error::InvalidInput("n1 must be >= 1".into()));
        }
        Ok(())
    }

    pub fn d(&self) -> usize {
        self.mu.len()
    }

    pub fn n(&self) -> usize {
        self.n0 + self.n1
    }

    pub fn draw_point(&self, rng: &mut Rng) -> Vec<f64> {
        self.mu
            .iter()
            .map(|m| m + self.sigma * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    pub fn draw_points(&self, count: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
        (0..count).map(|_| self.draw_point(rng)).collect()
    }

    /// Draw `D0`, `D1` and the released estimates for trial `trial`.
    pub fn sample(&self, trial: u64) -> Result<MeanSample> {
        let mut r = rng(child(self.seed, trial));
        let d0 = self.draw_points(self.n0, &mut r);
        let d1 = self.draw_points(self.n1, &mut r);
        let estimates = MeanEstimates::from_sets(&d0, &d1)?;
        Ok(MeanSample { d0, d1, estimates })
    }
}

/// What an adversary observing the mean before and after the update knows.
#[derive(Clone, Debug, PartialEq)]
pub struct MeanEstimates {
    /// Mean of `D0` (zeros when `D0` is empty).
    pub mu0: Vec<f64>,
    /// Mean of `D0 ∪ D1`.
    pub mu1: Vec<f64>,
    /// Mean of `D1` recovered from the two releases.
    pub mu_delta: Vec<f64>,
    pub n0: usize,
    pub n1: usize,
}

impl MeanEstimates {
    /// Build from the two released means, recovering `mu_delta`.
    pub fn new(mu0: Vec<f64>, mu1: Vec<f64>, n0: usize, n1: usize) -> Result<Self> {
        let mu_delta = recover_update_mean(&mu0, &mu1, n0, n1)?;
        Ok(MeanEstimates {
            mu0,
            mu1,
            mu_delta,
            n0,
            n1,
        })
    }

    pub fn from_sets(d0: &[Vec<f64>], d1: &[Vec<f64>]) -> Result<Self> {
        let d = d1.first().ok_or(Error::Empty("update set"))?.len();
        let mu0 = if d0.is_empty() { vec![0.0; d] } else { sample_mean(d0)? };
        let all: Vec<Vec<f64>> = d0.iter().chain(d1).cloned().collect();
        let mu1 = sample_mean(&all)?;
        Self::new(mu0, mu1, d0.len(), d1.len())
    }
}

/// `mu_delta = (n / n1) mu1 - (n0 / n1) mu0`.
pub fn recover_update_mean(mu0: &[f64], mu1: &[f64], n0: usize, n1: usize) -> Result<Vec<f64>> {
    if n1 < 1 {
        return Err(Error::InvalidInput("n1 must be >= 1".into()));
    }
    check_dim(mu0.len(), mu1.len(), "recover_update_mean")?;
    let n = (n0 + n1) as f64;
    let a = n / n1 as f64;
    let b = n0 as f64 / n1 as f64;
    Ok(mu0.iter().zip(mu1).map(|(m0, m1)| a * m1 - b * m0).collect())
}

pub fn sample_mean(points: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = points.first().ok_or(Error::Empty("point set"))?;
    let d = first.len();
    let mut acc = vec![0.0; d];
    for p in points {
        check_dim(d, p.len(), "sample_mean")?;
        for (a, v) in acc.iter_mut().zip(p) {
            *a += v;
        }
    }
    let n = points.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(acc)
}

fn check_dim(expected: usize, found: usize, context: &'static str) -> Result<()> {
    if expected != found {
        return Err(Error::Dimension {
            expected,
            found,
            context,
        });
    }
    Ok(())
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidInput(format!("sigma must be positive, got {sigma}")));
    }
    Ok(())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Log-densities `(log p_IN, log p_OUT)` of the estimate `mu_hat` of `n`
/// points, with `v` one of them (IN) or not (OUT):
///
/// ```text
/// p_IN  = ((n-1)/(2πσ²))^{d/2} exp(-(n-1)/(2σ²) ‖mu_hat - (n-1)mu/n - v/n‖²)
/// p_OUT = (n/(2πσ²))^{d/2}     exp(-n/(2σ²)     ‖mu_hat - mu‖²)
/// ```
pub fn log_densities(v: &[f64], mu_hat: &[f64], mu: &[f64], sigma: f64, n: usize) -> Result<(f64, f64)> {
    check_sigma(sigma)?;
    if n < 2 {
        return Err(Error::InvalidInput(format!("n must be >= 2, got {n}")));
    }
    let d = mu.len();
    check_dim(d, v.len(), "np distinguisher point")?;
    check_dim(d, mu_hat.len(), "np distinguisher estimate")?;
    let nf = n as f64;
    let s2 = sigma * sigma;
    let half_d = d as f64 / 2.0;
    let in_center: f64 = mu_hat
        .iter()
        .zip(mu)
        .zip(v)
        .map(|((m, u), x)| {
            let r = m - (nf - 1.0) * u / nf - x / nf;
            r * r
        })
        .sum();
    let log_in = half_d * ((nf - 1.0) / (2.0 * PI * s2)).ln() - (nf - 1.0) / (2.0 * s2) * in_center;
    let log_out = half_d * (nf / (2.0 * PI * s2)).ln() - nf / (2.0 * s2) * sq_dist(mu_hat, mu);
    Ok((log_in, log_out))
}

/// Neyman-Pearson style distinguisher against a single released mean of `n`
/// points. IN iff `p_IN > p_OUT`.
pub fn np_no_update(v: &[f64], mu_hat: &[f64], mu: &[f64], sigma: f64, n: usize) -> Result<Verdict> {
    let (log_in, log_out) = log_densities(v, mu_hat, mu, sigma, n)?;
    Ok(if log_in > log_out { Verdict::In } else { Verdict::Out })
}

/// The same distinguisher run on the recovered update mean with `n = n1`.
///
/// With `n1 = 1` the IN hypothesis is a point mass at `v`, so the decision is
/// IN iff the recovered mean equals `v` up to rounding.
pub fn np_with_update(v: &[f64], estimates: &MeanEstimates, mu: &[f64], sigma: f64) -> Result<Verdict> {
    check_sigma(sigma)?;
    let mu_delta = recover_update_mean(&estimates.mu0, &estimates.mu1, estimates.n0, estimates.n1)?;
    if estimates.n1 == 1 {
        check_dim(mu.len(), v.len(), "np distinguisher point")?;
        let scale = 1.0 + dot(v, v) + dot(&estimates.mu0, &estimates.mu0) * (estimates.n0 as f64).powi(2);
        let hit = sq_dist(&mu_delta, v) <= 1e-18 * scale;
        return Ok(if hit { Verdict::In } else { Verdict::Out });
    }
    np_no_update(v, &mu_delta, mu, sigma, estimates.n1)
}

/// Dot-product attack on the recovered update mean: IN iff
/// `(mu_delta - mu)·(v - mu) >= ‖v - mu‖² / (2 n1)`.
pub fn dot_attack(v: &[f64], mu_delta: &[f64], mu: &[f64], n1: usize) -> Result<Verdict> {
    if n1 < 1 {
        return Err(Error::InvalidInput("n1 must be >= 1".into()));
    }
    check_dim(mu.len(), v.len(), "dot_attack point")?;
    check_dim(mu.len(), mu_delta.len(), "dot_attack estimate")?;
    let s: f64 = mu_delta.iter().zip(v).zip(mu).map(|((m, x), u)| (m - u) * (x - u)).sum();
    let t = sq_dist(v, mu) / (2.0 * n1 as f64);
    Ok(if s >= t { Verdict::In } else { Verdict::Out })
}

/// Upper bound on any attack against a single mean of `n` points:
/// `min(1, 1/2 + 1/2 (sqrt(5d/(n-1)) + sqrt(d)/(n-1)))`.
pub fn bound_no_update(d: usize, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidInput(format!("n must be >= 2, got {n}")));
    }
    let (d, m) = (d as f64, (n - 1) as f64);
    Ok((0.5 + 0.5 * ((5.0 * d / m).sqrt() + d.sqrt() / m)).min(1.0))
}

/// Success rate guaranteed to the dot-product attack: `Φ(sqrt(d/(80(n1-1))))`.
pub fn bound_update(d: usize, n1: usize) -> Result<f64> {
    if n1 < 2 {
        return Err(Error::InvalidInput(format!("n1 must be >= 2, got {n1}")));
    }
    Ok(stats::normal_cdf((d as f64 / (80.0 * (n1 - 1) as f64)).sqrt()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanLoss {
    /// `‖f - x‖²`
    L2Squared,
    /// `‖f - x‖`
    L2,
}

impl MeanLoss {
    pub fn eval(self, f: &[f64], x: &[f64]) -> f64 {
        let sq = sq_dist(f, x);
        match self {
            MeanLoss::L2Squared => sq,
            MeanLoss::L2 => sq.sqrt(),
        }
    }

    fn add_grad(self, f: &[f64], x: &[f64], grad: &mut [f64]) {
        let scale = match self {
            MeanLoss::L2Squared => 2.0,
            MeanLoss::L2 => {
                let norm = sq_dist(f, x).sqrt();
                if norm == 0.0 {
                    return;
                }
                1.0 / norm
            }
        };
        for ((g, a), b) in grad.iter_mut().zip(f).zip(x) {
            *g += scale * (a - b);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanStep {
    /// Gradient over `D1` only.
    New,
    /// Gradient over `D0 ∪ D1`.
    Full,
}

/// One full-batch gradient step from `f0`, averaging the gradient of `loss`
/// over `D1` (`MeanStep::New`) or `D0 ∪ D1` (`MeanStep::Full`).
pub fn grad_step_mean(
    f0: &[f64],
    d1: &[Vec<f64>],
    d0: &[Vec<f64>],
    eta: f64,
    step: MeanStep,
    loss: MeanLoss,
) -> Result<Vec<f64>> {
    if d1.is_empty() {
        return Err(Error::Empty("update set"));
    }
    if !eta.is_finite() || eta < 0.0 {
        return Err(Error::InvalidInput(format!("learning rate must be >= 0, got {eta}")));
    }
    let batch: Vec<&Vec<f64>> = match step {
        MeanStep::New => d1.iter().collect(),
        MeanStep::Full => d0.iter().chain(d1).collect(),
    };
    let mut grad = vec![0.0; f0.len()];
    for x in &batch {
        check_dim(f0.len(), x.len(), "grad_step_mean")?;
        loss.add_grad(f0, x, &mut grad);
    }
    let scale = eta / batch.len() as f64;
    Ok(f0.iter().zip(&grad).map(|(f, g)| f - scale * g).collect())
}

/// Monte-Carlo accuracy with the standard error of the per-trial accuracies.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarlo {
    pub accuracy: f64,
    pub stderr: f64,
    pub trials: usize,
}

impl MonteCarlo {
    fn from_trials(acc: &[f64]) -> Result<Self> {
        if acc.is_empty() {
            return Err(Error::Empty("trials"));
        }
        let stderr = if acc.len() > 1 { stats::std_err(acc) } else { 0.0 };
        Ok(MonteCarlo {
            accuracy: stats::mean(acc),
            stderr,
            trials: acc.len(),
        })
    }
}

/// Challenge points for one trial: `points / 2` IN points drawn uniformly
/// (with replacement) from `members`, the rest fresh. Returns `(point, is_in)`.
fn challenges(world: &MeanWorld, members: &[Vec<f64>], points: usize, r: &mut Rng) -> Vec<(Vec<f64>, bool)> {
    let n_in = points / 2;
    let mut out = Vec::with_capacity(points);
    for _ in 0..n_in {
        out.push((members[r.random_range(0..members.len())].clone(), true));
    }
    for _ in n_in..points {
        out.push((world.draw_point(r), false));
    }
    out
}

fn check_trials(trials: usize, points: usize) -> Result<()> {
    if trials == 0 {
        return Err(Error::InvalidInput("trials must be >= 1".into()));
    }
    if points < 2 {
        return Err(Error::InvalidInput("points per trial must be >= 2".into()));
    }
    Ok(())
}

fn accuracy_of(verdicts: impl Iterator<Item = (Verdict, bool)>) -> f64 {
    let (mut hit, mut n) = (0usize, 0usize);
    for (v, is_in) in verdicts {
        hit += usize::from(v.is_in() == is_in);
        n += 1;
    }
    hit as f64 / n as f64
}

/// Grid for the with/without-update comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeanLabConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    pub n0: usize,
    pub d: usize,
    /// Every coordinate of the true mean.
    #[serde(default)]
    pub mu: f64,
    pub sigma: f64,
    pub n1_values: Vec<usize>,
    pub trials: usize,
    #[serde(default = "default_points")]
    pub points_per_trial: usize,
}

fn default_schema() -> u32 {
    crate::experiment::SCHEMA_VERSION
}

fn default_points() -> usize {
    100
}

impl MeanLabConfig {
    /// `n0 = 200`, `d = 250`, `mu = 0`, `sigma = 0.1`, 60 trials.
    pub fn reference_grid(seed: u64) -> Self {
        MeanLabConfig {
            schema_version: crate::experiment::SCHEMA_VERSION,
            seed,
            n0: 200,
            d: 250,
            mu: 0.0,
            sigma: 0.1,
            n1_values: vec![10, 25, 50, 100, 200, 400],
            trials: 60,
            points_per_trial: default_points(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.schema_version != crate::experiment::SCHEMA_VERSION {
            return bad(format!("unsupported schema_version {}", self.schema_version));
        }
        if self.d == 0 {
            return bad("d must be >= 1".into());
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() || !self.mu.is_finite() {
            return bad("sigma must be positive and mu finite".into());
        }
        if self.n1_values.is_empty() || self.n1_values.iter().any(|&n| n < 2) {
            return bad("n1_values must be nonempty with every n1 >= 2".into());
        }
        if self.trials == 0 {
            return bad("trials must be >= 1".into());
        }
        if self.points_per_trial < 2 {
            return bad("points_per_trial must be >= 2".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanRow {
    pub n1: usize,
    pub attack: String,
    pub trials: usize,
    pub accuracy: f64,
    pub stderr: f64,
}

pub const ATTACK_NO_UPDATE: &str = "no_update";
pub const ATTACK_UPDATE: &str = "update";

/// For each `n1`, run both distinguishers on the same challenge points and
/// report accuracy over trials. Rows come in grid order, `no_update` first.
pub fn run_mean_experiment(config: &MeanLabConfig, exec: Execution) -> Result<Vec<MeanRow>> {
    config.validate()?;
    let mut rows = Vec::with_capacity(2 * config.n1_values.len());
    for (gi, &n1) in config.n1_values.iter().enumerate() {
        let world = MeanWorld::new(vec![config.mu; config.d], config.sigma, config.n0, n1, child(config.seed, gi as u64))?;
        let per_trial = exec.try_map(config.trials, |t| -> Result<(f64, f64)> {
            let sample = world.sample(t as u64).map_err(|e| e.in_trial(t))?;
            let mut r = rng(child(child(world.seed, t as u64), 1));
            let points = challenges(&world, &sample.d1, config.points_per_trial, &mut r);
            let n = world.n();
            let mut plain = Vec::with_capacity(points.len());
            let mut upd = Vec::with_capacity(points.len());
            for (v, is_in) in &points {
                plain.push((np_no_update(v, &sample.estimates.mu1, &world.mu, world.sigma, n)?, *is_in));
                upd.push((np_with_update(v, &sample.estimates, &world.mu, world.sigma)?, *is_in));
            }
            Ok((accuracy_of(plain.into_iter()), accuracy_of(upd.into_iter())))
        })?;
        let (plain, upd): (Vec<f64>, Vec<f64>) = per_trial.into_iter().unzip();
        for (name, acc) in [(ATTACK_NO_UPDATE, plain), (ATTACK_UPDATE, upd)] {
            let mc = MonteCarlo::from_trials(&acc)?;
            rows.push(MeanRow {
                n1,
                attack: name.into(),
                trials: mc.trials,
                accuracy: mc.accuracy,
                stderr: mc.stderr,
            });
        }
    }
    Ok(rows)
}

pub fn write_mean_csv(rows: &[MeanRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::InvalidInput(format!("{other:?}")),
    })?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Write the CSV to any writer.
pub fn write_mean_csv_to<W: Write>(rows: &[MeanRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<writer>", e))?;
    Ok(())
}

/// Accuracy of [`np_no_update`] against the mean of `n` points in dimension
/// `d` (zero mean).
pub fn no_update_accuracy(
    d: usize,
    n: usize,
    sigma: f64,
    trials: usize,
    points_per_trial: usize,
    seed: u64,
    exec: Execution,
) -> Result<MonteCarlo> {
    check_trials(trials, points_per_trial)?;
    let world = MeanWorld::centered(d, sigma, 0, n, seed)?;
    let acc = exec.try_map(trials, |t| -> Result<f64> {
        let sample = world.sample(t as u64)?;
        let mut r = rng(child(child(seed, t as u64), 1));
        let points = challenges(&world, &sample.d1, points_per_trial, &mut r);
        let mut out = Vec::with_capacity(points.len());
        for (v, is_in) in &points {
            out.push((np_no_update(v, &sample.estimates.mu1, &world.mu, sigma, n)?, *is_in));
        }
        Ok(accuracy_of(out.into_iter()))
    })?;
    MonteCarlo::from_trials(&acc)
}

/// Accuracy of [`dot_attack`] on the recovered update mean (zero mean).
#[allow(clippy::too_many_arguments)]
pub fn dot_attack_accuracy(
    d: usize,
    n0: usize,
    n1: usize,
    sigma: f64,
    trials: usize,
    points_per_trial: usize,
    seed: u64,
    exec: Execution,
) -> Result<MonteCarlo> {
    check_trials(trials, points_per_trial)?;
    let world = MeanWorld::centered(d, sigma, n0, n1, seed)?;
    let acc = exec.try_map(trials, |t| -> Result<f64> {
        let sample = world.sample(t as u64)?;
        let mut r = rng(child(child(seed, t as u64), 1));
        let points = challenges(&world, &sample.d1, points_per_trial, &mut r);
        let mut out = Vec::with_capacity(points.len());
        for (v, is_in) in &points {
            out.push((dot_attack(v, &sample.estimates.mu_delta, &world.mu, n1)?, *is_in));
        }
        Ok(accuracy_of(out.into_iter()))
    })?;
    MonteCarlo::from_trials(&acc)
}

/// ScoreDiff with the squared-distance loss against a mean updated by one
/// gradient step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreDiffCheck {
    pub d: usize,
    pub n0: usize,
    pub n1: usize,
    pub eta: f64,
    pub sigma: f64,
    pub step: MeanStep,
    pub trials: usize,
    /// Worlds used only to place the threshold.
    pub calibration_trials: usize,
    pub points_per_trial: usize,
    pub seed: u64,
}

impl ScoreDiffCheck {
    pub fn new(d: usize, n1: usize, n0: usize, eta: f64, trials: usize, seed: u64) -> Self {
        ScoreDiffCheck {
            d,
            n0,
            n1,
            eta,
            sigma: 1.0,
            step: MeanStep::New,
            trials,
            calibration_trials: trials.div_ceil(2).max(1),
            points_per_trial: 2,
            seed,
        }
    }

    /// ScoreDiff values `(diff, is_in)` of one world's challenge points.
    fn world_scores(&self, world: &MeanWorld, t: u64) -> Result<Vec<(f64, bool)>> {
        let sample = world.sample(t)?;
        let f0 = sample.estimates.mu0.clone();
        let f1 = grad_step_mean(&f0, &sample.d1, &sample.d0, self.eta, self.step, MeanLoss::L2Squared)?;
        let mut r = rng(child(child(world.seed, t), 1));
        Ok(challenges(world, &sample.d1, self.points_per_trial, &mut r)
            .into_iter()
            .map(|(v, is_in)| (MeanLoss::L2Squared.eval(&f1, &v) - MeanLoss::L2Squared.eval(&f0, &v), is_in))
            .collect())
    }

    /// Midpoint of the mean IN and mean OUT ScoreDiff over calibration worlds.
    pub fn threshold(&self, exec: Execution) -> Result<f64> {
        let world = MeanWorld::centered(self.d, self.sigma, self.n0, self.n1, child(self.seed, 1))?;
        let scores = exec.try_map(self.calibration_trials, |t| self.world_scores(&world, t as u64))?;
        let (mut s_in, mut s_out) = (Vec::new(), Vec::new());
        for (s, is_in) in scores.into_iter().flatten() {
            if is_in { s_in.push(s) } else { s_out.push(s) }
        }
        Ok(0.5 * (stats::mean(&s_in) + stats::mean(&s_out)))
    }

    pub fn run(&self, exec: Execution) -> Result<MonteCarlo> {
        if self.d == 0 || self.n0 == 0 || self.n1 == 0 {
            return Err(Error::InvalidInput("d, n0 and n1 must be positive".into()));
        }
        check_trials(self.trials, self.points_per_trial)?;
        if self.calibration_trials == 0 {
            return Err(Error::InvalidInput("calibration_trials must be >= 1".into()));
        }
        let threshold = self.threshold(exec)?;
        let world = MeanWorld::centered(self.d, self.sigma, self.n0, self.n1, child(self.seed, 2))?;
        let acc = exec.try_map(self.trials, |t| -> Result<f64> {
            let scores = self.world_scores(&world, t as u64)?;
            let verdicts = scores
                .into_iter()
                .map(|(s, is_in)| (if s <= threshold { Verdict::In } else { Verdict::Out }, is_in));
            Ok(accuracy_of(verdicts))
        })?;
        MonteCarlo::from_trials(&acc)
    }
}

/// Accuracy of ScoreDiff on SGD-New one-step mean updates with `sigma = 1`.
pub fn scorediff_theorem_check(d: usize, n1: usize, n0: usize, eta: f64, trials: usize, seed: u64) -> Result<f64> {
    Ok(ScoreDiffCheck::new(d, n1, n0, eta, trials, seed).run(Execution::default())?.accuracy)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_mean_basics() {
        assert_eq!(sample_mean(&[vec![3.0, -1.0]]).unwrap(), vec![3.0, -1.0]);
        assert_eq!(sample_mean(&[vec![0.0, 0.0], vec![2.0, 2.0]]).unwrap(), vec![1.0, 1.0]);
        assert!(sample_mean(&[]).is_err());
    }

    #[test]
    fn np_at_center_is_out() {
        let mu = vec![0.0; 5];
        let (li, lo) = log_densities(&mu, &mu, &mu, 1.0, 10).unwrap();
        assert!((li - lo - 2.5 * (0.9f64).ln()).abs() < 1e-12);
        assert_eq!(np_no_update(&mu, &mu, &mu, 1.0, 10).unwrap(), Verdict::Out);
    }

    #[test]
    fn log_densities_finite_in_high_dimension() {
        let mu = vec![0.0; 250];
        let v = vec![0.3; 250];
        let (li, lo) = log_densities(&v, &mu, &mu, 0.1, 200).unwrap();
        assert!(li.is_finite() && lo.is_finite());
    }

    #[test]
    fn dot_attack_ties_and_self_mean() {
        let mu = vec![1.0, 2.0];
        assert_eq!(dot_attack(&mu, &[5.0, 5.0], &mu, 3).unwrap(), Verdict::In);
        let v = vec![2.0, 0.0];
        assert_eq!(dot_attack(&v, &v, &mu, 3).unwrap(), Verdict::In);
        assert!(dot_attack(&v, &v, &mu, 0).is_err());
    }

    #[test]
    fn bounds() {
        let b = bound_no_update(1, 101).unwrap();
        assert!((b - (0.5 + 0.5 * (0.05f64.sqrt() + 0.01))).abs() < 1e-12);
        assert_eq!(bound_no_update(100, 50).unwrap(), 1.0);
        assert!(bound_no_update(1, 1).is_err());
        assert!((bound_update(80, 2).unwrap() - 0.841_344_746).abs() < 1e-7);
        assert_eq!(bound_update(0, 5).unwrap(), 0.5);
        assert!(bound_update(10, 1).is_err());
    }

    #[test]
    fn zero_step_keeps_mean() {
        let f0 = vec![1.0, 2.0];
        let d1 = vec![vec![0.0, 0.0]];
        let f1 = grad_step_mean(&f0, &d1, &[], 0.0, MeanStep::New, MeanLoss::L2Squared).unwrap();
        assert_eq!(f1, f0);
        assert!(grad_step_mean(&f0, &[], &[], 0.1, MeanStep::New, MeanLoss::L2).is_err());
    }

    #[test]
    fn empty_initial_set_reduces() {
        let est = MeanEstimates::new(vec![0.0; 3], vec![0.5, 1.0, -2.0], 0, 4).unwrap();
        assert_eq!(est.mu_delta, est.mu1);
    }

    #[test]
    fn config_rejects_zero_trials() {
        let mut c = MeanLabConfig::reference_grid(1);
        c.trials = 0;
        assert!(c.validate().is_err());
        assert!(run_mean_experiment(&c, Execution::Sequential).is_err());
    }
}
