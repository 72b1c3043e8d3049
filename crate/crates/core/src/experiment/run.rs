use std::io::Write;
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::config::{AttackSpec, BaselineKind, ExperimentConfig, Instantiation, ThresholdSpec};
use super::metrics::{baseline_generic, baseline_random, compute_metrics, MetricsReport, TrialRecord};
use crate::attacks::{
    calibrate_batch, calibrate_rank, calibrate_transfer, delta_decide, delta_thresholds, stage_of, Scorer,
    ThresholdMode,
};
use crate::data::{Dataset, MixtureStream, PointStream, Population};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::learners::{train_initial, update_model, Arch, UpdateTrace};
use crate::scores::{gap_score, loss_score, train_shadows_with, ShadowRecipe, ShadowSet, Stage};
use crate::seed::{self, stream};

/// Averages over worlds of a few model accuracies, for orientation.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// `f0` on fresh points from the update distribution.
    pub f0_test_accuracy: f64,
    /// `fk` on fresh points from the update distribution.
    pub fk_test_accuracy: f64,
    /// `fk` on the union of its update sets.
    pub fk_update_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub instantiation: String,
    pub k: usize,
    pub n0: usize,
    pub n_up: usize,
    pub worlds: usize,
    pub points_per_world: usize,
    pub seed: u64,
    pub attacks: Vec<MetricsReport>,
    /// Names of every attack attaining the top accuracy.
    pub best: Vec<String>,
    /// Specific accuracy of guessing both bits at random.
    pub baseline_random: f64,
    /// Specific accuracy of the best update attack's generic accuracy spread
    /// over a random update index, for multi-update runs.
    pub baseline_generic: Option<f64>,
    pub diagnostics: Diagnostics,
}

impl ExperimentReport {
    pub fn attack(&self, name: &str) -> Option<&MetricsReport> {
        self.attacks.iter().find(|m| m.attack == name)
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub report: ExperimentReport,
    pub trials: Vec<TrialRecord>,
}

impl ExperimentOutput {
    /// One JSON object per trial, in world/point/attack order.
    pub fn write_trials_jsonl(&self, mut w: impl Write) -> std::io::Result<()> {
        for t in &self.trials {
            serde_json::to_writer(&mut w, t)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    run_experiment_with(config, Execution::default(), Path::new("."))
}

/// Run the membership-inference game. Worlds are independent: each trains its
/// own `f0 ... fk` and answers `points_per_world` challenges with every
/// configured attack. File paths in the config resolve against `base_dir`.
pub fn run_experiment_with(config: &ExperimentConfig, exec: Execution, base_dir: &Path) -> Result<ExperimentOutput> {
    config.validate()?;
    let pop = config.population.build(base_dir)?;
    let target = match &config.instantiation {
        Instantiation::Shift { target, .. } => Some(target.build(base_dir)?),
        _ => None,
    };
    if let Some(t) = &target {
        if t.dim() != pop.dim() || t.num_classes() != pop.num_classes() {
            return Err(Error::Config("shift target must match the population's dimension and classes".into()));
        }
    }
    let arch = config.arch(pop.dim(), pop.num_classes());
    arch.validate()?;
    let root = config.seed;

    let shadows = if config.needs_shadows() {
        let pool = pop
            .stream(seed::child(root, stream::SHADOW))
            .draw(config.shadow_pool_size())?;
        let recipe = ShadowRecipe {
            arch: arch.clone(),
            initial: config.initial.clone(),
            update: config.update.clone(),
            n_update: config.n_up,
            statistic: config.shadows.statistic,
        };
        Some(train_shadows_with(
            exec,
            &pool,
            config.shadows.count,
            &recipe,
            seed::child(root, stream::SHADOW + 1),
        )?)
    } else {
        None
    };

    let transfer: Vec<Option<f64>> = config
        .attacks
        .iter()
        .map(|a| match a {
            AttackSpec::Update {
                combiner,
                score,
                threshold: ThresholdSpec::Transfer { mode },
            } => {
                let s = shadows.as_ref().expect("validated: transfer needs shadows");
                calibrate_transfer(s, *combiner, &Scorer::new(*score, Some(s)), *mode).map(Some)
            }
            _ => Ok(None),
        })
        .collect::<Result<_>>()?;

    let ctx = Ctx {
        config,
        pop: pop.as_ref(),
        target: target.as_deref(),
        arch: &arch,
        shadows: shadows.as_ref(),
        transfer: &transfer,
    };
    let worlds = exec.try_map(config.worlds, |w| run_world(&ctx, w).map_err(|e| e.in_trial(w)))?;

    let mut diagnostics = Diagnostics::default();
    let mut trials = Vec::with_capacity(config.worlds * config.points_per_world * config.attacks.len());
    for (records, d) in worlds {
        diagnostics.f0_test_accuracy += d.f0_test_accuracy;
        diagnostics.fk_test_accuracy += d.fk_test_accuracy;
        diagnostics.fk_update_accuracy += d.fk_update_accuracy;
        trials.extend(records);
    }
    let nw = config.worlds as f64;
    diagnostics.f0_test_accuracy /= nw;
    diagnostics.fk_test_accuracy /= nw;
    diagnostics.fk_update_accuracy /= nw;

    let names: Vec<String> = config.attacks.iter().map(AttackSpec::name).collect();
    let mut attacks = Vec::with_capacity(names.len());
    for (i, name) in names.iter().enumerate() {
        let mine: Vec<TrialRecord> = trials
            .iter()
            .skip(i)
            .step_by(names.len())
            .cloned()
            .collect();
        debug_assert!(mine.iter().all(|r| &r.attack == name));
        attacks.push(compute_metrics(&mine)?);
    }
    let top = attacks.iter().map(|m| m.accuracy).fold(f64::NEG_INFINITY, f64::max);
    let mut best = Vec::new();
    for m in &mut attacks {
        if m.accuracy == top {
            m.best = true;
            best.push(m.attack.clone());
        }
    }
    let k = config.k();
    let baseline_generic = if k > 1 {
        let p = config
            .attacks
            .iter()
            .zip(&attacks)
            .filter(|(a, _)| matches!(a, AttackSpec::Update { .. }))
            .map(|(_, m)| m.generic_accuracy)
            .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))));
        p.map(|p| baseline_generic(p, k)).transpose()?
    } else {
        None
    };

    Ok(ExperimentOutput {
        report: ExperimentReport {
            instantiation: config.instantiation.name().into(),
            k,
            n0: config.n0,
            n_up: config.n_up,
            worlds: config.worlds,
            points_per_world: config.points_per_world,
            seed: root,
            attacks,
            best,
            baseline_random: baseline_random(k)?,
            baseline_generic,
            diagnostics,
        },
        trials,
    })
}

struct Ctx<'a> {
    config: &'a ExperimentConfig,
    pop: &'a dyn Population,
    target: Option<&'a dyn Population>,
    arch: &'a Arch,
    shadows: Option<&'a ShadowSet>,
    transfer: &'a [Option<f64>],
}

/// Per-world state an attack is calibrated against.
struct World {
    trace: UpdateTrace,
    /// Update points followed by the same number of fresh points.
    calibration: Dataset,
    fresh: Dataset,
}

struct Challenge {
    x: Vec<f64>,
    y: usize,
    a: usize,
    b: bool,
    guess_a: usize,
    coin: bool,
}

fn run_world(ctx: &Ctx<'_>, w: usize) -> Result<(Vec<TrialRecord>, Diagnostics)> {
    let cfg = ctx.config;
    let k = cfg.k();
    let ws = seed::child(seed::child(cfg.seed, stream::WORLD), w as u64);

    let mut source = ctx.pop.stream(seed::child(ws, stream::DATA));
    let d0 = source.draw(cfg.n0)?;
    let f0 = train_initial(ctx.arch, &cfg.initial.with_seed(seed::child(ws, stream::TRAIN)), &d0)?;

    // Update and OUT points continue the stream that produced D0, so they never
    // repeat a D0 point even for finite pools.
    let mut updates: Box<dyn PointStream + '_> = match (&cfg.instantiation, ctx.target) {
        (Instantiation::Shift { alpha, .. }, Some(target)) => Box::new(MixtureStream::new(
            source,
            target.stream(seed::child(ws, stream::TARGET_DATA)),
            *alpha,
            seed::child(ws, stream::MIXTURE),
        )),
        _ => source,
    };

    let mut trace = UpdateTrace::new(f0, d0)?;
    let update_seed = seed::child(ws, stream::UPDATE);
    for i in 1..=k {
        let di = updates.draw(cfg.n_up)?;
        let strategy = cfg.update.with_seed(seed::child(update_seed, i as u64));
        update_model(&mut trace, di, &strategy)?;
    }
    let fresh = updates.draw(k * cfg.n_up)?;
    let mut parts: Vec<&Dataset> = trace.update_sets().iter().collect();
    parts.push(&fresh);
    let calibration = Dataset::concat(&parts)?;

    let mut crng = seed::rng(seed::child(ws, stream::CHALLENGE));
    let mut grng = seed::rng(seed::child(ws, stream::GUESS));
    let mut challenges = Vec::with_capacity(cfg.points_per_world);
    for _ in 0..cfg.points_per_world {
        let a = crng.random_range(1..=k);
        let b = match cfg.force_membership {
            Some(b) => b,
            None => crng.random_bool(0.5),
        };
        let (x, y) = if b {
            let d = trace.update_set(a);
            let j = crng.random_range(0..d.len());
            (d.row(j).to_vec(), d.label(j))
        } else {
            let mut x = Vec::with_capacity(ctx.pop.dim());
            let y = updates.next_point(&mut x)?;
            (x, y)
        };
        challenges.push(Challenge {
            x,
            y,
            a,
            b,
            guess_a: grng.random_range(1..=k),
            coin: grng.random_bool(0.5),
        });
    }

    let world = World {
        trace,
        calibration,
        fresh,
    };
    let mut per_attack = Vec::with_capacity(cfg.attacks.len());
    for (i, spec) in cfg.attacks.iter().enumerate() {
        per_attack.push(evaluate_attack(ctx, &world, spec, ctx.transfer[i], &challenges)?);
    }

    let mut records = Vec::with_capacity(challenges.len() * cfg.attacks.len());
    for p in 0..challenges.len() {
        for (i, spec) in cfg.attacks.iter().enumerate() {
            let ans = &per_attack[i][p];
            let c = &challenges[p];
            records.push(TrialRecord {
                world: w,
                point: p,
                attack: spec.name(),
                a: c.a,
                b: u8::from(c.b),
                a_hat: if ans.b_hat { ans.a_hat } else { 0 },
                b_hat: u8::from(ans.b_hat),
                combined: ans.combined,
                scores: ans.scores.clone(),
                thresholds: ans.thresholds.clone(),
            });
        }
    }

    let all_updates = Dataset::concat(&world.trace.update_sets().iter().collect::<Vec<_>>())?;
    let diagnostics = Diagnostics {
        f0_test_accuracy: world.trace.first().accuracy(&world.fresh)?,
        fk_test_accuracy: world.trace.last().accuracy(&world.fresh)?,
        fk_update_accuracy: world.trace.last().accuracy(&all_updates)?,
    };
    Ok((records, diagnostics))
}

struct Answer {
    b_hat: bool,
    a_hat: usize,
    combined: Option<f64>,
    scores: Vec<f64>,
    thresholds: Vec<f64>,
}

fn scores_on(data: &Dataset, f: impl Fn(&[f64], usize) -> Result<f64>) -> Result<Vec<f64>> {
    data.iter().map(|(x, y)| f(x, y)).collect()
}

fn evaluate_attack(
    ctx: &Ctx<'_>,
    world: &World,
    spec: &AttackSpec,
    transfer: Option<f64>,
    challenges: &[Challenge],
) -> Result<Vec<Answer>> {
    let trace = &world.trace;
    let k = trace.k();
    let generic_guess = |c: &Challenge| if k == 1 { 1 } else { c.guess_a };
    match *spec {
        AttackSpec::Update {
            combiner,
            score,
            threshold,
        } => {
            let scorer = Scorer::new(score, ctx.shadows);
            let (f0, fk) = (trace.first(), trace.last());
            let pair = |x: &[f64], y: usize| -> Result<(f64, f64, f64)> {
                let s0 = scorer.eval(x, y, f0, Stage::Before)?;
                let s1 = scorer.eval(x, y, fk, stage_of(k))?;
                Ok((s0, s1, combiner.combine(s0, s1)?))
            };
            let t = match threshold {
                ThresholdSpec::Batch { mode } => {
                    calibrate_batch(&scores_on(&world.calibration, |x, y| Ok(pair(x, y)?.2))?, mode)?
                }
                ThresholdSpec::Transfer { .. } => transfer.expect("transfer threshold precomputed"),
                ThresholdSpec::Rank { q } => {
                    calibrate_rank(&scores_on(&world.fresh, |x, y| Ok(pair(x, y)?.2))?, q)?
                }
            };
            challenges
                .iter()
                .map(|c| {
                    let (s0, s1, comb) = pair(&c.x, c.y)?;
                    Ok(Answer {
                        b_hat: comb < t,
                        a_hat: generic_guess(c),
                        combined: Some(comb),
                        scores: vec![s0, s1],
                        thresholds: vec![t],
                    })
                })
                .collect()
        }
        AttackSpec::Delta { combiner, score } => {
            let scorer = Scorer::new(score, ctx.shadows);
            let per_model = |x: &[f64], y: usize| -> Result<Vec<f64>> {
                (0..=k).map(|i| scorer.eval(x, y, trace.model(i), stage_of(i))).collect()
            };
            let per_pair = |s: &[f64]| -> Result<Vec<f64>> {
                (1..=k).map(|i| combiner.combine(s[i - 1], s[i])).collect()
            };
            let mut batch = vec![Vec::with_capacity(world.calibration.len()); k];
            for (x, y) in world.calibration.iter() {
                for (i, v) in per_pair(&per_model(x, y)?)?.into_iter().enumerate() {
                    batch[i].push(v);
                }
            }
            let thresholds = delta_thresholds(&batch, k, ctx.config.n_up)?;
            challenges
                .iter()
                .map(|c| {
                    let s = per_model(&c.x, c.y)?;
                    let d = delta_decide(&per_pair(&s)?, &thresholds);
                    Ok(Answer {
                        b_hat: d.is_in(),
                        a_hat: d.epoch().unwrap_or(0),
                        combined: None,
                        scores: s,
                        thresholds: thresholds.clone(),
                    })
                })
                .collect()
        }
        AttackSpec::Baseline { kind } => {
            let fk = trace.last();
            let (t, eval): (f64, Box<dyn Fn(&[f64], usize) -> Result<f64> + '_>) = match kind {
                BaselineKind::Gap => (0.5, Box::new(|x, y| gap_score(x, y, fk))),
                BaselineKind::Loss => {
                    let train = trace.all_training_data()?;
                    (fk.mean_loss(&train)?, Box::new(|x, y| loss_score(x, y, fk)))
                }
                BaselineKind::Lira => {
                    let scorer = Scorer::new(crate::scores::ScoreKind::Lira, ctx.shadows);
                    let f = move |x: &[f64], y: usize| scorer.eval(x, y, fk, stage_of(k));
                    let t = calibrate_batch(&scores_on(&world.calibration, f)?, ThresholdMode::Accuracy)?;
                    (t, Box::new(f))
                }
            };
            challenges
                .iter()
                .map(|c| {
                    let s = eval(&c.x, c.y)?;
                    Ok(Answer {
                        b_hat: s < t,
                        a_hat: generic_guess(c),
                        combined: None,
                        scores: vec![s],
                        thresholds: vec![t],
                    })
                })
                .collect()
        }
        AttackSpec::AlwaysIn | AttackSpec::CoinFlip => Ok(challenges
            .iter()
            .map(|c| Answer {
                b_hat: matches!(spec, AttackSpec::AlwaysIn) || c.coin,
                a_hat: generic_guess(c),
                combined: None,
                scores: Vec::new(),
                thresholds: Vec::new(),
            })
            .collect()),
    }
}
