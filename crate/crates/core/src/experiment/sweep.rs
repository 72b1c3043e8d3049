use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Instantiation, SweepParameter};
use super::run::run_experiment_with;
use crate::error::{Error, Result};
use crate::exec::Execution;

/// One attack's metrics at one sweep value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub parameter: String,
    pub value: f64,
    pub attack: String,
    pub trials: usize,
    pub accuracy: f64,
    pub accuracy_stderr: f64,
    pub generic_accuracy: f64,
    pub specific_accuracy: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

/// `config` with the swept parameter set to `value`.
pub fn with_parameter(config: &ExperimentConfig, parameter: SweepParameter, value: f64) -> Result<ExperimentConfig> {
    let mut c = config.clone();
    c.sweep = None;
    match parameter {
        SweepParameter::NUp => c.n_up = value as usize,
        SweepParameter::K => match &mut c.instantiation {
            Instantiation::Multi { k } => *k = value as usize,
            _ => return Err(Error::Config("a k sweep needs the multi instantiation".into())),
        },
        SweepParameter::Alpha => match &mut c.instantiation {
            Instantiation::Shift { alpha, .. } => *alpha = value,
            _ => return Err(Error::Config("an alpha sweep needs the shift instantiation".into())),
        },
    }
    Ok(c)
}

/// Run the configured sweep, every point with the same root seed. Returns no
/// rows when the config has no sweep.
pub fn run_sweep(config: &ExperimentConfig, exec: Execution, base_dir: &Path) -> Result<Vec<SweepRow>> {
    let Some(sweep) = &config.sweep else {
        return Ok(Vec::new());
    };
    config.validate()?;
    let name = match sweep.parameter {
        SweepParameter::NUp => "n_up",
        SweepParameter::K => "k",
        SweepParameter::Alpha => "alpha",
    };
    let mut rows = Vec::new();
    for &value in &sweep.values {
        let out = run_experiment_with(&with_parameter(config, sweep.parameter, value)?, exec, base_dir)?;
        for m in out.report.attacks {
            rows.push(SweepRow {
                parameter: name.into(),
                value,
                attack: m.attack,
                trials: m.trials,
                accuracy: m.accuracy,
                accuracy_stderr: m.accuracy_stderr,
                generic_accuracy: m.generic_accuracy,
                specific_accuracy: m.specific_accuracy,
                precision: m.precision,
                recall: m.recall,
            });
        }
    }
    Ok(rows)
}

pub fn write_sweep_csv(path: impl AsRef<Path>, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))
}
