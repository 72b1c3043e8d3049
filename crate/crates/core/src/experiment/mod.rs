//! The membership-inference game with model updates, its metrics and the
//! single-update, multi-update and distribution-shift instantiations.

mod config;
mod metrics;
mod run;
mod sweep;

pub use config::{
    AttackSpec, BaselineKind, ExperimentConfig, Instantiation, ModelConfig, PopulationConfig, ShadowConfig,
    SweepConfig, SweepParameter, ThresholdSpec, SCHEMA_VERSION,
};
pub use metrics::{baseline_generic, baseline_random, compute_metrics, Counts, MetricsReport, TrialRecord};
pub use run::{run_experiment, run_experiment_with, Diagnostics, ExperimentOutput, ExperimentReport};
pub use sweep::{run_sweep, with_parameter, write_sweep_csv, SweepRow};
