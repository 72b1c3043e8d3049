//! Membership-inference attacks against models that receive updates.
//!
//! The crate covers the whole pipeline: data sources ([`data`]), trainable
//! softmax models and update strategies ([`learners`]), per-example scores
//! ([`scores`]), score combiners, thresholds and multi-update attacks
//! ([`attacks`]), the experiment protocol ([`experiment`]), the analytical
//! mean-estimation laboratory ([`mean_lab`]) and DP auditing ([`dp_audit`]).

pub mod attacks;
pub mod data;
pub mod dp_audit;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod learners;
pub mod mean_lab;
pub mod scores;
pub mod seed;
pub mod stats;

pub use error::{Error, Result};
pub use exec::Execution;
