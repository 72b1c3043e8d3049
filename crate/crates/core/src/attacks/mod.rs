//! Score combiners, threshold calibration, multi-update attacks and the
//! exhaustive 0/1-loss attack.

mod combine;
mod export;
mod multi;
mod threshold;
mod zero_one;

pub use combine::{combined_score, score_diff, score_ratio, stage_of, Combiner, Scorer, DEFAULT_DAMPING};
pub use export::{write_decisions_csv, DecisionRow};
pub use multi::{back_front, delta_attack, delta_decide, delta_thresholds, MultiUpdateDecision};
pub use threshold::{
    calibrate_batch, calibrate_rank, calibrate_transfer, decide, transfer_scores, ThresholdMode, Verdict,
};
pub use zero_one::{optimal_01_attack, ZeroOneStrategy, ZeroOneTable, P00, P01, P10, P11};
