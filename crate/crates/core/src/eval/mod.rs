//! Success-rate evaluation, greedy-rollout value estimates, the
//! value-of-compute estimator and the yoked active/passive harness.

mod report;
mod voc;
mod yoked;

pub use report::{evaluate, evaluate_network, DepthStat, EvalReport};
pub use voc::{
    estimate_value, value_of_compute, voc_curves, write_voc_table, DeterministicMdp, GoalTask, ValueEstimate, VocCurve,
    VocEstimate, VocSummary,
};
pub use yoked::{yoked_train, YokedOutcome};
