use std::path::PathBuf;

use crate::config::ExperimentConfig;
use crate::trainers::{train_group, Result, TrainError, TrainOutcome};

#[derive(Clone, Debug)]
pub struct YokedOutcome {
    pub active: TrainOutcome,
    pub passive: TrainOutcome,
}

impl YokedOutcome {
    /// Both learners consumed the identical sequence of training batches.
    pub fn streams_match(&self) -> bool {
        self.active.batches == self.passive.batches && self.active.batch_stream == self.passive.batch_stream
    }
}

/// Train an active agent and, in lockstep, a passive agent that never acts:
/// it updates on exactly the batches the active agent collected and trained
/// on. The configs may differ in recurrent steps and seed (initialization)
/// but must share env, algorithm and architecture family; the active
/// config's seed drives collection and sampling.
pub fn yoked_train(
    active: &ExperimentConfig,
    passive: &ExperimentConfig,
    outs: Option<(PathBuf, PathBuf)>,
) -> Result<YokedOutcome> {
    if active.env != passive.env || active.algo != passive.algo {
        return Err(TrainError::Config(format!(
            "yoked agents must share env and algorithm ({} / {} vs {} / {})",
            active.env, active.algo, passive.env, passive.algo
        )));
    }
    let outs = match outs {
        Some((a, p)) => vec![Some(a), Some(p)],
        None => vec![None, None],
    };
    let mut v = train_group(&[active.clone(), passive.clone()], &outs)?;
    let passive = v.pop().expect("two outcomes");
    let active = v.pop().expect("two outcomes");
    Ok(YokedOutcome { active, passive })
}
