//! Deterministic goal-conditioned grid environments, task distributions with
//! horizon control, and a breadth-first search distance oracle.

mod bfs;
mod boxpick;
mod episode;
mod fixture;
mod lightsout;
mod task;

pub use bfs::{bfs_distance, DEFAULT_BFS_BUDGET};
pub use boxpick::{
    quadrant_of, Boxpick, BoxpickAction, BoxpickMode, BoxpickState, Split, BOXPICK_EPISODE_CAP,
    BOXPICK_SIZE,
};
pub use episode::{Episode, StepOutcome};
pub use fixture::{parse_fixture_line, read_fixtures, write_fixture_line};
pub use lightsout::{LightsOut, Anchor, LightsOutState, LIGHTSOUT_EPISODE_CAP};
pub use task::{Env, EnvState, Task, TaskDistribution, TaskGoal, TaskMeta};

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EnvError {
    #[error("action {action} out of range (0..{actions})")]
    ActionOutOfRange { action: usize, actions: usize },
    #[error("invalid depth range [{lo}, {hi}] for a board of {cells} cells")]
    InvalidRange { lo: usize, hi: usize, cells: usize },
    #[error("infeasible task placement: {0}")]
    Infeasible(String),
    #[error("search frontier exceeded the budget of {0} states")]
    Overflow(usize),
    #[error("unknown environment `{0}`")]
    UnknownEnv(String),
    #[error("malformed task fixture: {0}")]
    Fixture(String),
    #[error("task does not belong to this environment")]
    Mismatch,
}

pub type Result<T> = std::result::Result<T, EnvError>;

/// Reward for every step that does not reach the goal.
pub const STEP_REWARD: f64 = -1.0;
/// Reward for the step that reaches the goal.
pub const GOAL_REWARD: f64 = 0.0;
