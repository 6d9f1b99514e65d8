//! PPO and goal-conditioned DQN training: environment pools, rollout
//! collection, advantage estimation, replay, updates and the train loop.

mod dqn;
mod gae;
mod policy;
mod pool;
mod ppo;
mod replay;
mod rollout;
mod train;

use thiserror::Error;

use crate::envs::EnvError;
use crate::nets::NetError;
use crate::ndcore::NdError;

pub use dqn::{dqn_update, td_targets, DqnAgent, DqnConfig, DqnLosses, Exploration, Relabel};
pub use gae::{gae, gae_with_bootstrap};
pub use policy::{argmax, log_softmax_row, sample_categorical, GreedyNet, Policy, UniformRandom};
pub use pool::{EnvPool, EpisodeStat, PoolStep};
pub use ppo::{ppo_gradients, ppo_loss, ppo_update, Minibatch, PpoAgent, PpoConfig, PpoLosses};
pub use replay::{ReplayBatch, ReplayBuffer, Transition};
pub use rollout::{collect_rollouts, ActorCritic, RolloutBatch, UniformActorCritic};
pub use train::{train, train_group, Agent, TrainOutcome, CHECKPOINT_FILE, CONFIG_FILE, METRICS_FILE};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Nd(#[from] NdError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("environment {index}: {source}")]
    EnvAt { index: usize, source: EnvError },
    #[error("non-finite {what}: {detail}")]
    NonFinite { what: String, detail: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("replay buffer holds {len} transitions, needs {min}")]
    ReplayCold { len: usize, min: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TrainError>;
