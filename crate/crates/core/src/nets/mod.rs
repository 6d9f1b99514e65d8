//! Policy and value networks: the interpolation recurrent unit (IRU), the
//! skip-connected recurrent architecture built around it, and the ablation
//! and feed-forward baselines.

mod arch;
mod iru;
mod network;

pub use arch::{ArchConfig, BlockKind};
pub use iru::{iru_block, iru_cell, IruParams};
pub use network::{FlopCount, Network, DEEP_RECURSION_PERIOD};

use crate::ndcore::NdError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error(transparent)]
    Nd(#[from] NdError),
    #[error("recurrent step count must be at least 1")]
    ZeroSteps,
    #[error("unknown block kind `{0}`")]
    UnknownKind(String),
    #[error("invalid architecture: {0}")]
    Config(String),
    #[error("input width {got} does not match configured width {expected}")]
    Width { expected: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, NetError>;
