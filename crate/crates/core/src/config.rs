//! Declarative experiment configuration: plain-text `key = value` lines.
//!
//! Parsing starts from the preset for the file's `env` (or the default env),
//! then applies every other key in file order. Unknown keys are rejected.

use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::envs::{Anchor, Env, Split, TaskDistribution};
use crate::nets::{ArchConfig, BlockKind};
use crate::trainers::{DqnConfig, PpoConfig};

pub const DEFAULT_ENV: &str = "lightsout-3x3";

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid value `{value}` for `{key}`: {reason}")]
    Invalid { key: String, value: String, reason: String },
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("key `{0}` given twice")]
    Duplicate(String),
    #[error("{0}")]
    Validation(String),
    #[error("cannot read config: {0}")]
    Io(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algo {
    Ppo,
    Dqn,
}

impl std::fmt::Display for Algo {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algo::Ppo => "ppo",
            Algo::Dqn => "dqn",
        })
    }
}

impl FromStr for Algo {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ppo" => Ok(Algo::Ppo),
            "dqn" => Ok(Algo::Dqn),
            _ => Err("expected ppo | dqn".into()),
        }
    }
}

/// Inclusive depth range written `lo-hi`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DepthRange {
    pub lo: usize,
    pub hi: usize,
}

impl std::fmt::Display for DepthRange {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}-{}", self.lo, self.hi)
    }
}

impl FromStr for DepthRange {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let (lo, hi) = s.split_once('-').unwrap_or((s, s));
        let lo = lo.trim().parse().map_err(|_| "expected lo-hi".to_string())?;
        let hi = hi.trim().parse().map_err(|_| "expected lo-hi".to_string())?;
        if lo > hi {
            return Err("lo must not exceed hi".into());
        }
        Ok(Self { lo, hi })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub env: String,
    pub algo: Algo,
    pub seed: u64,
    /// Output directory; empty selects `$RECURDEPTH_OUT/<run id>` (or
    /// `runs/<run id>`). Not part of the content hash.
    pub out: String,
    pub arch_kind: BlockKind,
    pub arch_hidden: usize,
    pub arch_layers: usize,
    pub arch_blocks: usize,
    pub arch_steps: usize,
    pub train_depth: DepthRange,
    pub test_depth: DepthRange,
    /// Which end of a LightsOut task is the all-off board (both distributions).
    pub anchor: Anchor,
    pub budget_env_steps: u64,
    /// Environment steps between evaluations (0: only first and last).
    pub eval_every: u64,
    pub eval_episodes: usize,
    /// Updates between checkpoints (0: only the final checkpoint).
    pub checkpoint_every: u64,
    /// Add elapsed wall-clock seconds to metrics records. Off by default so
    /// that metrics files are a pure function of config and seed.
    pub wall_clock: bool,
    pub ppo: PpoConfig,
    pub dqn: DqnConfig,
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::Invalid {
        key: key.into(),
        value: value.into(),
        reason: e.to_string(),
    })
}

fn parse_clip(key: &str, value: &str) -> Result<Option<f64>, ConfigError> {
    if value == "none" {
        Ok(None)
    } else {
        parse_value(key, value).map(Some)
    }
}

fn fmt_clip(c: Option<f64>) -> String {
    c.map_or_else(|| "none".to_string(), |c| c.to_string())
}

impl ExperimentConfig {
    /// Defaults for an environment family: PPO with a two-layer IRU of
    /// width 64 for LightsOut; DQN with a one-layer IRU of width 256 for
    /// Boxpick.
    pub fn preset(env: &str) -> Result<Self, ConfigError> {
        let parsed = Env::parse(env).map_err(|e| ConfigError::Invalid {
            key: "env".into(),
            value: env.into(),
            reason: e.to_string(),
        })?;
        let base = Self {
            env: env.to_string(),
            algo: Algo::Ppo,
            seed: 0,
            out: String::new(),
            arch_kind: BlockKind::Iru,
            arch_hidden: 64,
            arch_layers: 2,
            arch_blocks: 0,
            arch_steps: 5,
            train_depth: DepthRange { lo: 1, hi: 4 },
            test_depth: DepthRange { lo: 5, hi: 9 },
            anchor: Anchor::OffGoal,
            budget_env_steps: 2_000_000,
            eval_every: 100_000,
            eval_episodes: 256,
            checkpoint_every: 10,
            wall_clock: false,
            ppo: PpoConfig::default(),
            dqn: DqnConfig::default(),
        };
        Ok(match parsed {
            Env::LightsOut(_) => base,
            Env::Boxpick { .. } => Self {
                algo: Algo::Dqn,
                arch_hidden: 256,
                arch_layers: 1,
                checkpoint_every: 5_000,
                ..base
            },
        })
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut pairs: Vec<(String, String)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                text: raw.to_string(),
            })?;
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            if pairs.iter().any(|(p, _)| *p == k) {
                return Err(ConfigError::Duplicate(k));
            }
            pairs.push((k, v));
        }
        let env = pairs
            .iter()
            .find(|(k, _)| k == "env")
            .map_or(DEFAULT_ENV, |(_, v)| v.as_str());
        let mut cfg = Self::preset(env)?;
        for (k, v) in &pairs {
            if k != "env" {
                cfg.set(k, v)?;
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Apply one `key = value` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value;
        match key {
            "env" => {
                let fresh = Self::preset(v)?;
                let kept_family = std::mem::discriminant(&Env::parse(&self.env).expect("validated env"))
                    == std::mem::discriminant(&Env::parse(v).expect("validated env"));
                if kept_family {
                    self.env = fresh.env;
                } else {
                    let (seed, out) = (self.seed, self.out.clone());
                    *self = Self { seed, out, ..fresh };
                }
            }
            "algo" => self.algo = parse_value(key, v)?,
            "seed" => self.seed = parse_value(key, v)?,
            "out" => self.out = v.to_string(),
            "arch.kind" => self.arch_kind = parse_value(key, v)?,
            "arch.hidden" => self.arch_hidden = parse_value(key, v)?,
            "arch.layers" => self.arch_layers = parse_value(key, v)?,
            "arch.blocks" => self.arch_blocks = parse_value(key, v)?,
            "arch.steps" => self.arch_steps = parse_value(key, v)?,
            "task.train_depth" => self.train_depth = parse_value(key, v)?,
            "task.test_depth" => self.test_depth = parse_value(key, v)?,
            "task.anchor" => self.anchor = parse_value(key, v)?,
            "budget.env_steps" => self.budget_env_steps = parse_value(key, v)?,
            "eval.every" => self.eval_every = parse_value(key, v)?,
            "eval.episodes" => self.eval_episodes = parse_value(key, v)?,
            "checkpoint.every" => self.checkpoint_every = parse_value(key, v)?,
            "metrics.wall_clock" => self.wall_clock = parse_value(key, v)?,
            "optim.grad_clip" => {
                let c = parse_clip(key, v)?;
                self.ppo.grad_clip = c;
                self.dqn.grad_clip = c;
            }
            "ppo.gamma" => self.ppo.gamma = parse_value(key, v)?,
            "ppo.gae_lambda" => self.ppo.gae_lambda = parse_value(key, v)?,
            "ppo.clip" => self.ppo.clip = parse_value(key, v)?,
            "ppo.entropy_coef" => self.ppo.entropy_coef = parse_value(key, v)?,
            "ppo.value_coef" => self.ppo.value_coef = parse_value(key, v)?,
            "ppo.lr" => self.ppo.lr = parse_value(key, v)?,
            "ppo.rollout_len" => self.ppo.rollout_len = parse_value(key, v)?,
            "ppo.epochs" => self.ppo.epochs = parse_value(key, v)?,
            "ppo.minibatches" => self.ppo.minibatches = parse_value(key, v)?,
            "ppo.adv_norm" => self.ppo.normalize_advantages = parse_value(key, v)?,
            "ppo.pool" => self.ppo.pool = parse_value(key, v)?,
            "dqn.gamma" => self.dqn.gamma = parse_value(key, v)?,
            "dqn.lr" => self.dqn.lr = parse_value(key, v)?,
            "dqn.batch" => self.dqn.batch = parse_value(key, v)?,
            "dqn.replay_per_env" => self.dqn.replay_per_env = parse_value(key, v)?,
            "dqn.min_replay" => self.dqn.min_replay = parse_value(key, v)?,
            "dqn.episode_length" => self.dqn.episode_length = parse_value(key, v)?,
            "dqn.pool" => self.dqn.pool = parse_value(key, v)?,
            "dqn.target_update" => self.dqn.target_update = parse_value(key, v)?,
            "dqn.exploration" => self.dqn.exploration = parse_value(key, v)?,
            "dqn.target_entropy" => self.dqn.target_entropy = parse_value(key, v)?,
            "dqn.temperature_lr" => self.dqn.temperature_lr = parse_value(key, v)?,
            "dqn.epsilon" => self.dqn.epsilon = parse_value(key, v)?,
            "dqn.updates_per_step" => self.dqn.updates_per_step = parse_value(key, v)?,
            "dqn.relabel" => self.dqn.relabel = parse_value(key, v)?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Every key with its resolved value, in canonical order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let p = &self.ppo;
        let d = &self.dqn;
        vec![
            ("env", self.env.clone()),
            ("algo", self.algo.to_string()),
            ("seed", self.seed.to_string()),
            ("out", self.out.clone()),
            ("arch.kind", self.arch_kind.to_string()),
            ("arch.hidden", self.arch_hidden.to_string()),
            ("arch.layers", self.arch_layers.to_string()),
            ("arch.blocks", self.arch_blocks.to_string()),
            ("arch.steps", self.arch_steps.to_string()),
            ("task.train_depth", self.train_depth.to_string()),
            ("task.test_depth", self.test_depth.to_string()),
            ("task.anchor", self.anchor.to_string()),
            ("budget.env_steps", self.budget_env_steps.to_string()),
            ("eval.every", self.eval_every.to_string()),
            ("eval.episodes", self.eval_episodes.to_string()),
            ("checkpoint.every", self.checkpoint_every.to_string()),
            ("metrics.wall_clock", self.wall_clock.to_string()),
            ("optim.grad_clip", fmt_clip(p.grad_clip)),
            ("ppo.gamma", p.gamma.to_string()),
            ("ppo.gae_lambda", p.gae_lambda.to_string()),
            ("ppo.clip", p.clip.to_string()),
            ("ppo.entropy_coef", p.entropy_coef.to_string()),
            ("ppo.value_coef", p.value_coef.to_string()),
            ("ppo.lr", p.lr.to_string()),
            ("ppo.rollout_len", p.rollout_len.to_string()),
            ("ppo.epochs", p.epochs.to_string()),
            ("ppo.minibatches", p.minibatches.to_string()),
            ("ppo.adv_norm", p.normalize_advantages.to_string()),
            ("ppo.pool", p.pool.to_string()),
            ("dqn.gamma", d.gamma.to_string()),
            ("dqn.lr", d.lr.to_string()),
            ("dqn.batch", d.batch.to_string()),
            ("dqn.replay_per_env", d.replay_per_env.to_string()),
            ("dqn.min_replay", d.min_replay.to_string()),
            ("dqn.episode_length", d.episode_length.to_string()),
            ("dqn.pool", d.pool.to_string()),
            ("dqn.target_update", d.target_update.to_string()),
            ("dqn.exploration", d.exploration.to_string()),
            ("dqn.target_entropy", d.target_entropy.to_string()),
            ("dqn.temperature_lr", d.temperature_lr.to_string()),
            ("dqn.epsilon", d.epsilon.to_string()),
            ("dqn.updates_per_step", d.updates_per_step.to_string()),
            ("dqn.relabel", d.relabel.to_string()),
        ]
    }

    pub fn to_text(&self) -> String {
        self.entries().iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Content hash of the resolved config as 16 hex digits. The output
    /// directory and the wall-clock switch do not affect results and are
    /// left out.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.entries() {
            if k != "out" && k != "metrics.wall_clock" {
                h.update(format!("{k}={v}\n"));
            }
        }
        hex::encode(&h.finalize()[..8])
    }

    pub fn run_id(&self) -> String {
        format!("{}-s{}", self.hash(), self.seed)
    }

    pub fn env(&self) -> Result<Env, ConfigError> {
        Env::parse(&self.env).map_err(|e| ConfigError::Invalid {
            key: "env".into(),
            value: self.env.clone(),
            reason: e.to_string(),
        })
    }

    pub fn arch(&self) -> Result<ArchConfig, ConfigError> {
        let env = self.env()?;
        let (i, o) = (env.obs_dim(), env.n_actions());
        let a = match self.arch_kind {
            BlockKind::Mlp => ArchConfig::mlp(i, o, self.arch_hidden, self.arch_layers),
            BlockKind::DeepResnet => ArchConfig::deep_resnet(i, o, self.arch_hidden, self.arch_blocks, self.arch_layers),
            kind => ArchConfig::iru(i, o, self.arch_hidden, self.arch_layers, self.arch_steps).with_kind(kind),
        };
        a.validate().map_err(|e| ConfigError::Validation(format!("architecture: {e}")))?;
        Ok(a)
    }

    fn distribution(&self, depth: DepthRange, split: Split) -> Result<TaskDistribution, ConfigError> {
        let env = self.env()?;
        let d = match &env {
            Env::LightsOut(_) => TaskDistribution::lightsout_from(&env, self.anchor, depth.lo, depth.hi),
            Env::Boxpick { .. } => TaskDistribution::boxpick(&env, split),
        };
        d.map_err(|e| ConfigError::Validation(format!("task distribution: {e}")))
    }

    pub fn train_distribution(&self) -> Result<TaskDistribution, ConfigError> {
        self.distribution(self.train_depth, Split::Train)
    }

    pub fn test_distribution(&self) -> Result<TaskDistribution, ConfigError> {
        self.distribution(self.test_depth, Split::Test)
    }

    /// Check every field before any compute happens.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.arch()?;
        self.train_distribution()?;
        self.test_distribution()?;
        if self.eval_episodes == 0 {
            return Err(ConfigError::Validation("eval.episodes must be at least 1".into()));
        }
        match self.algo {
            Algo::Ppo => self.ppo.validate(),
            Algo::Dqn => self.dqn.validate(),
        }
        .map_err(|e| ConfigError::Validation(e.to_string()))
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::preset(DEFAULT_ENV).expect("default env is valid")
    }
}
