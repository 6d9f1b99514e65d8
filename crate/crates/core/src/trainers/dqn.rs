use std::fmt;
use std::str::FromStr;

use rand::Rng;

use super::policy::{argmax, sample_categorical};
use super::replay::ReplayBatch;
use super::{Result, TrainError};
use crate::ndcore::{adam_step, clip_global_norm, AdamConfig, AdamState, ParamSet, Tape, Tensor};
use crate::nets::{ArchConfig, Network};

/// Behaviour policy used while collecting experience.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exploration {
    /// Softmax over `Q / temperature`, temperature adapted toward a target
    /// mean entropy.
    Boltzmann,
    EpsilonGreedy,
}

impl fmt::Display for Exploration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Exploration::Boltzmann => "boltzmann",
            Exploration::EpsilonGreedy => "epsilon-greedy",
        })
    }
}

impl FromStr for Exploration {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "boltzmann" => Ok(Exploration::Boltzmann),
            "epsilon-greedy" => Ok(Exploration::EpsilonGreedy),
            _ => Err(format!("unknown exploration `{s}` (boltzmann | epsilon-greedy)")),
        }
    }
}

/// Goal relabeling of finished episodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relabel {
    None,
    /// Also store each episode relabeled with the goal its final state achieves.
    FinalState,
}

impl fmt::Display for Relabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relabel::None => "none",
            Relabel::FinalState => "final-state",
        })
    }
}

impl FromStr for Relabel {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "none" => Ok(Relabel::None),
            "final-state" => Ok(Relabel::FinalState),
            _ => Err(format!("unknown relabel mode `{s}` (none | final-state)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DqnConfig {
    pub gamma: f64,
    pub lr: f64,
    pub batch: usize,
    pub replay_per_env: usize,
    pub min_replay: usize,
    pub episode_length: usize,
    pub pool: usize,
    /// Updates between hard copies of the online network into the target.
    pub target_update: u64,
    pub exploration: Exploration,
    pub target_entropy: f64,
    pub temperature_lr: f64,
    pub epsilon: f64,
    /// Gradient updates per pool step once the replay is warm.
    pub updates_per_step: usize,
    pub relabel: Relabel,
    pub grad_clip: Option<f64>,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lr: 3e-4,
            batch: 256,
            replay_per_env: 10_000,
            min_replay: 1_000,
            episode_length: 100,
            pool: 64,
            target_update: 1_000,
            exploration: Exploration::Boltzmann,
            target_entropy: 1.1,
            temperature_lr: 0.01,
            epsilon: 0.1,
            updates_per_step: 1,
            relabel: Relabel::None,
            grad_clip: None,
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma <= 1.0) {
            return Err(TrainError::Config(format!("dqn.gamma must lie in [0, 1], got {}", self.gamma)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(TrainError::Config(format!("dqn.lr must be positive, got {}", self.lr)));
        }
        for (name, v) in [
            ("dqn.batch", self.batch),
            ("dqn.replay_per_env", self.replay_per_env),
            ("dqn.min_replay", self.min_replay),
            ("dqn.episode_length", self.episode_length),
            ("dqn.pool", self.pool),
            ("dqn.updates_per_step", self.updates_per_step),
        ] {
            if v == 0 {
                return Err(TrainError::Config(format!("{name} must be positive")));
            }
        }
        if self.target_update == 0 {
            return Err(TrainError::Config("dqn.target_update must be positive".into()));
        }
        if self.batch > self.min_replay {
            return Err(TrainError::Config(format!(
                "dqn.batch ({}) must not exceed dqn.min_replay ({})",
                self.batch, self.min_replay
            )));
        }
        if self.min_replay > self.replay_capacity() {
            return Err(TrainError::Config("dqn.min_replay exceeds the replay capacity".into()));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(TrainError::Config("dqn.epsilon must lie in [0, 1]".into()));
        }
        if !(self.target_entropy > 0.0 && self.temperature_lr > 0.0) {
            return Err(TrainError::Config("dqn.target_entropy and dqn.temperature_lr must be positive".into()));
        }
        Ok(())
    }

    pub fn replay_capacity(&self) -> usize {
        self.replay_per_env * self.pool
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DqnLosses {
    pub loss: f64,
    pub mean_q: f64,
    pub mean_target: f64,
    pub synced: bool,
}

/// Online and target Q-networks plus optimizer and exploration state.
#[derive(Clone, Debug)]
pub struct DqnAgent {
    pub q: Network,
    pub target: Network,
    pub steps: usize,
    opt: AdamState,
    updates: u64,
    log_temperature: f64,
}

const LOG_TEMPERATURE_RANGE: (f64, f64) = (-12.0, 6.0);

impl DqnAgent {
    pub fn new(arch: &ArchConfig, lr: f64, seed: u64) -> Result<Self> {
        Ok(Self::from_network(Network::new(arch, seed)?, lr))
    }

    pub fn from_network(q: Network, lr: f64) -> Self {
        Self {
            target: q.clone(),
            steps: q.steps(),
            opt: AdamState::new(q.params(), AdamConfig::with_lr(lr)),
            q,
            updates: 0,
            log_temperature: 0.0,
        }
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn temperature(&self) -> f64 {
        self.log_temperature.exp()
    }

    pub fn params(&self) -> ParamSet {
        let mut p = self.q.params().prefixed("q.");
        p.extend(self.target.params().prefixed("target."));
        p
    }

    pub fn load(&mut self, params: &ParamSet) -> Result<()> {
        self.q.params_mut().load_from(&params.strip_prefix("q."))?;
        self.target.params_mut().load_from(&params.strip_prefix("target."))?;
        Ok(())
    }

    /// Behaviour actions for a batch of observations. Boltzmann exploration
    /// also moves the temperature one step toward the target entropy and
    /// returns the mean entropy it observed.
    pub fn explore<R: Rng + ?Sized>(&mut self, obs: &Tensor, cfg: &DqnConfig, rng: &mut R) -> Result<(Vec<usize>, f64)> {
        let q = self.q.infer(obs, self.steps)?;
        let (rows, k) = q.dims2("explore")?;
        let mut actions = Vec::with_capacity(rows);
        match cfg.exploration {
            Exploration::EpsilonGreedy => {
                for r in 0..rows {
                    let a = if rng.gen::<f64>() < cfg.epsilon {
                        rng.gen_range(0..k)
                    } else {
                        argmax(q.row(r))
                    };
                    actions.push(a);
                }
                Ok((actions, f64::NAN))
            }
            Exploration::Boltzmann => {
                let temp = self.temperature();
                let mut entropy = 0.0;
                for r in 0..rows {
                    let row = q.row(r);
                    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let w: Vec<f64> = row.iter().map(|&v| ((v - m) / temp).exp()).collect();
                    let z: f64 = w.iter().sum();
                    entropy -= w.iter().map(|&x| x / z).filter(|&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>();
                    actions.push(sample_categorical(&w, rng));
                }
                entropy /= rows.max(1) as f64;
                let (lo, hi) = LOG_TEMPERATURE_RANGE;
                self.log_temperature =
                    (self.log_temperature + cfg.temperature_lr * (cfg.target_entropy - entropy)).clamp(lo, hi);
                Ok((actions, entropy))
            }
        }
    }
}

/// TD targets `r + γ (1 − done) max_a' Q_target(s', a')`.
pub fn td_targets(target: &Network, steps: usize, batch: &ReplayBatch, gamma: f64) -> Result<Vec<f64>> {
    let next = target.infer(&batch.next_obs, steps)?;
    let (rows, _) = next.dims2("td target")?;
    let mut y = Vec::with_capacity(rows);
    for r in 0..rows {
        let bootstrap = if batch.dones[r] {
            0.0
        } else {
            next.row(r).iter().copied().fold(f64::NEG_INFINITY, f64::max)
        };
        let v = if batch.dones[r] {
            batch.rewards[r]
        } else {
            batch.rewards[r] + gamma * bootstrap
        };
        if !v.is_finite() {
            return Err(TrainError::NonFinite {
                what: "td target".into(),
                detail: format!("row {r}: reward {} bootstrap {bootstrap}", batch.rewards[r]),
            });
        }
        y.push(v);
    }
    Ok(y)
}

/// One squared-error TD step on the online network, then a hard target
/// copy when the update count reaches a multiple of `target_update`.
pub fn dqn_update(batch: &ReplayBatch, agent: &mut DqnAgent, cfg: &DqnConfig) -> Result<DqnLosses> {
    let y = td_targets(&agent.target, agent.steps, batch, cfg.gamma)?;
    let n = y.len();
    let mut tape = Tape::new();
    let pv = agent.q.register(&mut tape);
    let x = tape.leaf(batch.obs.clone());
    let q = agent.q.forward(&mut tape, &pv, x, agent.steps)?;
    let q_sa = tape.gather(q, &batch.actions)?;
    let target = tape.leaf(Tensor::new(vec![n, 1], y.clone())?);
    let err = tape.sub(q_sa, target)?;
    let sq = tape.square(err)?;
    let loss = tape.mean(sq)?;
    let loss_value = tape.value(loss).data()[0];
    if !loss_value.is_finite() {
        return Err(TrainError::NonFinite {
            what: "dqn loss".into(),
            detail: format!("update {}", agent.updates),
        });
    }
    let mean_q = tape.value(q_sa).data().iter().sum::<f64>() / n as f64;
    let grads = tape.backward(loss)?;
    let mut g = agent.q.params().collect_grads(&pv, &grads);
    if let Some(c) = cfg.grad_clip {
        clip_global_norm(&mut g, c);
    }
    adam_step(agent.q.params_mut(), &g, &mut agent.opt)?;
    agent.updates += 1;
    let synced = agent.updates % cfg.target_update == 0;
    if synced {
        let online = agent.q.params().clone();
        agent.target.params_mut().load_from(&online)?;
    }
    Ok(DqnLosses {
        loss: loss_value,
        mean_q,
        mean_target: y.iter().sum::<f64>() / n as f64,
        synced,
    })
}
