use rand::Rng;
use sha2::{Digest, Sha256};

use super::policy::{log_softmax_row, sample_categorical};
use super::pool::{EnvPool, EpisodeStat};
use super::{Result, TrainError};
use crate::ndcore::Tensor;

/// A stochastic policy with a state-value estimate, evaluated on a batch.
pub trait ActorCritic {
    /// `(logits [batch, actions], values [batch])`.
    fn logits_and_values(&self, obs: &Tensor) -> Result<(Tensor, Vec<f64>)>;
}

/// Uniform logits and zero values over a fixed action count.
#[derive(Clone, Copy, Debug)]
pub struct UniformActorCritic {
    pub actions: usize,
}

impl ActorCritic for UniformActorCritic {
    fn logits_and_values(&self, obs: &Tensor) -> Result<(Tensor, Vec<f64>)> {
        let rows = obs.shape()[0];
        Ok((Tensor::zeros(&[rows, self.actions]), vec![0.0; rows]))
    }
}

/// `steps × envs` transitions in time-major order: row `t * envs + e` is
/// environment `e` at step `t`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RolloutBatch {
    pub steps: usize,
    pub envs: usize,
    pub obs_dim: usize,
    pub obs: Vec<f64>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    pub truncated: Vec<bool>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    /// Value of each step's successor state (0 after a terminal step).
    pub next_values: Vec<f64>,
    /// Episodes that ended during collection, in completion order.
    pub episodes: Vec<EpisodeStat>,
    /// Observations at which truncated steps were cut, keyed by row.
    pub cut_obs: Vec<(usize, Vec<f64>)>,
    /// Observations after the last step, `[envs, obs_dim]`.
    pub final_obs: Vec<f64>,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn obs_row(&self, i: usize) -> &[f64] {
        &self.obs[i * self.obs_dim..(i + 1) * self.obs_dim]
    }

    /// Column of per-step values for one environment, oldest first.
    pub fn column<T: Copy>(&self, data: &[T], env: usize) -> Vec<T> {
        (0..self.steps).map(|t| data[t * self.envs + env]).collect()
    }

    /// Digest of the experience content (observations, actions, rewards and
    /// episode flags), independent of the collecting policy's statistics.
    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update((self.steps as u64).to_le_bytes());
        h.update((self.envs as u64).to_le_bytes());
        for x in &self.obs {
            h.update(x.to_le_bytes());
        }
        for i in 0..self.len() {
            h.update((self.actions[i] as u64).to_le_bytes());
            h.update(self.rewards[i].to_le_bytes());
            h.update([self.dones[i] as u8, self.truncated[i] as u8]);
        }
        h.finalize().into()
    }
}

/// Run every pool member for `steps` steps, sampling actions from the
/// policy's softmax. Members reset automatically; steps cut by the cap are
/// flagged `truncated` and bootstrap from the value of the cut state.
pub fn collect_rollouts<R: Rng + ?Sized>(
    pool: &mut EnvPool,
    policy: &dyn ActorCritic,
    steps: usize,
    rng: &mut R,
) -> Result<RolloutBatch> {
    let envs = pool.len();
    let d = pool.env().obs_dim();
    let n = steps * envs;
    let mut b = RolloutBatch {
        steps,
        envs,
        obs_dim: d,
        obs: Vec::with_capacity(n * d),
        actions: Vec::with_capacity(n),
        rewards: Vec::with_capacity(n),
        dones: Vec::with_capacity(n),
        truncated: Vec::with_capacity(n),
        log_probs: Vec::with_capacity(n),
        values: Vec::with_capacity(n),
        next_values: vec![0.0; n],
        episodes: Vec::new(),
        cut_obs: Vec::new(),
        final_obs: Vec::new(),
    };
    let mut obs = pool.observe();
    for t in 0..steps {
        let (logits, values) = policy.logits_and_values(&obs)?;
        let (rows, k) = logits.dims2("rollout logits")?;
        if rows != envs || values.len() != envs {
            return Err(TrainError::Config(format!("policy returned {rows} rows for {envs} environments")));
        }
        let mut actions = Vec::with_capacity(envs);
        for e in 0..envs {
            let lp = log_softmax_row(&logits.data()[e * k..(e + 1) * k]);
            let probs: Vec<f64> = lp.iter().map(|l| l.exp()).collect();
            let a = sample_categorical(&probs, rng);
            actions.push(a);
            b.log_probs.push(lp[a]);
        }
        let results = pool.step(&actions)?;
        b.obs.extend_from_slice(obs.data());
        b.values.extend(values);
        b.actions.extend(&actions);
        let mut cut = Vec::new();
        for (e, r) in results.into_iter().enumerate() {
            b.rewards.push(r.reward);
            b.dones.push(r.done);
            b.truncated.push(r.truncated);
            if r.truncated {
                cut.push((t * envs + e, r.next_obs));
            }
            if let Some(stat) = r.finished {
                b.episodes.push(stat);
            }
        }
        if !cut.is_empty() {
            let data: Vec<f64> = cut.iter().flat_map(|(_, o)| o.iter().copied()).collect();
            let (_, v) = policy.logits_and_values(&Tensor::new(vec![cut.len(), d], data)?)?;
            for ((row, _), v) in cut.iter().zip(v) {
                b.next_values[*row] = v;
            }
            b.cut_obs.extend(cut);
        }
        obs = pool.observe();
    }
    let (_, last) = policy.logits_and_values(&obs)?;
    b.final_obs = obs.into_data();
    b.fill_next_values(&last);
    Ok(b)
}

impl RolloutBatch {
    fn fill_next_values(&mut self, last: &[f64]) {
        let n = self.len();
        for i in 0..n {
            if self.dones[i] || self.truncated[i] {
                continue;
            }
            self.next_values[i] = if i + self.envs < n {
                self.values[i + self.envs]
            } else {
                last[i - (n - self.envs)]
            };
        }
    }

    /// Recompute log-probabilities and values under another policy, keeping
    /// the experience itself. Used when a second learner trains on data it
    /// did not collect.
    pub fn revalue(&self, policy: &dyn ActorCritic) -> Result<RolloutBatch> {
        let mut b = self.clone();
        let n = b.len();
        let (logits, values) = policy.logits_and_values(&Tensor::new(vec![n, b.obs_dim], b.obs.clone())?)?;
        let (_, k) = logits.dims2("revalue logits")?;
        for i in 0..n {
            b.log_probs[i] = log_softmax_row(&logits.data()[i * k..(i + 1) * k])[b.actions[i]];
        }
        b.values = values;
        b.next_values = vec![0.0; n];
        if !b.cut_obs.is_empty() {
            let data: Vec<f64> = b.cut_obs.iter().flat_map(|(_, o)| o.iter().copied()).collect();
            let (_, v) = policy.logits_and_values(&Tensor::new(vec![b.cut_obs.len(), b.obs_dim], data)?)?;
            for ((row, _), v) in b.cut_obs.iter().zip(v) {
                b.next_values[*row] = v;
            }
        }
        let (_, last) = policy.logits_and_values(&Tensor::new(vec![b.envs, b.obs_dim], b.final_obs.clone())?)?;
        b.fill_next_values(&last);
        Ok(b)
    }
}
