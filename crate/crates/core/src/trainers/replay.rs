use rand::Rng;
use sha2::{Digest, Sha256};

use super::{Result, TrainError};
use crate::ndcore::Tensor;

/// One environment step. Observations already contain the goal encoding
/// (goal-conditioned inputs), so the goal is carried inside `obs`.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub done: bool,
    pub truncated: bool,
}

/// Fixed-capacity ring of transitions stored column-wise. Observations are
/// held in single precision; pushing a value that does not round-trip
/// exactly through `f32` is rejected, so sampling returns exactly what was
/// stored.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    min_size: usize,
    obs_dim: usize,
    obs: Vec<f32>,
    next_obs: Vec<f32>,
    actions: Vec<usize>,
    rewards: Vec<f64>,
    dones: Vec<bool>,
    stamps: Vec<u64>,
    inserted: u64,
}

/// A sampled minibatch; `stamps` are the insertion indices of the rows.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplayBatch {
    pub obs: Tensor,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub next_obs: Tensor,
    pub dones: Vec<bool>,
    pub stamps: Vec<u64>,
}

impl ReplayBatch {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for x in self.obs.data().iter().chain(self.next_obs.data()).chain(&self.rewards) {
            h.update(x.to_le_bytes());
        }
        for (a, d) in self.actions.iter().zip(&self.dones) {
            h.update((*a as u64).to_le_bytes());
            h.update([*d as u8]);
        }
        h.finalize().into()
    }
}

impl ReplayBuffer {
    pub fn new(capacity: usize, min_size: usize, obs_dim: usize) -> Result<Self> {
        if capacity == 0 || min_size == 0 || min_size > capacity {
            return Err(TrainError::Config(format!(
                "replay needs 0 < min size ({min_size}) <= capacity ({capacity})"
            )));
        }
        Ok(Self {
            capacity,
            min_size,
            obs_dim,
            obs: Vec::new(),
            next_obs: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            dones: Vec::new(),
            stamps: Vec::new(),
            inserted: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Total insertions ever made.
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn is_warm(&self) -> bool {
        self.len() >= self.min_size
    }

    pub fn push(&mut self, t: &Transition) -> Result<()> {
        if t.obs.len() != self.obs_dim || t.next_obs.len() != self.obs_dim {
            return Err(TrainError::Config(format!(
                "transition width {} / {} does not match buffer width {}",
                t.obs.len(),
                t.next_obs.len(),
                self.obs_dim
            )));
        }
        if t.done && t.truncated {
            return Err(TrainError::Config("transition both terminated and truncated".into()));
        }
        let narrow = |v: &[f64]| -> Result<Vec<f32>> {
            v.iter()
                .map(|&x| {
                    let y = x as f32;
                    if f64::from(y) == x {
                        Ok(y)
                    } else {
                        Err(TrainError::Config(format!("observation value {x} is not exactly representable in the replay store")))
                    }
                })
                .collect()
        };
        let (obs, next_obs) = (narrow(&t.obs)?, narrow(&t.next_obs)?);
        let d = self.obs_dim;
        if self.len() < self.capacity {
            self.obs.extend_from_slice(&obs);
            self.next_obs.extend_from_slice(&next_obs);
            self.actions.push(t.action);
            self.rewards.push(t.reward);
            self.dones.push(t.done);
            self.stamps.push(self.inserted);
        } else {
            let slot = (self.inserted % self.capacity as u64) as usize;
            self.obs[slot * d..(slot + 1) * d].copy_from_slice(&obs);
            self.next_obs[slot * d..(slot + 1) * d].copy_from_slice(&next_obs);
            self.actions[slot] = t.action;
            self.rewards[slot] = t.reward;
            self.dones[slot] = t.done;
            self.stamps[slot] = self.inserted;
        }
        self.inserted += 1;
        Ok(())
    }

    /// Uniform sample with replacement; requires the warm-up size.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<ReplayBatch> {
        if !self.is_warm() {
            return Err(TrainError::ReplayCold {
                len: self.len(),
                min: self.min_size,
            });
        }
        let d = self.obs_dim;
        let idx: Vec<usize> = (0..batch).map(|_| rng.gen_range(0..self.len())).collect();
        let mut obs = Vec::with_capacity(batch * d);
        let mut next = Vec::with_capacity(batch * d);
        for &i in &idx {
            obs.extend(self.obs[i * d..(i + 1) * d].iter().map(|&x| f64::from(x)));
            next.extend(self.next_obs[i * d..(i + 1) * d].iter().map(|&x| f64::from(x)));
        }
        Ok(ReplayBatch {
            obs: Tensor::new(vec![batch, d], obs)?,
            actions: idx.iter().map(|&i| self.actions[i]).collect(),
            rewards: idx.iter().map(|&i| self.rewards[i]).collect(),
            next_obs: Tensor::new(vec![batch, d], next)?,
            dones: idx.iter().map(|&i| self.dones[i]).collect(),
            stamps: idx.iter().map(|&i| self.stamps[i]).collect(),
        })
    }
}
