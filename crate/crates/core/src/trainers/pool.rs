use rand_chacha::ChaCha8Rng;

use super::{Result, TrainError};
use crate::envs::{Env, EnvState, Episode, TaskDistribution};
use crate::ndcore::Tensor;
use crate::seeding::Seeds;

/// Summary of one finished episode.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeStat {
    pub env_index: usize,
    pub length: usize,
    /// Undiscounted return.
    pub ret: f64,
    pub solved: bool,
    pub depth: Option<usize>,
}

/// Result of stepping one pool member.
#[derive(Clone, Debug)]
pub struct PoolStep {
    pub reward: f64,
    pub done: bool,
    pub truncated: bool,
    /// Observation after the step, before any automatic reset.
    pub next_obs: Vec<f64>,
    pub prev_state: EnvState,
    pub next_state: EnvState,
    /// Present when the step ended the episode (the member was reset).
    pub finished: Option<EpisodeStat>,
}

/// A fixed set of environment instances that reset themselves with fresh
/// tasks from their own random stream whenever an episode ends.
#[derive(Debug)]
pub struct EnvPool {
    env: Env,
    dist: TaskDistribution,
    cap: usize,
    episodes: Vec<Episode>,
    rngs: Vec<ChaCha8Rng>,
    drawn: Vec<usize>,
    returns: Vec<f64>,
}

impl EnvPool {
    pub fn new(env: &Env, dist: TaskDistribution, size: usize, seeds: &Seeds) -> Result<Self> {
        Self::with_cap(env, dist, size, seeds, env.episode_cap())
    }

    pub fn with_cap(env: &Env, dist: TaskDistribution, size: usize, seeds: &Seeds, cap: usize) -> Result<Self> {
        if size == 0 {
            return Err(TrainError::Config("environment pool must be non-empty".into()));
        }
        if cap == 0 {
            return Err(TrainError::Config("episode cap must be positive".into()));
        }
        let mut pool = Self {
            env: env.clone(),
            dist,
            cap,
            episodes: Vec::with_capacity(size),
            rngs: (0..size).map(|i| seeds.stream("env", i as u64)).collect(),
            drawn: vec![0; size],
            returns: vec![0.0; size],
        };
        for i in 0..size {
            let ep = pool.fresh(i)?;
            pool.episodes.push(ep);
        }
        Ok(pool)
    }

    fn fresh(&mut self, i: usize) -> Result<Episode> {
        let task = self.dist.sample(&mut self.rngs[i], self.drawn[i]).map_err(|source| TrainError::EnvAt { index: i, source })?;
        self.drawn[i] += 1;
        Ok(Episode::new(&self.env, task)
            .map_err(|source| TrainError::EnvAt { index: i, source })?
            .with_cap(self.cap))
    }

    pub fn env(&self) -> &Env {
        &self.env
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn episode(&self, i: usize) -> &Episode {
        &self.episodes[i]
    }

    /// Current observations as a `[pool, obs_dim]` tensor.
    pub fn observe(&self) -> Tensor {
        let d = self.env.obs_dim();
        let mut data = Vec::with_capacity(self.len() * d);
        for ep in &self.episodes {
            data.extend(ep.observe());
        }
        Tensor::new(vec![self.len(), d], data).expect("pool observation shape")
    }

    /// Step every member with its action, resetting finished members.
    pub fn step(&mut self, actions: &[usize]) -> Result<Vec<PoolStep>> {
        if actions.len() != self.len() {
            return Err(TrainError::Config(format!(
                "{} actions for a pool of {}",
                actions.len(),
                self.len()
            )));
        }
        let mut out = Vec::with_capacity(self.len());
        for (i, &a) in actions.iter().enumerate() {
            let ep = &mut self.episodes[i];
            let prev_state = ep.state().clone();
            let o = ep.step(a).map_err(|source| TrainError::EnvAt { index: i, source })?;
            self.returns[i] += o.reward;
            let next_obs = ep.observe();
            let next_state = ep.state().clone();
            let finished = if o.done || o.truncated {
                let stat = EpisodeStat {
                    env_index: i,
                    length: ep.t(),
                    ret: self.returns[i],
                    solved: o.done,
                    depth: ep.task().depth(),
                };
                self.returns[i] = 0.0;
                self.episodes[i] = self.fresh(i)?;
                Some(stat)
            } else {
                None
            };
            out.push(PoolStep {
                reward: o.reward,
                done: o.done,
                truncated: o.truncated,
                next_obs,
                prev_state,
                next_state,
                finished,
            });
        }
        Ok(out)
    }
}
