use std::collections::BTreeMap;

use crate::envs::{Env, Episode, TaskDistribution};
use crate::metrics::MetricsRecord;
use crate::ndcore::Tensor;
use crate::nets::Network;
use crate::seeding::Seeds;
use crate::trainers::{GreedyNet, Policy, Result, TrainError};

#[derive(Clone, Debug, PartialEq)]
pub struct DepthStat {
    pub depth: usize,
    pub episodes: usize,
    pub successes: usize,
}

impl DepthStat {
    pub fn success_rate(&self) -> f64 {
        self.successes as f64 / self.episodes as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub distribution: String,
    pub episodes: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Mean steps per episode (capped episodes count the full cap).
    pub mean_length: f64,
    pub per_depth: Vec<DepthStat>,
    pub seed: u64,
}

impl EvalReport {
    /// Append this report's fields under `prefix` (e.g. `test_success`).
    pub fn extend_record(&self, record: &mut MetricsRecord, prefix: &str) {
        record.push(&format!("{prefix}_dist"), &self.distribution);
        record.push(&format!("{prefix}_episodes"), self.episodes);
        record.push(&format!("{prefix}_success"), self.success_rate);
        record.push(&format!("{prefix}_len"), self.mean_length);
        if !self.per_depth.is_empty() {
            let by_depth: Vec<String> = self
                .per_depth
                .iter()
                .map(|d| format!("{}:{}/{}", d.depth, d.successes, d.episodes))
                .collect();
            record.push(&format!("{prefix}_depths"), by_depth.join(","));
        }
    }

    pub fn to_record(&self) -> MetricsRecord {
        let mut r = MetricsRecord::new("eval-report");
        r.push("seed", self.seed);
        self.extend_record(&mut r, "eval");
        r
    }
}

/// Greedy evaluation of `episodes` tasks drawn from `dist` with the eval
/// stream of `seed`. All episodes advance in lockstep as one batch.
pub fn evaluate(policy: &dyn Policy, env: &Env, dist: &TaskDistribution, episodes: usize, seed: u64) -> Result<EvalReport> {
    if episodes == 0 {
        return Err(TrainError::Config("evaluation needs at least one episode".into()));
    }
    let mut rng = Seeds::new(seed).stream("eval", 0);
    let mut eps = (0..episodes)
        .map(|i| Ok(Episode::new(env, dist.sample(&mut rng, i)?)?))
        .collect::<Result<Vec<_>>>()?;
    let d = env.obs_dim();
    loop {
        let live: Vec<usize> = (0..eps.len()).filter(|&i| !eps[i].finished()).collect();
        if live.is_empty() {
            break;
        }
        let mut data = Vec::with_capacity(live.len() * d);
        for &i in &live {
            data.extend(eps[i].observe());
        }
        let actions = policy.act(&Tensor::new(vec![live.len(), d], data)?)?;
        for (&i, &a) in live.iter().zip(&actions) {
            eps[i].step(a).map_err(|source| TrainError::EnvAt { index: i, source })?;
        }
    }
    let mut depths: BTreeMap<usize, DepthStat> = BTreeMap::new();
    let mut successes = 0;
    let mut total_len = 0;
    for ep in &eps {
        let ok = ep.solved();
        successes += ok as usize;
        total_len += ep.t();
        if let Some(depth) = ep.task().depth() {
            let s = depths.entry(depth).or_insert(DepthStat {
                depth,
                episodes: 0,
                successes: 0,
            });
            s.episodes += 1;
            s.successes += ok as usize;
        }
    }
    Ok(EvalReport {
        distribution: dist.id(),
        episodes,
        successes,
        success_rate: successes as f64 / episodes as f64,
        mean_length: total_len as f64 / episodes as f64,
        per_depth: depths.into_values().collect(),
        seed,
    })
}

/// Evaluate a network greedily, optionally at a different step count than
/// the one it was built with. Parameters are only read.
pub fn evaluate_network(
    net: &Network,
    steps: Option<usize>,
    env: &Env,
    dist: &TaskDistribution,
    episodes: usize,
    seed: u64,
) -> Result<EvalReport> {
    let policy = GreedyNet::new(net, steps.unwrap_or(net.steps()));
    evaluate(&policy, env, dist, episodes, seed)
}
