use rand::seq::SliceRandom;
use rand::Rng;

use super::gae::gae_with_bootstrap;
use super::rollout::{ActorCritic, RolloutBatch};
use super::{Result, TrainError};
use crate::ndcore::{adam_step, clip_global_norm, AdamConfig, AdamState, ParamSet, Tape, Tensor, Var};
use crate::nets::{ArchConfig, Network};

#[derive(Clone, Debug, PartialEq)]
pub struct PpoConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub lr: f64,
    pub rollout_len: usize,
    pub epochs: usize,
    pub minibatches: usize,
    pub normalize_advantages: bool,
    pub pool: usize,
    pub grad_clip: Option<f64>,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip: 0.3,
            entropy_coef: 0.01,
            value_coef: 0.5,
            lr: 1e-4,
            rollout_len: 160,
            epochs: 8,
            minibatches: 32,
            normalize_advantages: true,
            pool: 64,
            grad_clip: None,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("ppo.gamma", self.gamma),
            ("ppo.gae_lambda", self.gae_lambda),
            ("ppo.lr", self.lr),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(TrainError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.gamma > 1.0 || self.gae_lambda > 1.0 {
            return Err(TrainError::Config("ppo.gamma and ppo.gae_lambda must be at most 1".into()));
        }
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return Err(TrainError::Config(format!("ppo.clip must lie in (0, 1), got {}", self.clip)));
        }
        if !(self.entropy_coef >= 0.0 && self.value_coef >= 0.0) {
            return Err(TrainError::Config("loss coefficients must be non-negative".into()));
        }
        for (name, v) in [
            ("ppo.rollout_len", self.rollout_len),
            ("ppo.epochs", self.epochs),
            ("ppo.minibatches", self.minibatches),
            ("ppo.pool", self.pool),
        ] {
            if v == 0 {
                return Err(TrainError::Config(format!("{name} must be positive")));
            }
        }
        if self.minibatches > self.rollout_len * self.pool {
            return Err(TrainError::Config("more minibatches than samples per update".into()));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return Err(TrainError::Config("optim.grad_clip must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Separate policy and value networks of the same architecture family,
/// with their optimizer state.
#[derive(Clone, Debug)]
pub struct PpoAgent {
    pub policy: Network,
    pub value: Network,
    pub steps: usize,
    policy_opt: AdamState,
    value_opt: AdamState,
}

impl PpoAgent {
    pub fn new(arch: &ArchConfig, lr: f64, policy_seed: u64, value_seed: u64) -> Result<Self> {
        let policy = Network::new(arch, policy_seed)?;
        let value = Network::new(&arch.clone().with_output(1), value_seed)?;
        Ok(Self::from_networks(policy, value, lr))
    }

    pub fn from_networks(policy: Network, value: Network, lr: f64) -> Self {
        let steps = policy.steps();
        Self {
            policy_opt: AdamState::new(policy.params(), AdamConfig::with_lr(lr)),
            value_opt: AdamState::new(value.params(), AdamConfig::with_lr(lr)),
            policy,
            value,
            steps,
        }
    }

    /// Parameters of both networks under `policy.` / `value.` prefixes.
    pub fn params(&self) -> ParamSet {
        let mut p = self.policy.params().prefixed("policy.");
        p.extend(self.value.params().prefixed("value."));
        p
    }

    pub fn load(&mut self, params: &ParamSet) -> Result<()> {
        self.policy.params_mut().load_from(&params.strip_prefix("policy."))?;
        self.value.params_mut().load_from(&params.strip_prefix("value."))?;
        Ok(())
    }
}

impl ActorCritic for PpoAgent {
    fn logits_and_values(&self, obs: &Tensor) -> Result<(Tensor, Vec<f64>)> {
        let logits = self.policy.infer(obs, self.steps)?;
        let values = self.value.infer(obs, self.steps)?.into_data();
        Ok((logits, values))
    }
}

/// One minibatch of PPO training data.
#[derive(Clone, Debug)]
pub struct Minibatch {
    pub obs: Tensor,
    pub actions: Vec<usize>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

/// Mean loss terms. `policy` is the negated clipped surrogate; `total`
/// adds `value_coef * value - entropy_coef * entropy`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PpoLosses {
    pub total: f64,
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

impl PpoLosses {
    fn accumulate(&mut self, other: &PpoLosses, weight: f64) {
        self.total += weight * other.total;
        self.policy += weight * other.policy;
        self.value += weight * other.value;
        self.entropy += weight * other.entropy;
        self.approx_kl += weight * other.approx_kl;
        self.clip_fraction += weight * other.clip_fraction;
    }
}

struct Graph {
    total: Var,
    losses: PpoLosses,
    policy_vars: Vec<Var>,
    value_vars: Vec<Var>,
}

fn column(values: &[f64]) -> Result<Tensor> {
    Ok(Tensor::new(vec![values.len(), 1], values.to_vec())?)
}

fn build(tape: &mut Tape, agent: &PpoAgent, mb: &Minibatch, cfg: &PpoConfig) -> Result<Graph> {
    let n = mb.actions.len();
    if [mb.old_log_probs.len(), mb.advantages.len(), mb.returns.len()].iter().any(|&l| l != n) || mb.obs.shape()[0] != n {
        return Err(TrainError::Config("minibatch fields have different lengths".into()));
    }
    let policy_vars = agent.policy.register(tape);
    let value_vars = agent.value.register(tape);
    let x = tape.leaf(mb.obs.clone());
    let logits = agent.policy.forward(tape, &policy_vars, x, agent.steps)?;
    let logp_all = tape.log_softmax(logits)?;
    let logp = tape.gather(logp_all, &mb.actions)?;
    let old = tape.leaf(column(&mb.old_log_probs)?);
    let adv = tape.leaf(column(&mb.advantages)?);
    let log_ratio = tape.sub(logp, old)?;
    let ratio = tape.exp(log_ratio)?;
    let unclipped = tape.mul(ratio, adv)?;
    let clipped_ratio = tape.clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip)?;
    let clipped = tape.mul(clipped_ratio, adv)?;
    let surrogate = tape.minimum(unclipped, clipped)?;
    let surrogate = tape.mean(surrogate)?;
    let policy_loss = tape.affine(surrogate, -1.0, 0.0)?;

    let probs = tape.exp(logp_all)?;
    let plogp = tape.mul(probs, logp_all)?;
    let neg_entropy = tape.sum_rows(plogp)?;
    let neg_entropy = tape.mean(neg_entropy)?;

    let v = agent.value.forward(tape, &value_vars, x, agent.steps)?;
    let ret = tape.leaf(column(&mb.returns)?);
    let err = tape.sub(v, ret)?;
    let sq = tape.square(err)?;
    let value_loss = tape.mean(sq)?;

    let weighted_value = tape.affine(value_loss, cfg.value_coef, 0.0)?;
    let weighted_entropy = tape.affine(neg_entropy, cfg.entropy_coef, 0.0)?;
    let total = tape.add(policy_loss, weighted_value)?;
    let total = tape.add(total, weighted_entropy)?;

    let ratios = tape.value(ratio).data();
    let lr = tape.value(log_ratio).data();
    let approx_kl = lr.iter().zip(ratios).map(|(l, r)| (r - 1.0) - l).sum::<f64>() / n as f64;
    let clip_fraction = ratios.iter().filter(|r| (*r - 1.0).abs() > cfg.clip).count() as f64 / n as f64;
    let item = |v: Var| tape.value(v).data()[0];
    let losses = PpoLosses {
        total: item(total),
        policy: item(policy_loss),
        value: item(value_loss),
        entropy: -item(neg_entropy),
        approx_kl,
        clip_fraction,
    };
    Ok(Graph {
        total,
        losses,
        policy_vars,
        value_vars,
    })
}

/// Loss terms of one minibatch without updating anything.
pub fn ppo_loss(agent: &PpoAgent, mb: &Minibatch, cfg: &PpoConfig) -> Result<PpoLosses> {
    let mut tape = Tape::new();
    Ok(build(&mut tape, agent, mb, cfg)?.losses)
}

/// Loss terms plus gradients of the total loss for the policy and the value
/// parameters (in registration order).
pub fn ppo_gradients(agent: &PpoAgent, mb: &Minibatch, cfg: &PpoConfig) -> Result<(PpoLosses, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let mut tape = Tape::new();
    let g = build(&mut tape, agent, mb, cfg)?;
    if !g.losses.total.is_finite() {
        return Err(TrainError::NonFinite {
            what: "ppo loss".into(),
            detail: format!("{:?}", g.losses),
        });
    }
    let grads = tape.backward(g.total)?;
    let pg = agent.policy.params().collect_grads(&g.policy_vars, &grads);
    let vg = agent.value.params().collect_grads(&g.value_vars, &grads);
    Ok((g.losses, pg, vg))
}

fn gather_minibatch(batch: &RolloutBatch, idx: &[usize], adv: &[f64], ret: &[f64]) -> Result<Minibatch> {
    let d = batch.obs_dim;
    let mut obs = Vec::with_capacity(idx.len() * d);
    for &i in idx {
        obs.extend_from_slice(batch.obs_row(i));
    }
    Ok(Minibatch {
        obs: Tensor::new(vec![idx.len(), d], obs)?,
        actions: idx.iter().map(|&i| batch.actions[i]).collect(),
        old_log_probs: idx.iter().map(|&i| batch.log_probs[i]).collect(),
        advantages: idx.iter().map(|&i| adv[i]).collect(),
        returns: idx.iter().map(|&i| ret[i]).collect(),
    })
}

/// Advantages and returns for every row of a batch (time-major layout).
pub(crate) fn batch_advantages(batch: &RolloutBatch, cfg: &PpoConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = batch.len();
    let (mut adv, mut ret) = (vec![0.0; n], vec![0.0; n]);
    let ends: Vec<bool> = batch.dones.iter().zip(&batch.truncated).map(|(d, t)| *d || *t).collect();
    for e in 0..batch.envs {
        let (a, r) = gae_with_bootstrap(
            &batch.column(&batch.rewards, e),
            &batch.column(&batch.values, e),
            &batch.column(&batch.next_values, e),
            &batch.column(&batch.dones, e),
            &batch.column(&ends, e),
            cfg.gamma,
            cfg.gae_lambda,
        )?;
        for t in 0..batch.steps {
            adv[t * batch.envs + e] = a[t];
            ret[t * batch.envs + e] = r[t];
        }
    }
    if cfg.normalize_advantages && n > 1 {
        let mean = adv.iter().sum::<f64>() / n as f64;
        let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n as f64;
        let scale = 1.0 / (var.sqrt() + 1e-8);
        for a in &mut adv {
            *a = (*a - mean) * scale;
        }
    }
    Ok((adv, ret))
}

/// One shuffled row order per epoch.
pub(crate) fn epoch_orders<R: Rng + ?Sized>(rows: usize, epochs: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..rows).collect();
    (0..epochs)
        .map(|_| {
            order.shuffle(rng);
            order.clone()
        })
        .collect()
}

/// `epochs × minibatches` clipped-surrogate passes over one rollout batch.
/// Returns loss terms averaged over all passes; aborts on a non-finite loss.
pub fn ppo_update<R: Rng + ?Sized>(batch: &RolloutBatch, agent: &mut PpoAgent, cfg: &PpoConfig, rng: &mut R) -> Result<PpoLosses> {
    let orders = epoch_orders(batch.len(), cfg.epochs, rng);
    ppo_update_with_orders(batch, agent, cfg, &orders)
}

pub(crate) fn ppo_update_with_orders(
    batch: &RolloutBatch,
    agent: &mut PpoAgent,
    cfg: &PpoConfig,
    orders: &[Vec<usize>],
) -> Result<PpoLosses> {
    cfg.validate()?;
    if batch.is_empty() {
        return Err(TrainError::Config("empty rollout batch".into()));
    }
    let (adv, ret) = batch_advantages(batch, cfg)?;
    let n = batch.len();
    let parts = cfg.minibatches.min(n);
    let mut mean = PpoLosses::default();
    let weight = 1.0 / (orders.len() * parts) as f64;
    for (epoch, order) in orders.iter().enumerate() {
        for m in 0..parts {
            let idx = &order[m * n / parts..(m + 1) * n / parts];
            let mb = gather_minibatch(batch, idx, &adv, &ret)?;
            let (losses, mut pg, mut vg) = ppo_gradients(agent, &mb, cfg).map_err(|e| match e {
                TrainError::NonFinite { what, detail } => TrainError::NonFinite {
                    what,
                    detail: format!("epoch {epoch} minibatch {m}: {detail}"),
                },
                e => e,
            })?;
            if let Some(c) = cfg.grad_clip {
                clip_global_norm(&mut pg, c);
                clip_global_norm(&mut vg, c);
            }
            adam_step(agent.policy.params_mut(), &pg, &mut agent.policy_opt)?;
            adam_step(agent.value.params_mut(), &vg, &mut agent.value_opt)?;
            mean.accumulate(&losses, weight);
        }
    }
    Ok(mean)
}
