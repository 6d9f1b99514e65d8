use std::path::{Path, PathBuf};
use std::time::Instant;

use sha2::{Digest, Sha256};

use super::dqn::{dqn_update, DqnAgent, DqnLosses, Relabel};
use super::pool::{EnvPool, EpisodeStat};
use super::ppo::{epoch_orders, ppo_update_with_orders, PpoAgent, PpoLosses};
use super::replay::{ReplayBuffer, Transition};
use super::rollout::collect_rollouts;
use super::{GreedyNet, Result, TrainError};
use crate::config::{Algo, ExperimentConfig};
use crate::envs::{Env, EnvState, TaskDistribution};
use crate::eval::{evaluate, EvalReport};
use crate::metrics::{MetricsRecord, MetricsWriter};
use crate::ndcore::{write_checkpoint, ParamSet};
use crate::nets::Network;
use crate::seeding::Seeds;

pub const METRICS_FILE: &str = "metrics.txt";
pub const CHECKPOINT_FILE: &str = "checkpoint.rdck";
pub const CONFIG_FILE: &str = "config.txt";

/// A trained (or training) agent of either algorithm.
#[derive(Clone, Debug)]
pub enum Agent {
    Ppo(PpoAgent),
    Dqn(DqnAgent),
}

impl Agent {
    /// Fresh agent for a validated config, initialized from its seed.
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let arch = cfg.arch().map_err(|e| TrainError::Config(e.to_string()))?;
        let seeds = Seeds::new(cfg.seed);
        Ok(match cfg.algo {
            Algo::Ppo => Agent::Ppo(PpoAgent::new(&arch, cfg.ppo.lr, seeds.derive("init", 0), seeds.derive("init", 1))?),
            Algo::Dqn => Agent::Dqn(DqnAgent::new(&arch, cfg.dqn.lr, seeds.derive("init", 0))?),
        })
    }

    /// Agent for `cfg` with parameters restored from a checkpoint.
    pub fn from_params(cfg: &ExperimentConfig, params: &ParamSet) -> Result<Self> {
        let mut agent = Self::new(cfg)?;
        match &mut agent {
            Agent::Ppo(a) => a.load(params)?,
            Agent::Dqn(a) => a.load(params)?,
        }
        Ok(agent)
    }

    /// The network that picks actions (policy or online Q-network).
    pub fn network(&self) -> &Network {
        match self {
            Agent::Ppo(a) => &a.policy,
            Agent::Dqn(a) => &a.q,
        }
    }

    pub fn steps(&self) -> usize {
        match self {
            Agent::Ppo(a) => a.steps,
            Agent::Dqn(a) => a.steps,
        }
    }

    pub fn params(&self) -> ParamSet {
        match self {
            Agent::Ppo(a) => a.params(),
            Agent::Dqn(a) => a.params(),
        }
    }

    pub fn greedy(&self) -> GreedyNet<'_> {
        GreedyNet::new(self.network(), self.steps())
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub run_id: String,
    pub agent: Agent,
    pub records: Vec<MetricsRecord>,
    pub env_steps: u64,
    pub updates: u64,
    /// Number of training batches consumed and a running SHA-256 over them.
    pub batches: u64,
    pub batch_stream: String,
    pub final_train: EvalReport,
    pub final_test: EvalReport,
}

/// Train one agent per config. The first config's agent collects all
/// experience; every further agent consumes exactly the same batches in the
/// same order. Each agent writes its own metrics and checkpoints to its
/// output directory (if given).
pub fn train_group(cfgs: &[ExperimentConfig], outs: &[Option<PathBuf>]) -> Result<Vec<TrainOutcome>> {
    let active = cfgs.first().ok_or_else(|| TrainError::Config("no configuration given".into()))?;
    if outs.len() != cfgs.len() {
        return Err(TrainError::Config("one output slot per configuration".into()));
    }
    for c in cfgs {
        c.validate().map_err(|e| TrainError::Config(e.to_string()))?;
        let same = c.env == active.env
            && c.algo == active.algo
            && c.arch_kind == active.arch_kind
            && c.arch_hidden == active.arch_hidden
            && c.arch_layers == active.arch_layers
            && c.arch_blocks == active.arch_blocks;
        if !same {
            return Err(TrainError::Config(
                "grouped learners must share env, algorithm and architecture family".into(),
            ));
        }
    }
    let ctx = Context::new(active)?;
    let mut learners = cfgs
        .iter()
        .zip(outs)
        .map(|(c, o)| Learner::new(c, o.as_deref()))
        .collect::<Result<Vec<_>>>()?;
    match active.algo {
        Algo::Ppo => run_ppo(&ctx, active, &mut learners)?,
        Algo::Dqn => run_dqn(&ctx, active, &mut learners)?,
    }
    learners.into_iter().map(Learner::finish).collect()
}

/// Train the agent described by `cfg`; with `out`, write `metrics.txt`,
/// `config.txt` and `checkpoint.rdck` there.
pub fn train(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<TrainOutcome> {
    let mut v = train_group(std::slice::from_ref(cfg), &[out.map(Path::to_path_buf)])?;
    Ok(v.remove(0))
}

struct Context {
    env: Env,
    train_dist: TaskDistribution,
    test_dist: TaskDistribution,
    seeds: Seeds,
    budget: u64,
    eval_every: u64,
    eval_episodes: usize,
    checkpoint_every: u64,
}

impl Context {
    fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let err = |e: crate::config::ConfigError| TrainError::Config(e.to_string());
        Ok(Self {
            env: cfg.env().map_err(err)?,
            train_dist: cfg.train_distribution().map_err(err)?,
            test_dist: cfg.test_distribution().map_err(err)?,
            seeds: Seeds::new(cfg.seed),
            budget: cfg.budget_env_steps,
            eval_every: cfg.eval_every,
            eval_episodes: cfg.eval_episodes,
            checkpoint_every: cfg.checkpoint_every,
        })
    }
}

struct Learner {
    run_id: String,
    hash: String,
    seed: u64,
    wall_clock: bool,
    agent: Agent,
    writer: MetricsWriter,
    out: Option<PathBuf>,
    stream: Sha256,
    batches: u64,
    started: Instant,
    last_eval: Option<(u64, EvalReport, EvalReport)>,
    env_steps: u64,
    updates: u64,
}

impl Learner {
    fn new(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<Self> {
        let writer = match out {
            Some(dir) => {
                std::fs::create_dir_all(dir)?;
                std::fs::write(dir.join(CONFIG_FILE), cfg.to_text())?;
                let metrics = dir.join(METRICS_FILE);
                if metrics.exists() {
                    std::fs::remove_file(&metrics)?;
                }
                MetricsWriter::append_to(&metrics)?
            }
            None => MetricsWriter::in_memory(),
        };
        Ok(Self {
            run_id: cfg.run_id(),
            hash: cfg.hash(),
            seed: cfg.seed,
            wall_clock: cfg.wall_clock,
            agent: Agent::new(cfg)?,
            writer,
            out: out.map(Path::to_path_buf),
            stream: Sha256::new(),
            batches: 0,
            started: Instant::now(),
            last_eval: None,
            env_steps: 0,
            updates: 0,
        })
    }

    fn record(&self, kind: &str) -> MetricsRecord {
        let mut r = MetricsRecord::new(kind)
            .with("run", &self.run_id)
            .with("seed", self.seed)
            .with("config", &self.hash)
            .with("env_steps", self.env_steps)
            .with("updates", self.updates)
            .with("recurrent_steps", self.agent.steps());
        if self.wall_clock {
            r.push("elapsed_s", format!("{:.3}", self.started.elapsed().as_secs_f64()));
        }
        r
    }

    fn emit(&mut self, r: MetricsRecord) -> Result<()> {
        Ok(self.writer.write(r)?)
    }

    fn evaluate(&mut self, ctx: &Context) -> Result<()> {
        let policy = self.agent.greedy();
        let train = evaluate(&policy, &ctx.env, &ctx.train_dist, ctx.eval_episodes, ctx.seeds.derive("eval", 0))?;
        let test = evaluate(&policy, &ctx.env, &ctx.test_dist, ctx.eval_episodes, ctx.seeds.derive("eval", 1))?;
        let mut r = self.record("eval");
        train.extend_record(&mut r, "train");
        test.extend_record(&mut r, "test");
        self.emit(r)?;
        self.last_eval = Some((self.env_steps, train, test));
        Ok(())
    }

    fn checkpoint(&self) -> Result<()> {
        if let Some(dir) = &self.out {
            write_checkpoint(&dir.join(CHECKPOINT_FILE), &self.agent.params())?;
        }
        Ok(())
    }

    fn consume(&mut self, digest: &[u8]) {
        self.stream.update(digest);
        self.batches += 1;
    }

    fn finish(self) -> Result<TrainOutcome> {
        let (_, final_train, final_test) = self.last_eval.ok_or_else(|| TrainError::Config("run never evaluated".into()))?;
        Ok(TrainOutcome {
            run_id: self.run_id,
            agent: self.agent,
            records: self.writer.into_records(),
            env_steps: self.env_steps,
            updates: self.updates,
            batches: self.batches,
            batch_stream: hex::encode(self.stream.finalize()),
            final_train,
            final_test,
        })
    }
}

fn episode_fields(r: &mut MetricsRecord, episodes: &[EpisodeStat]) {
    r.push("episodes", episodes.len());
    if !episodes.is_empty() {
        let n = episodes.len() as f64;
        r.push("episode_success", episodes.iter().filter(|e| e.solved).count() as f64 / n);
        r.push("episode_len", episodes.iter().map(|e| e.length as f64).sum::<f64>() / n);
    }
}

/// Shared schedule: evaluation at start, every `eval_every` env steps and
/// at the end; checkpoints every `checkpoint_every` updates and at the end.
struct Schedule {
    next_eval: u64,
}

impl Schedule {
    fn start(ctx: &Context, learners: &mut [Learner]) -> Result<Self> {
        for l in learners.iter_mut() {
            l.evaluate(ctx)?;
        }
        Ok(Self {
            next_eval: ctx.eval_every,
        })
    }

    fn after_update(&mut self, ctx: &Context, learners: &mut [Learner], env_steps: u64, updates: u64) -> Result<()> {
        for l in learners.iter_mut() {
            l.env_steps = env_steps;
            l.updates = updates;
        }
        if ctx.eval_every > 0 && env_steps >= self.next_eval {
            while self.next_eval <= env_steps {
                self.next_eval += ctx.eval_every;
            }
            for l in learners.iter_mut() {
                l.evaluate(ctx)?;
            }
        }
        if ctx.checkpoint_every > 0 && updates > 0 && updates % ctx.checkpoint_every == 0 {
            for l in learners.iter() {
                l.checkpoint()?;
            }
        }
        Ok(())
    }

    fn finish(&self, ctx: &Context, learners: &mut [Learner]) -> Result<()> {
        for l in learners.iter_mut() {
            if l.last_eval.as_ref().map(|e| e.0) != Some(l.env_steps) {
                l.evaluate(ctx)?;
            }
            l.checkpoint()?;
        }
        Ok(())
    }
}

fn ppo_record(l: &Learner, losses: &PpoLosses, episodes: &[EpisodeStat]) -> MetricsRecord {
    let mut r = l.record("update");
    r.push("loss", losses.total);
    r.push("policy_loss", losses.policy);
    r.push("value_loss", losses.value);
    r.push("entropy", losses.entropy);
    r.push("approx_kl", losses.approx_kl);
    r.push("clip_frac", losses.clip_fraction);
    episode_fields(&mut r, episodes);
    r
}

fn run_ppo(ctx: &Context, active: &ExperimentConfig, learners: &mut [Learner]) -> Result<()> {
    let cfg = &active.ppo;
    let mut pool = EnvPool::new(&ctx.env, ctx.train_dist.clone(), cfg.pool, &ctx.seeds)?;
    let mut action_rng = ctx.seeds.stream("actions", 0);
    let mut sample_rng = ctx.seeds.stream("minibatches", 0);
    let batch_size = (cfg.rollout_len * cfg.pool) as u64;
    let mut sched = Schedule::start(ctx, learners)?;
    let (mut env_steps, mut updates) = (0u64, 0u64);
    while env_steps + batch_size <= ctx.budget {
        let batch = {
            let Agent::Ppo(collector) = &learners[0].agent else { unreachable!("validated algorithm") };
            collect_rollouts(&mut pool, collector, cfg.rollout_len, &mut action_rng)?
        };
        env_steps += batch_size;
        updates += 1;
        let orders = epoch_orders(batch.len(), cfg.epochs, &mut sample_rng);
        let mut digest = Sha256::new();
        digest.update(batch.digest());
        for o in &orders {
            for &i in o {
                digest.update((i as u64).to_le_bytes());
            }
        }
        let digest = digest.finalize();
        for (j, l) in learners.iter_mut().enumerate() {
            let Agent::Ppo(agent) = &mut l.agent else { unreachable!("validated algorithm") };
            let losses = if j == 0 {
                ppo_update_with_orders(&batch, agent, cfg, &orders)?
            } else {
                let own = batch.revalue(agent)?;
                ppo_update_with_orders(&own, agent, cfg, &orders)?
            };
            l.consume(&digest);
            l.env_steps = env_steps;
            l.updates = updates;
            let r = ppo_record(l, &losses, &batch.episodes);
            l.emit(r)?;
        }
        sched.after_update(ctx, learners, env_steps, updates)?;
    }
    sched.finish(ctx, learners)
}

#[derive(Default)]
struct DqnAccum {
    count: u64,
    loss: f64,
    mean_q: f64,
    mean_target: f64,
    entropy: f64,
    entropy_count: u64,
    episodes: Vec<EpisodeStat>,
}

impl DqnAccum {
    fn add(&mut self, l: &DqnLosses) {
        self.count += 1;
        self.loss += l.loss;
        self.mean_q += l.mean_q;
        self.mean_target += l.mean_target;
    }
}

/// Transitions of one episode relabeled with the goal its final state
/// achieves, up to the first step that reaches that goal.
fn relabel_final(env: &Env, trace: &[(EnvState, usize, EnvState)]) -> Result<Vec<Transition>> {
    let Some(goal) = trace.last().and_then(|(_, _, last)| env.goal_of(last)) else {
        return Ok(Vec::new());
    };
    let mut out = Vec::new();
    for (prev, a, _) in trace {
        if env.is_solved(prev, &goal)? {
            break;
        }
        let (next, reward, done) = env.step(prev, *a, &goal)?;
        out.push(Transition {
            obs: env.encode(prev, &goal)?,
            action: *a,
            reward,
            next_obs: env.encode(&next, &goal)?,
            done,
            truncated: false,
        });
        if done {
            break;
        }
    }
    Ok(out)
}

fn run_dqn(ctx: &Context, active: &ExperimentConfig, learners: &mut [Learner]) -> Result<()> {
    let cfg = &active.dqn;
    let mut pool = EnvPool::with_cap(&ctx.env, ctx.train_dist.clone(), cfg.pool, &ctx.seeds, cfg.episode_length)?;
    let mut replay = ReplayBuffer::new(cfg.replay_capacity(), cfg.min_replay, ctx.env.obs_dim())?;
    let mut explore_rng = ctx.seeds.stream("actions", 0);
    let mut sample_rng = ctx.seeds.stream("replay", 0);
    let mut traces: Vec<Vec<(EnvState, usize, EnvState)>> = vec![Vec::new(); cfg.pool];
    let mut accum: Vec<DqnAccum> = learners.iter().map(|_| DqnAccum::default()).collect();
    let mut sched = Schedule::start(ctx, learners)?;
    let (mut env_steps, mut updates) = (0u64, 0u64);
    let d = ctx.env.obs_dim();
    while env_steps + cfg.pool as u64 <= ctx.budget {
        let obs = pool.observe();
        let (actions, entropy) = {
            let Agent::Dqn(collector) = &mut learners[0].agent else { unreachable!("validated algorithm") };
            collector.explore(&obs, cfg, &mut explore_rng)?
        };
        let steps = pool.step(&actions)?;
        env_steps += cfg.pool as u64;
        for (e, s) in steps.into_iter().enumerate() {
            replay.push(&Transition {
                obs: obs.data()[e * d..(e + 1) * d].to_vec(),
                action: actions[e],
                reward: s.reward,
                next_obs: s.next_obs,
                done: s.done,
                truncated: s.truncated,
            })?;
            if cfg.relabel == Relabel::FinalState {
                traces[e].push((s.prev_state, actions[e], s.next_state));
            }
            if let Some(stat) = s.finished {
                if cfg.relabel == Relabel::FinalState && !stat.solved {
                    for t in relabel_final(&ctx.env, &traces[e])? {
                        replay.push(&t)?;
                    }
                }
                traces[e].clear();
                for a in accum.iter_mut() {
                    a.episodes.push(stat.clone());
                }
            }
        }
        if entropy.is_finite() {
            for a in accum.iter_mut() {
                a.entropy += entropy;
                a.entropy_count += 1;
            }
        }
        if !replay.is_warm() {
            for l in learners.iter_mut() {
                l.env_steps = env_steps;
            }
            continue;
        }
        for _ in 0..cfg.updates_per_step {
            let batch = replay.sample(cfg.batch, &mut sample_rng)?;
            let digest = batch.digest();
            updates += 1;
            for (j, l) in learners.iter_mut().enumerate() {
                let Agent::Dqn(agent) = &mut l.agent else { unreachable!("validated algorithm") };
                let losses = dqn_update(&batch, agent, cfg)?;
                accum[j].add(&losses);
                l.consume(&digest);
                l.env_steps = env_steps;
                l.updates = updates;
                if losses.synced {
                    let a = std::mem::take(&mut accum[j]);
                    let mut r = l.record("update");
                    let n = a.count.max(1) as f64;
                    r.push("loss", a.loss / n);
                    r.push("mean_q", a.mean_q / n);
                    r.push("mean_target", a.mean_target / n);
                    if a.entropy_count > 0 {
                        r.push("behaviour_entropy", a.entropy / a.entropy_count as f64);
                    }
                    r.push("replay", replay.len());
                    episode_fields(&mut r, &a.episodes);
                    l.emit(r)?;
                }
            }
            sched.after_update(ctx, learners, env_steps, updates)?;
        }
    }
    for l in learners.iter_mut() {
        l.env_steps = env_steps;
        l.updates = updates;
    }
    sched.finish(ctx, learners)
}
