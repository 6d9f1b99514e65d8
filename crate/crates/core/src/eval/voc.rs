use std::io::Write;
use std::path::Path;

use crate::envs::{Env, EnvState, TaskDistribution, TaskGoal};
use crate::ndcore::Tensor;
use crate::seeding::Seeds;
use crate::trainers::{Policy, Result};

/// A deterministic goal-reaching problem seen from one fixed goal.
pub trait DeterministicMdp {
    type State: Clone;
    fn observe(&self, s: &Self::State) -> Result<Vec<f64>>;
    fn is_goal(&self, s: &Self::State) -> Result<bool>;
    /// `(next, reward, reached_goal)`.
    fn step(&self, s: &Self::State, action: usize) -> Result<(Self::State, f64, bool)>;
    /// Maximum rollout length.
    fn horizon(&self) -> usize;
}

/// An environment with a fixed goal.
#[derive(Clone, Debug)]
pub struct GoalTask<'a> {
    pub env: &'a Env,
    pub goal: TaskGoal,
}

impl DeterministicMdp for GoalTask<'_> {
    type State = EnvState;

    fn observe(&self, s: &EnvState) -> Result<Vec<f64>> {
        Ok(self.env.encode(s, &self.goal)?)
    }

    fn is_goal(&self, s: &EnvState) -> Result<bool> {
        Ok(self.env.is_solved(s, &self.goal)?)
    }

    fn step(&self, s: &EnvState, action: usize) -> Result<(EnvState, f64, bool)> {
        Ok(self.env.step(s, action, &self.goal)?)
    }

    fn horizon(&self) -> usize {
        self.env.episode_cap()
    }
}

fn act_one<M: DeterministicMdp>(policy: &dyn Policy, mdp: &M, s: &M::State) -> Result<usize> {
    let obs = mdp.observe(s)?;
    let x = Tensor::new(vec![1, obs.len()], obs)?;
    Ok(policy.act(&x)?[0])
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ValueEstimate {
    pub value: f64,
    pub steps: usize,
    pub reached: bool,
    /// The rollout hit the horizon without reaching the goal.
    pub truncated: bool,
}

/// Discounted return of one greedy rollout from `s0` (exact for a
/// deterministic policy and environment).
pub fn estimate_value<M: DeterministicMdp>(policy: &dyn Policy, mdp: &M, s0: &M::State, gamma: f64) -> Result<ValueEstimate> {
    let mut s = s0.clone();
    let (mut value, mut discount) = (0.0, 1.0);
    if mdp.is_goal(&s)? {
        return Ok(ValueEstimate {
            value,
            steps: 0,
            reached: true,
            truncated: false,
        });
    }
    for t in 0..mdp.horizon() {
        let a = act_one(policy, mdp, &s)?;
        let (next, r, done) = mdp.step(&s, a)?;
        value += discount * r;
        discount *= gamma;
        s = next;
        if done {
            return Ok(ValueEstimate {
                value,
                steps: t + 1,
                reached: true,
                truncated: false,
            });
        }
    }
    Ok(ValueEstimate {
        value,
        steps: mdp.horizon(),
        reached: false,
        truncated: true,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VocEstimate {
    pub value: f64,
    /// `π_t2` reached the goal before taking `n` steps; the sum was
    /// truncated there and the tail value taken as zero.
    pub terminated_early: bool,
    /// Some value rollout of `π_t1` hit the horizon.
    pub value_truncated: bool,
}

/// `v1(s0) − (Σ_{k=1..n} γ^{k−1} r_k + γ^n v1(s_n))` where `r_k`, `s_n`
/// come from following `pi_t2` for `n` steps and `v1` is the greedy-rollout
/// value of `pi_t1`.
pub fn value_of_compute<M: DeterministicMdp>(
    pi_t1: &dyn Policy,
    pi_t2: &dyn Policy,
    mdp: &M,
    s0: &M::State,
    n: usize,
    gamma: f64,
) -> Result<VocEstimate> {
    let head = estimate_value(pi_t1, mdp, s0, gamma)?;
    let mut s = s0.clone();
    let (mut sum, mut discount) = (0.0, 1.0);
    let mut terminated_early = false;
    let mut reached = mdp.is_goal(&s)?;
    for _ in 0..n {
        if reached {
            terminated_early = true;
            break;
        }
        let a = act_one(pi_t2, mdp, &s)?;
        let (next, r, done) = mdp.step(&s, a)?;
        sum += discount * r;
        discount *= gamma;
        s = next;
        reached = done;
    }
    let (tail, tail_truncated) = if reached {
        (0.0, false)
    } else {
        let v = estimate_value(pi_t1, mdp, &s, gamma)?;
        (discount * v.value, v.truncated)
    };
    Ok(VocEstimate {
        value: head.value - (sum + tail),
        terminated_early,
        value_truncated: head.truncated || tail_truncated,
    })
}

/// VoC along one successful `π_t1` trajectory: `values[t][j]` is
/// `VoC_{ns[j]}(s_t)` for every non-terminal state `s_t`.
#[derive(Clone, Debug, PartialEq)]
pub struct VocCurve {
    pub trajectory: usize,
    pub t1: usize,
    pub t2: usize,
    pub gamma: f64,
    pub ns: Vec<usize>,
    pub values: Vec<Vec<f64>>,
    /// Number of entries where `π_t2` finished before `n` steps.
    pub terminated_early: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VocSummary {
    pub curves: Vec<VocCurve>,
    /// Sampled trajectories on which `π_t1` failed (not curved).
    pub excluded: usize,
}

/// Sample `trajectories` tasks; along each trajectory where the higher-
/// compute policy `pi_t1` succeeds, compute VoC for every `n` in `ns`.
#[allow(clippy::too_many_arguments)]
pub fn voc_curves(
    pi_t1: (&dyn Policy, usize),
    pi_t2: (&dyn Policy, usize),
    env: &Env,
    dist: &TaskDistribution,
    trajectories: usize,
    ns: &[usize],
    gamma: f64,
    seed: u64,
) -> Result<VocSummary> {
    let mut rng = Seeds::new(seed).stream("voc", 0);
    let mut curves = Vec::new();
    let mut excluded = 0;
    for i in 0..trajectories {
        let task = dist.sample(&mut rng, i)?;
        let mdp = GoalTask { env, goal: task.goal };
        let mut states = vec![task.start.clone()];
        let mut s = task.start;
        let mut ok = mdp.is_goal(&s)?;
        while !ok && states.len() <= mdp.horizon() {
            let a = act_one(pi_t1.0, &mdp, &s)?;
            let (next, _, done) = mdp.step(&s, a)?;
            s = next;
            ok = done;
            states.push(s.clone());
        }
        if !ok {
            excluded += 1;
            continue;
        }
        states.pop();
        let mut values = Vec::with_capacity(states.len());
        let mut early = 0;
        for st in &states {
            let mut row = Vec::with_capacity(ns.len());
            for &n in ns {
                let v = value_of_compute(pi_t1.0, pi_t2.0, &mdp, st, n, gamma)?;
                early += v.terminated_early as usize;
                row.push(v.value);
            }
            values.push(row);
        }
        curves.push(VocCurve {
            trajectory: i,
            t1: pi_t1.1,
            t2: pi_t2.1,
            gamma,
            ns: ns.to_vec(),
            values,
            terminated_early: early,
        });
    }
    Ok(VocSummary { curves, excluded })
}

/// Tab-separated `trajectory t n value` rows with a header line.
pub fn write_voc_table(path: &Path, curves: &[VocCurve]) -> Result<()> {
    let mut out = String::from("trajectory\tt\tn\tvalue\n");
    for c in curves {
        for (t, row) in c.values.iter().enumerate() {
            for (n, v) in c.ns.iter().zip(row) {
                out.push_str(&format!("{}\t{t}\t{n}\t{v}\n", c.trajectory));
            }
        }
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

