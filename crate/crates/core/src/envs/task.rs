use std::fmt;

use rand::Rng;

use super::{
    Anchor, Boxpick, BoxpickMode, BoxpickState, EnvError, LightsOut, LightsOutState, Result, Split,
    BOXPICK_EPISODE_CAP, BOXPICK_SIZE, LIGHTSOUT_EPISODE_CAP,
};

/// Environment dynamics, identified by strings such as `lightsout-3x3`,
/// `boxpick-exact-4` or `boxpick-gen-4-1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Env {
    LightsOut(LightsOut),
    Boxpick { env: Boxpick, mode: BoxpickMode },
}

impl Env {
    pub fn parse(id: &str) -> Result<Self> {
        if let Some(dims) = id.strip_prefix("lightsout-") {
            let (r, c) = dims
                .split_once('x')
                .and_then(|(r, c)| Some((r.parse().ok()?, c.parse().ok()?)))
                .ok_or_else(|| EnvError::UnknownEnv(id.to_string()))?;
            return Ok(Env::LightsOut(LightsOut::new(r, c)?));
        }
        if let Some(mode) = id.strip_prefix("boxpick-") {
            return Ok(Env::Boxpick {
                env: Boxpick::new(BOXPICK_SIZE)?,
                mode: mode.parse()?,
            });
        }
        Err(EnvError::UnknownEnv(id.to_string()))
    }

    pub fn id(&self) -> String {
        match self {
            Env::LightsOut(e) => e.to_string(),
            Env::Boxpick { mode, .. } => format!("boxpick-{mode}"),
        }
    }

    pub fn n_actions(&self) -> usize {
        match self {
            Env::LightsOut(e) => e.n_actions(),
            Env::Boxpick { env, .. } => env.n_actions(),
        }
    }

    pub fn obs_dim(&self) -> usize {
        match self {
            Env::LightsOut(e) => e.obs_dim(),
            Env::Boxpick { env, .. } => env.obs_dim(),
        }
    }

    pub fn episode_cap(&self) -> usize {
        match self {
            Env::LightsOut(_) => LIGHTSOUT_EPISODE_CAP,
            Env::Boxpick { .. } => BOXPICK_EPISODE_CAP,
        }
    }

    pub fn encode(&self, state: &EnvState, goal: &TaskGoal) -> Result<Vec<f64>> {
        match (self, state, goal) {
            (Env::LightsOut(e), EnvState::LightsOut(s), TaskGoal::LightsOut(g)) => Ok(e.encode(*s, *g)),
            (Env::Boxpick { env, .. }, EnvState::Boxpick(s), TaskGoal::Boxpick(t)) => Ok(env.encode(s, t)),
            _ => Err(EnvError::Mismatch),
        }
    }

    /// `(next, reward, done)`.
    pub fn step(&self, state: &EnvState, action: usize, goal: &TaskGoal) -> Result<(EnvState, f64, bool)> {
        match (self, state, goal) {
            (Env::LightsOut(e), EnvState::LightsOut(s), TaskGoal::LightsOut(g)) => {
                let (n, r, d) = e.step(*s, action, *g)?;
                Ok((EnvState::LightsOut(n), r, d))
            }
            (Env::Boxpick { env, .. }, EnvState::Boxpick(s), TaskGoal::Boxpick(t)) => {
                let (n, r, d) = env.step(s, action, t)?;
                Ok((EnvState::Boxpick(n), r, d))
            }
            _ => Err(EnvError::Mismatch),
        }
    }

    /// The goal that `state` itself achieves, if it is a valid goal
    /// (a Boxpick agent still carrying a box achieves none).
    pub fn goal_of(&self, state: &EnvState) -> Option<TaskGoal> {
        match state {
            EnvState::LightsOut(s) => Some(TaskGoal::LightsOut(*s)),
            EnvState::Boxpick(s) if s.carrying.is_none() => {
                let mut cells: Vec<usize> = s.floor_boxes().collect();
                cells.sort_unstable();
                Some(TaskGoal::Boxpick(cells))
            }
            EnvState::Boxpick(_) => None,
        }
    }

    pub fn is_solved(&self, state: &EnvState, goal: &TaskGoal) -> Result<bool> {
        match (self, state, goal) {
            (Env::LightsOut(_), EnvState::LightsOut(s), TaskGoal::LightsOut(g)) => Ok(s == g),
            (Env::Boxpick { env, .. }, EnvState::Boxpick(s), TaskGoal::Boxpick(t)) => Ok(env.is_solved(s, t)),
            _ => Err(EnvError::Mismatch),
        }
    }
}

impl fmt::Display for Env {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum EnvState {
    LightsOut(LightsOutState),
    Boxpick(BoxpickState),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum TaskGoal {
    LightsOut(LightsOutState),
    /// Sorted target cells.
    Boxpick(Vec<usize>),
}

/// How a task was generated.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum TaskMeta {
    Depth(usize),
    Boxpick { mode: BoxpickMode, split: Split },
}

impl fmt::Display for TaskMeta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TaskMeta::Depth(d) => write!(f, "depth={d}"),
            TaskMeta::Boxpick { mode, split } => write!(f, "{mode}:{split}"),
        }
    }
}

/// A sampled `(start, goal)` pair.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Task {
    pub start: EnvState,
    pub goal: TaskGoal,
    pub meta: TaskMeta,
}

impl Task {
    pub fn depth(&self) -> Option<usize> {
        match self.meta {
            TaskMeta::Depth(d) => Some(d),
            TaskMeta::Boxpick { .. } => None,
        }
    }
}

/// A task distribution: scramble depths for LightsOut, a split of a mode for
/// Boxpick, or a fixed list replayed cyclically.
#[derive(Clone, Debug, PartialEq)]
pub enum TaskDistribution {
    LightsOut {
        env: LightsOut,
        depth: (usize, usize),
        anchor: Anchor,
    },
    Boxpick { env: Boxpick, mode: BoxpickMode, split: Split },
    Fixed { name: String, tasks: Vec<Task> },
}

impl TaskDistribution {
    pub fn lightsout(env: &Env, lo: usize, hi: usize) -> Result<Self> {
        Self::lightsout_from(env, Anchor::Random, lo, hi)
    }

    pub fn lightsout_from(env: &Env, anchor: Anchor, lo: usize, hi: usize) -> Result<Self> {
        match env {
            Env::LightsOut(e) => {
                if lo > hi || hi > e.cells() {
                    return Err(EnvError::InvalidRange { lo, hi, cells: e.cells() });
                }
                Ok(TaskDistribution::LightsOut {
                    env: e.clone(),
                    depth: (lo, hi),
                    anchor,
                })
            }
            _ => Err(EnvError::Mismatch),
        }
    }

    pub fn boxpick(env: &Env, split: Split) -> Result<Self> {
        match env {
            Env::Boxpick { env, mode } => Ok(TaskDistribution::Boxpick {
                env: env.clone(),
                mode: *mode,
                split,
            }),
            _ => Err(EnvError::Mismatch),
        }
    }

    pub fn id(&self) -> String {
        match self {
            TaskDistribution::LightsOut { env, depth, anchor } => match anchor {
                Anchor::Random => format!("{env}:d{}-{}", depth.0, depth.1),
                _ => format!("{env}:{anchor}:d{}-{}", depth.0, depth.1),
            },
            TaskDistribution::Boxpick { mode, split, .. } => format!("boxpick-{mode}:{split}"),
            TaskDistribution::Fixed { name, .. } => name.clone(),
        }
    }

    /// Draws one task. `Fixed` distributions cycle by `index`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, index: usize) -> Result<Task> {
        match self {
            TaskDistribution::LightsOut { env, depth, anchor } => {
                let (s, g, d) = env.sample_task_from(rng, *anchor, depth.0, depth.1)?;
                Ok(Task {
                    start: EnvState::LightsOut(s),
                    goal: TaskGoal::LightsOut(g),
                    meta: TaskMeta::Depth(d),
                })
            }
            TaskDistribution::Boxpick { env, mode, split } => {
                let (s, t) = env.sample_task(rng, *mode, *split)?;
                Ok(Task {
                    start: EnvState::Boxpick(s),
                    goal: TaskGoal::Boxpick(t),
                    meta: TaskMeta::Boxpick {
                        mode: *mode,
                        split: *split,
                    },
                })
            }
            TaskDistribution::Fixed { tasks, .. } => tasks
                .get(index % tasks.len().max(1))
                .cloned()
                .ok_or_else(|| EnvError::Fixture("empty task list".into())),
        }
    }
}
