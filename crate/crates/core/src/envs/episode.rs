use super::{Env, EnvState, Result, Task};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    /// Goal reached (no bootstrapping past this step).
    pub done: bool,
    /// Cut by the step cap without reaching the goal.
    pub truncated: bool,
}

/// One task being played out under a step cap.
#[derive(Clone, Debug)]
pub struct Episode {
    env: Env,
    task: Task,
    state: EnvState,
    t: usize,
    cap: usize,
    finished: bool,
}

impl Episode {
    pub fn new(env: &Env, task: Task) -> Result<Self> {
        let finished = env.is_solved(&task.start, &task.goal)?;
        Ok(Self {
            env: env.clone(),
            state: task.start.clone(),
            task,
            t: 0,
            cap: env.episode_cap(),
            finished,
        })
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.cap = cap;
        self
    }

    pub fn env(&self) -> &Env {
        &self.env
    }

    pub fn task(&self) -> &Task {
        &self.task
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    /// Steps taken so far.
    pub fn t(&self) -> usize {
        self.t
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    /// The goal has been reached (possibly already at the start).
    pub fn solved(&self) -> bool {
        self.env.is_solved(&self.state, &self.task.goal).unwrap_or(false)
    }

    /// Solved, or out of steps.
    pub fn finished(&self) -> bool {
        self.finished || self.t >= self.cap
    }

    pub fn observe(&self) -> Vec<f64> {
        self.env
            .encode(&self.state, &self.task.goal)
            .expect("episode state matches its env")
    }

    /// Advance one step. The goal is absorbing: stepping from a solved
    /// state (e.g. a task solved at the start) leaves it unchanged and
    /// yields reward 0 with `done`.
    pub fn step(&mut self, action: usize) -> Result<StepOutcome> {
        if self.finished && self.solved() {
            if action >= self.env.n_actions() {
                return Err(super::EnvError::ActionOutOfRange {
                    action,
                    actions: self.env.n_actions(),
                });
            }
            self.t += 1;
            return Ok(StepOutcome {
                reward: super::GOAL_REWARD,
                done: true,
                truncated: false,
            });
        }
        let (next, reward, done) = self.env.step(&self.state, action, &self.task.goal)?;
        self.state = next;
        self.t += 1;
        self.finished |= done;
        Ok(StepOutcome {
            reward,
            done,
            truncated: !done && self.t >= self.cap,
        })
    }
}
