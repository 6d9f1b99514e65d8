use std::fmt;

use rand::seq::index::sample;
use rand::Rng;

use super::{EnvError, Result, GOAL_REWARD, STEP_REWARD};

pub const LIGHTSOUT_EPISODE_CAP: usize = 50;

/// Bit `r * cols + c` holds cell `(r, c)`; row-major, at most 64 cells.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LightsOutState(pub u64);

impl LightsOutState {
    pub fn bit(self, i: usize) -> bool {
        self.0 >> i & 1 == 1
    }

    pub fn count_ones(self) -> u32 {
        self.0.count_ones()
    }
}

/// Which end of a sampled task, if any, is the all-off board. `Random`
/// draws a uniform start and scrambles the goal from it; `OffStart` scrambles
/// the goal from the off board; `OffGoal` scrambles the start and asks for
/// the off board (the classic puzzle).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Anchor {
    #[default]
    Random,
    OffStart,
    OffGoal,
}

impl fmt::Display for Anchor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Anchor::Random => "random",
            Anchor::OffStart => "off-start",
            Anchor::OffGoal => "off-goal",
        })
    }
}

impl std::str::FromStr for Anchor {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "random" => Ok(Anchor::Random),
            "off-start" => Ok(Anchor::OffStart),
            "off-goal" => Ok(Anchor::OffGoal),
            _ => Err("expected random | off-start | off-goal".into()),
        }
    }
}

/// Board geometry plus the precomputed flip mask for every press.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LightsOut {
    rows: usize,
    cols: usize,
    masks: Vec<u64>,
}

impl LightsOut {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 || rows * cols > 64 {
            return Err(EnvError::UnknownEnv(format!("lightsout-{rows}x{cols}")));
        }
        let idx = |r: usize, c: usize| r * cols + c;
        let masks = (0..rows * cols)
            .map(|a| {
                let (r, c) = (a / cols, a % cols);
                let mut m = 1u64 << a;
                if r > 0 {
                    m |= 1 << idx(r - 1, c);
                }
                if r + 1 < rows {
                    m |= 1 << idx(r + 1, c);
                }
                if c > 0 {
                    m |= 1 << idx(r, c - 1);
                }
                if c + 1 < cols {
                    m |= 1 << idx(r, c + 1);
                }
                m
            })
            .collect();
        Ok(Self { rows, cols, masks })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cells(&self) -> usize {
        self.rows * self.cols
    }

    pub fn n_actions(&self) -> usize {
        self.cells()
    }

    pub fn all_mask(&self) -> u64 {
        if self.cells() == 64 {
            u64::MAX
        } else {
            (1u64 << self.cells()) - 1
        }
    }

    /// Cells flipped by pressing `a`: the cell itself and its orthogonal neighbours.
    pub fn mask(&self, a: usize) -> Result<u64> {
        self.masks.get(a).copied().ok_or(EnvError::ActionOutOfRange {
            action: a,
            actions: self.n_actions(),
        })
    }

    pub fn press(&self, s: LightsOutState, a: usize) -> Result<LightsOutState> {
        Ok(LightsOutState(s.0 ^ self.mask(a)?))
    }

    /// One transition: `(next, reward, done)`, with reward 0 and `done` on reaching `goal`.
    pub fn step(&self, s: LightsOutState, a: usize, goal: LightsOutState) -> Result<(LightsOutState, f64, bool)> {
        let next = self.press(s, a)?;
        let done = next == goal;
        Ok((next, if done { GOAL_REWARD } else { STEP_REWARD }, done))
    }

    pub fn random_state<R: Rng + ?Sized>(&self, rng: &mut R) -> LightsOutState {
        LightsOutState(rng.gen::<u64>() & self.all_mask())
    }

    /// Uniform random start, then `d ~ U[lo, hi]` distinct presses give the goal.
    /// Returns `(start, goal, d)`.
    pub fn sample_task<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        lo: usize,
        hi: usize,
    ) -> Result<(LightsOutState, LightsOutState, usize)> {
        self.sample_task_from(rng, Anchor::Random, lo, hi)
    }

    /// [`sample_task`](Self::sample_task) with a choice of anchored board.
    pub fn sample_task_from<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        anchor: Anchor,
        lo: usize,
        hi: usize,
    ) -> Result<(LightsOutState, LightsOutState, usize)> {
        if lo > hi || hi > self.cells() {
            return Err(EnvError::InvalidRange {
                lo,
                hi,
                cells: self.cells(),
            });
        }
        let start = match anchor {
            Anchor::Random => self.random_state(rng),
            Anchor::OffStart | Anchor::OffGoal => LightsOutState(0),
        };
        let depth = rng.gen_range(lo..=hi);
        let goal = sample(rng, self.cells(), depth)
            .into_iter()
            .fold(start.0, |s, a| s ^ self.masks[a]);
        Ok(match anchor {
            Anchor::OffGoal => (LightsOutState(goal), start, depth),
            _ => (start, LightsOutState(goal), depth),
        })
    }

    /// State bits followed by goal bits, as 0.0/1.0.
    pub fn encode(&self, s: LightsOutState, goal: LightsOutState) -> Vec<f64> {
        let n = self.cells();
        (0..n)
            .map(|i| f64::from(u8::from(s.bit(i))))
            .chain((0..n).map(|i| f64::from(u8::from(goal.bit(i)))))
            .collect()
    }

    pub fn obs_dim(&self) -> usize {
        2 * self.cells()
    }

    /// Row-major `0`/`1` string.
    pub fn format_state(&self, s: LightsOutState) -> String {
        (0..self.cells()).map(|i| if s.bit(i) { '1' } else { '0' }).collect()
    }

    pub fn parse_state(&self, text: &str) -> Result<LightsOutState> {
        if text.len() != self.cells() {
            return Err(EnvError::Fixture(format!(
                "expected {} cells, got `{text}`",
                self.cells()
            )));
        }
        text.chars().enumerate().try_fold(0u64, |acc, (i, ch)| match ch {
            '0' => Ok(acc),
            '1' => Ok(acc | 1 << i),
            _ => Err(EnvError::Fixture(format!("bad cell `{ch}` in `{text}`"))),
        })
        .map(LightsOutState)
    }
}

impl fmt::Display for LightsOut {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "lightsout-{}x{}", self.rows, self.cols)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cell_board() {
        let env = LightsOut::new(1, 1).unwrap();
        assert_eq!(env.press(LightsOutState(0), 0).unwrap(), LightsOutState(1));
    }

    #[test]
    fn center_press_is_a_plus() {
        let env = LightsOut::new(3, 3).unwrap();
        let s = env.press(LightsOutState(0), 4).unwrap();
        assert_eq!(env.format_state(s), "010111010");
        assert_eq!(s.count_ones(), 5);
        // Corner press flips three cells.
        assert_eq!(env.format_state(env.press(LightsOutState(0), 0).unwrap()), "110100000");
    }

    #[test]
    fn reward_convention() {
        let env = LightsOut::new(2, 2).unwrap();
        let goal = env.press(LightsOutState(0), 3).unwrap();
        assert_eq!(env.step(LightsOutState(0), 3, goal).unwrap(), (goal, 0.0, true));
        let (_, r, done) = env.step(LightsOutState(0), 0, goal).unwrap();
        assert_eq!((r, done), (-1.0, false));
    }

    #[test]
    fn out_of_range_action() {
        let env = LightsOut::new(3, 3).unwrap();
        assert_eq!(
            env.press(LightsOutState(0), 9),
            Err(EnvError::ActionOutOfRange { action: 9, actions: 9 })
        );
    }

    #[test]
    fn encoding_layout() {
        let env = LightsOut::new(3, 3).unwrap();
        let s = env.parse_state("100000001").unwrap();
        let obs = env.encode(s, s);
        assert_eq!(obs.len(), 18);
        assert_eq!(obs[..9], obs[9..]);
        let g = env.parse_state("010000000").unwrap();
        assert_eq!(
            env.encode(s, g),
            vec![1., 0., 0., 0., 0., 0., 0., 0., 1., 0., 1., 0., 0., 0., 0., 0., 0., 0.]
        );
    }

    #[test]
    fn invalid_ranges() {
        let env = LightsOut::new(3, 3).unwrap();
        let mut rng = rand::thread_rng();
        assert!(env.sample_task(&mut rng, 3, 2).is_err());
        assert!(env.sample_task(&mut rng, 0, 10).is_err());
        let (s, g, d) = env.sample_task(&mut rng, 0, 0).unwrap();
        assert_eq!((s, d), (g, 0));
    }
}
