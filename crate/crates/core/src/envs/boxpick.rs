//! "Boxpick-lite": an n x n board where the agent walks, picks up boxes and
//! puts them down; solved when every box rests on a target and none is carried.

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng;

use super::{EnvError, Result, GOAL_REWARD, STEP_REWARD};

pub const BOXPICK_SIZE: usize = 6;
pub const BOXPICK_EPISODE_CAP: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BoxpickAction {
    Up,
    Down,
    Left,
    Right,
    Pick,
    Place,
}

impl BoxpickAction {
    pub const COUNT: usize = 6;

    pub fn from_index(a: usize) -> Result<Self> {
        use BoxpickAction::*;
        [Up, Down, Left, Right, Pick, Place]
            .get(a)
            .copied()
            .ok_or(EnvError::ActionOutOfRange {
                action: a,
                actions: Self::COUNT,
            })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BoxpickState {
    /// Cell index `row * size + col`.
    pub agent: usize,
    /// Position of each box; `None` for the carried box.
    pub boxes: Vec<Option<usize>>,
    /// Id of the carried box.
    pub carrying: Option<usize>,
    pub steps: usize,
}

impl BoxpickState {
    pub fn floor_boxes(&self) -> impl Iterator<Item = usize> + '_ {
        self.boxes.iter().flatten().copied()
    }

    pub fn box_at(&self, cell: usize) -> Option<usize> {
        self.boxes.iter().position(|b| *b == Some(cell))
    }

    /// Search key without the step counter.
    pub fn layout_key(&self) -> (usize, Vec<Option<usize>>, Option<usize>) {
        (self.agent, self.boxes.clone(), self.carrying)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = EnvError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            _ => Err(EnvError::Fixture(format!("unknown split `{s}`"))),
        }
    }
}

/// Task family: `exact-m` moves boxes between quadrants, `gen-m-k` leaves
/// `k` of `m` boxes off-target during training.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BoxpickMode {
    Exact { boxes: usize },
    Gen { boxes: usize, off_target: usize },
}

impl BoxpickMode {
    pub fn boxes(self) -> usize {
        match self {
            BoxpickMode::Exact { boxes } | BoxpickMode::Gen { boxes, .. } => boxes,
        }
    }
}

impl fmt::Display for BoxpickMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoxpickMode::Exact { boxes } => write!(f, "exact-{boxes}"),
            BoxpickMode::Gen { boxes, off_target } => write!(f, "gen-{boxes}-{off_target}"),
        }
    }
}

impl FromStr for BoxpickMode {
    type Err = EnvError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || EnvError::UnknownEnv(format!("boxpick-{s}"));
        let parts: Vec<&str> = s.split('-').collect();
        let num = |p: &str| p.parse::<usize>().map_err(|_| bad());
        let mode = match parts[..] {
            ["exact", m] => BoxpickMode::Exact { boxes: num(m)? },
            ["gen", m, k] => BoxpickMode::Gen {
                boxes: num(m)?,
                off_target: num(k)?,
            },
            _ => return Err(bad()),
        };
        match mode {
            BoxpickMode::Gen { boxes, off_target } if off_target >= boxes => Err(EnvError::Infeasible(format!(
                "gen mode needs fewer off-target boxes ({off_target}) than boxes ({boxes})"
            ))),
            _ if mode.boxes() == 0 => Err(bad()),
            _ => Ok(mode),
        }
    }
}

/// Quadrant index of a cell on an even-sized board: 0 TL, 1 TR, 2 BL, 3 BR.
pub fn quadrant_of(cell: usize, size: usize) -> usize {
    let half = size / 2;
    let (r, c) = (cell / size, cell % size);
    usize::from(r >= half) * 2 + usize::from(c >= half)
}

/// Quadrants share an edge (as opposed to being diagonal).
fn neighbouring(a: usize, b: usize) -> bool {
    a != b && a + b != 3
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Boxpick {
    size: usize,
}

impl Boxpick {
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(EnvError::Infeasible("empty board".into()));
        }
        Ok(Self { size })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn cells(&self) -> usize {
        self.size * self.size
    }

    pub fn n_actions(&self) -> usize {
        BoxpickAction::COUNT
    }

    pub fn obs_dim(&self) -> usize {
        4 * self.cells() + 1
    }

    pub fn is_solved(&self, s: &BoxpickState, targets: &[usize]) -> bool {
        s.carrying.is_none() && s.boxes.iter().all(|b| b.is_some_and(|p| targets.contains(&p)))
    }

    /// One transition; moves clamp at the walls, invalid pick/place are no-ops.
    /// The step counter always advances.
    pub fn step(&self, s: &BoxpickState, a: usize, targets: &[usize]) -> Result<(BoxpickState, f64, bool)> {
        let action = BoxpickAction::from_index(a)?;
        let mut next = s.clone();
        next.steps += 1;
        let (r, c) = (s.agent / self.size, s.agent % self.size);
        match action {
            BoxpickAction::Up if r > 0 => next.agent -= self.size,
            BoxpickAction::Down if r + 1 < self.size => next.agent += self.size,
            BoxpickAction::Left if c > 0 => next.agent -= 1,
            BoxpickAction::Right if c + 1 < self.size => next.agent += 1,
            BoxpickAction::Pick if s.carrying.is_none() => {
                if let Some(id) = s.box_at(s.agent) {
                    next.boxes[id] = None;
                    next.carrying = Some(id);
                }
            }
            BoxpickAction::Place => {
                if let Some(id) = s.carrying {
                    if s.box_at(s.agent).is_none() {
                        next.boxes[id] = Some(s.agent);
                        next.carrying = None;
                    }
                }
            }
            _ => {}
        }
        let done = self.is_solved(&next, targets);
        Ok((next, if done { GOAL_REWARD } else { STEP_REWARD }, done))
    }

    /// Successor layouts for search (step counter untouched).
    pub fn successors(&self, s: &BoxpickState, targets: &[usize], out: &mut Vec<BoxpickState>) {
        for a in 0..BoxpickAction::COUNT {
            let (mut n, _, _) = self.step(s, a, targets).expect("valid action");
            n.steps = s.steps;
            if n != *s {
                out.push(n);
            }
        }
    }

    fn quadrant_cells(&self, q: usize) -> Vec<usize> {
        (0..self.cells()).filter(|&c| quadrant_of(c, self.size) == q).collect()
    }

    /// Samples a start state and target set for `mode`/`split`.
    pub fn sample_task<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        mode: BoxpickMode,
        split: Split,
    ) -> Result<(BoxpickState, Vec<usize>)> {
        let m = mode.boxes();
        let n = self.cells();
        if self.size % 2 != 0 {
            return Err(EnvError::Infeasible(format!(
                "board size {} cannot be split into four quadrants",
                self.size
            )));
        }
        let (boxes, mut targets) = match mode {
            BoxpickMode::Exact { .. } => {
                let quad = n / 4;
                if m > quad {
                    return Err(EnvError::Infeasible(format!("{m} boxes do not fit a {quad}-cell quadrant")));
                }
                let pairs: Vec<(usize, usize)> = (0..4)
                    .flat_map(|a| (0..4).map(move |b| (a, b)))
                    .filter(|&(a, b)| match split {
                        Split::Train => neighbouring(a, b),
                        Split::Test => a + b == 3,
                    })
                    .collect();
                let &(src, dst) = pairs.choose(rng).expect("non-empty");
                let pick = |rng: &mut R, q: usize| -> Vec<usize> {
                    let cells = self.quadrant_cells(q);
                    sample(rng, cells.len(), m).into_iter().map(|i| cells[i]).collect()
                };
                let boxes = pick(rng, src);
                let targets = pick(rng, dst);
                (boxes, targets)
            }
            BoxpickMode::Gen { off_target, .. } => {
                let off = match split {
                    Split::Train => off_target,
                    Split::Test => m,
                };
                if m + off > n {
                    return Err(EnvError::Infeasible(format!("{m} targets and {off} loose boxes exceed {n} cells")));
                }
                let cells: Vec<usize> = sample(rng, n, m + off).into_iter().collect();
                let targets = cells[..m].to_vec();
                let mut boxes: Vec<usize> = targets[..m - off].to_vec();
                boxes.extend_from_slice(&cells[m..]);
                boxes.shuffle(rng);
                (boxes, targets)
            }
        };
        targets.sort_unstable();
        let state = BoxpickState {
            agent: rng.gen_range(0..n),
            boxes: boxes.into_iter().map(Some).collect(),
            carrying: None,
            steps: 0,
        };
        Ok((state, targets))
    }

    /// Whether a layout satisfies the exact-mode training predicate: all boxes
    /// in one quadrant and all targets in an edge-adjacent one.
    pub fn is_neighbouring_transfer(&self, s: &BoxpickState, targets: &[usize]) -> bool {
        let bq: Vec<usize> = s.floor_boxes().map(|c| quadrant_of(c, self.size)).collect();
        let tq: Vec<usize> = targets.iter().map(|&c| quadrant_of(c, self.size)).collect();
        match (bq.first(), tq.first()) {
            (Some(&b), Some(&t)) => {
                bq.iter().all(|&q| q == b) && tq.iter().all(|&q| q == t) && neighbouring(b, t)
            }
            _ => false,
        }
    }

    /// Channels: agent, floor boxes, targets, carrying bit; then the goal
    /// channel (desired box layout = targets).
    pub fn encode(&self, s: &BoxpickState, targets: &[usize]) -> Vec<f64> {
        let n = self.cells();
        let mut obs = vec![0.0; self.obs_dim()];
        obs[s.agent] = 1.0;
        for b in s.floor_boxes() {
            obs[n + b] = 1.0;
        }
        for &t in targets {
            obs[2 * n + t] = 1.0;
            obs[3 * n + 1 + t] = 1.0;
        }
        obs[3 * n] = f64::from(u8::from(s.carrying.is_some()));
        obs
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(agent: usize, boxes: &[usize]) -> BoxpickState {
        BoxpickState {
            agent,
            boxes: boxes.iter().map(|&b| Some(b)).collect(),
            carrying: None,
            steps: 0,
        }
    }

    #[test]
    fn pick_off_a_box_is_a_noop() {
        let env = Boxpick::new(4).unwrap();
        let s = state(0, &[5]);
        let (n, r, done) = env.step(&s, 4, &[10]).unwrap();
        assert_eq!(n.layout_key(), s.layout_key());
        assert_eq!((n.steps, r, done), (1, -1.0, false));
    }

    #[test]
    fn walls_clamp() {
        let env = Boxpick::new(4).unwrap();
        let s = state(0, &[5]);
        for a in [0, 2] {
            assert_eq!(env.step(&s, a, &[10]).unwrap().0.agent, 0);
        }
        assert_eq!(env.step(&state(15, &[5]), 1, &[10]).unwrap().0.agent, 15);
        assert_eq!(env.step(&state(15, &[5]), 3, &[10]).unwrap().0.agent, 15);
    }

    #[test]
    fn place_needs_free_cell() {
        let env = Boxpick::new(4).unwrap();
        let mut s = state(5, &[1, 5]);
        s.boxes[0] = None;
        s.carrying = Some(0);
        let (n, _, _) = env.step(&s, 5, &[2, 3]).unwrap();
        assert_eq!(n.carrying, Some(0));
        assert_eq!(n.boxes, vec![None, Some(5)]);
    }

    #[test]
    fn unknown_action() {
        let env = Boxpick::new(4).unwrap();
        assert_eq!(
            env.step(&state(0, &[1]), 6, &[1]).unwrap_err(),
            EnvError::ActionOutOfRange { action: 6, actions: 6 }
        );
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("exact-4".parse::<BoxpickMode>().unwrap(), BoxpickMode::Exact { boxes: 4 });
        assert_eq!(
            "gen-4-1".parse::<BoxpickMode>().unwrap(),
            BoxpickMode::Gen { boxes: 4, off_target: 1 }
        );
        assert!("gen-4-4".parse::<BoxpickMode>().is_err());
        assert!("exact".parse::<BoxpickMode>().is_err());
        let odd = Boxpick::new(5).unwrap();
        assert!(matches!(
            odd.sample_task(&mut rand::thread_rng(), BoxpickMode::Exact { boxes: 1 }, Split::Train),
            Err(EnvError::Infeasible(_))
        ));
    }

    #[test]
    fn quadrants_on_six_board() {
        assert_eq!(quadrant_of(0, 6), 0);
        assert_eq!(quadrant_of(5, 6), 1);
        assert_eq!(quadrant_of(18, 6), 2);
        assert_eq!(quadrant_of(35, 6), 3);
        assert_eq!(quadrant_of(2 * 6 + 2, 6), 0);
        assert_eq!(quadrant_of(3 * 6 + 3, 6), 3);
    }

    #[test]
    fn too_many_boxes_is_infeasible() {
        let env = Boxpick::new(6).unwrap();
        let mut rng = rand::thread_rng();
        assert!(matches!(
            env.sample_task(&mut rng, BoxpickMode::Exact { boxes: 10 }, Split::Train),
            Err(EnvError::Infeasible(_))
        ));
    }
}
