//! Plain-text task fixtures, one task per line:
//!
//! ```text
//! lightsout 3x3 010111010 000000000 depth=1
//! boxpick 6x6 agent=14;carry=-;boxes=0,1,2,3 21,22,23,27 exact-4:train
//! ```
//!
//! Fields: env, board dims, start layout, goal layout, mode tag. Blank lines
//! and `#` comments are skipped.

use std::path::Path;

use super::{
    Boxpick, BoxpickMode, BoxpickState, Env, EnvError, EnvState, LightsOut, Result, Split, Task,
    TaskGoal, TaskMeta,
};

fn bad(msg: impl Into<String>) -> EnvError {
    EnvError::Fixture(msg.into())
}

fn cells(list: &str) -> Result<Vec<usize>> {
    if list.is_empty() {
        return Ok(Vec::new());
    }
    list.split(',')
        .map(|c| c.parse().map_err(|_| bad(format!("bad cell `{c}`"))))
        .collect()
}

fn join(xs: impl Iterator<Item = String>) -> String {
    xs.collect::<Vec<_>>().join(",")
}

pub fn write_fixture_line(env: &Env, task: &Task) -> Result<String> {
    match (env, &task.start, &task.goal) {
        (Env::LightsOut(e), EnvState::LightsOut(s), TaskGoal::LightsOut(g)) => Ok(format!(
            "lightsout {}x{} {} {} {}",
            e.rows(),
            e.cols(),
            e.format_state(*s),
            e.format_state(*g),
            task.meta
        )),
        (Env::Boxpick { env, .. }, EnvState::Boxpick(s), TaskGoal::Boxpick(t)) => {
            let boxes = join(s.boxes.iter().map(|b| b.map_or("-".to_string(), |c| c.to_string())));
            let carry = s.carrying.map_or("-".to_string(), |c| c.to_string());
            Ok(format!(
                "boxpick {0}x{0} agent={1};carry={2};boxes={3} {4} {5}",
                env.size(),
                s.agent,
                carry,
                boxes,
                join(t.iter().map(usize::to_string)),
                task.meta
            ))
        }
        _ => Err(EnvError::Mismatch),
    }
}

pub fn parse_fixture_line(line: &str) -> Result<(Env, Task)> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    let [kind, dims, start, goal, tag] = fields[..] else {
        return Err(bad(format!("expected 5 fields in `{line}`")));
    };
    let (rows, cols) = dims
        .split_once('x')
        .and_then(|(r, c)| Some((r.parse::<usize>().ok()?, c.parse::<usize>().ok()?)))
        .ok_or_else(|| bad(format!("bad board dims `{dims}`")))?;
    match kind {
        "lightsout" => {
            let env = LightsOut::new(rows, cols)?;
            let depth = tag
                .strip_prefix("depth=")
                .and_then(|d| d.parse().ok())
                .ok_or_else(|| bad(format!("bad lightsout tag `{tag}`")))?;
            let task = Task {
                start: EnvState::LightsOut(env.parse_state(start)?),
                goal: TaskGoal::LightsOut(env.parse_state(goal)?),
                meta: TaskMeta::Depth(depth),
            };
            Ok((Env::LightsOut(env), task))
        }
        "boxpick" => {
            if rows != cols {
                return Err(bad("boxpick boards are square"));
            }
            let board = Boxpick::new(rows)?;
            let (mode, split) = tag
                .split_once(':')
                .ok_or_else(|| bad(format!("bad boxpick tag `{tag}`")))?;
            let mode: BoxpickMode = mode.parse()?;
            let split: Split = split.parse()?;
            let mut agent = None;
            let mut carrying = None;
            let mut boxes = None;
            for kv in start.split(';') {
                let (k, v) = kv.split_once('=').ok_or_else(|| bad(format!("bad field `{kv}`")))?;
                match k {
                    "agent" => agent = Some(v.parse().map_err(|_| bad(format!("bad agent `{v}`")))?),
                    "carry" if v == "-" => {}
                    "carry" => carrying = Some(v.parse().map_err(|_| bad(format!("bad carry `{v}`")))?),
                    "boxes" => {
                        boxes = Some(
                            v.split(',')
                                .map(|b| match b {
                                    "-" => Ok(None),
                                    _ => b.parse().map(Some).map_err(|_| bad(format!("bad box `{b}`"))),
                                })
                                .collect::<Result<Vec<_>>>()?,
                        )
                    }
                    _ => return Err(bad(format!("unknown field `{k}`"))),
                }
            }
            let state = BoxpickState {
                agent: agent.ok_or_else(|| bad("missing agent"))?,
                boxes: boxes.ok_or_else(|| bad("missing boxes"))?,
                carrying,
                steps: 0,
            };
            let n = board.cells();
            let mut targets = cells(goal)?;
            targets.sort_unstable();
            let carried = state.boxes.iter().filter(|b| b.is_none()).count();
            if state.agent >= n
                || state.floor_boxes().chain(targets.iter().copied()).any(|c| c >= n)
                || carried != usize::from(carrying.is_some())
                || carrying.is_some_and(|c| state.boxes.get(c) != Some(&None))
                || state.boxes.len() != mode.boxes()
            {
                return Err(bad(format!("inconsistent boxpick layout `{start}`")));
            }
            let task = Task {
                start: EnvState::Boxpick(state),
                goal: TaskGoal::Boxpick(targets),
                meta: TaskMeta::Boxpick { mode, split },
            };
            Ok((
                Env::Boxpick {
                    env: board,
                    mode,
                },
                task,
            ))
        }
        _ => Err(EnvError::UnknownEnv(kind.to_string())),
    }
}

pub fn read_fixtures(path: &Path) -> Result<Vec<(Env, Task)>> {
    let text = std::fs::read_to_string(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(parse_fixture_line)
        .collect()
}
