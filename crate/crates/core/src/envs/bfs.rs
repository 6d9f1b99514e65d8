use std::collections::{HashSet, VecDeque};
use std::hash::Hash;

use super::{EnvError, Result};

/// Default cap on visited states before [`bfs_distance`] gives up.
pub const DEFAULT_BFS_BUDGET: usize = 4_000_000;

/// Shortest number of actions from `start` to any state satisfying `is_goal`,
/// exploring at most `max_depth` layers. `Ok(None)` means unreachable within
/// `max_depth`; more than `budget` visited states is an `Overflow` fault.
pub fn bfs_distance<S, F, G>(
    start: &S,
    is_goal: G,
    mut successors: F,
    max_depth: usize,
    budget: usize,
) -> Result<Option<usize>>
where
    S: Clone + Eq + Hash,
    F: FnMut(&S, &mut Vec<S>),
    G: Fn(&S) -> bool,
{
    if is_goal(start) {
        return Ok(Some(0));
    }
    let mut seen = HashSet::from([start.clone()]);
    let mut queue = VecDeque::from([(start.clone(), 0usize)]);
    let mut next = Vec::new();
    while let Some((s, d)) = queue.pop_front() {
        if d == max_depth {
            continue;
        }
        next.clear();
        successors(&s, &mut next);
        for n in next.drain(..) {
            if is_goal(&n) {
                return Ok(Some(d + 1));
            }
            if seen.insert(n.clone()) {
                if seen.len() > budget {
                    return Err(EnvError::Overflow(budget));
                }
                queue.push_back((n, d + 1));
            }
        }
    }
    Ok(None)
}
