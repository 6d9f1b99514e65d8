//! Scramble LightsOut boards, show them, and confirm with breadth-first
//! search that the optimal solution is never longer than the scramble.
//!
//! `cargo run --release --example lightsout_bfs -- [rows cols depth]`

use recurdepth::envs::{bfs_distance, LightsOut, DEFAULT_BFS_BUDGET};
use recurdepth::seeding::Seeds;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse()).collect::<Result<_, _>>()?;
    let (rows, cols, depth) = match args[..] {
        [r, c, d] => (r, c, d),
        [] => (3, 3, 6),
        _ => return Err("expected: rows cols depth".into()),
    };
    let env = LightsOut::new(rows, cols)?;
    let mut rng = Seeds::new(0).stream("tasks", 0);
    for i in 0..5 {
        let (start, goal, scramble) = env.sample_task(&mut rng, depth, depth)?;
        let dist = bfs_distance(
            &start,
            |s| *s == goal,
            |s, out| out.extend((0..env.n_actions()).map(|a| env.press(*s, a).expect("valid action"))),
            scramble,
            DEFAULT_BFS_BUDGET,
        )?;
        println!("task {i}: scrambled with {scramble} presses, optimal solution {dist:?} presses");
        for r in 0..rows {
            let row = |st| env.format_state(st)[r * cols..(r + 1) * cols].replace('1', "#").replace('0', ".");
            println!("    {}   {}", row(start), row(goal));
        }
    }
    Ok(())
}
