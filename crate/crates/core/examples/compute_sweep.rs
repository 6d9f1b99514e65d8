//! Parameters and compute are decoupled: one set of IRU weights can be run
//! at any number of recurrent steps. Train briefly at 5 steps, then evaluate
//! the same weights at 1..=10 steps and report success, parameter count and
//! block multiply-accumulates.
//!
//! `cargo run --release --example compute_sweep -- [budget]`

use recurdepth::config::ExperimentConfig;
use recurdepth::eval::evaluate_network;
use recurdepth::trainers::train;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let budget: u64 = std::env::args().nth(1).map_or(Ok(204_800), |a| a.parse())?;
    let mut cfg = ExperimentConfig::preset("lightsout-3x3")?;
    cfg.budget_env_steps = budget;
    cfg.eval_every = 0;
    let outcome = train(&cfg, None)?;
    let net = outcome.agent.network();
    let env = cfg.env()?;
    let (train_dist, test_dist) = (cfg.train_distribution()?, cfg.test_distribution()?);
    println!("trained at N={} for {budget} env steps", cfg.arch_steps);
    println!("{:>3} {:>8} {:>8} {:>8} {:>10}", "N", "train", "test", "params", "block MACs");
    for n in 1..=10 {
        let tr = evaluate_network(net, Some(n), &env, &train_dist, 256, 1)?;
        let te = evaluate_network(net, Some(n), &env, &test_dist, 256, 2)?;
        println!(
            "{n:>3} {:>8.3} {:>8.3} {:>8} {:>10}",
            tr.success_rate,
            te.success_rate,
            net.parameter_count(),
            net.count_flops(n).block
        );
    }
    Ok(())
}
