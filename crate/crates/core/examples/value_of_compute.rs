//! How much return is lost by thinking less? Train a 5-step IRU policy on
//! LightsOut, then measure VoC_n of running it at 1 step for n moves before
//! switching back, along trajectories the 5-step policy solves.
//!
//! `cargo run --release --example value_of_compute -- [budget]`

use recurdepth::config::ExperimentConfig;
use recurdepth::eval::{voc_curves, write_voc_table};
use recurdepth::trainers::{train, GreedyNet};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let budget: u64 = std::env::args().nth(1).map_or(Ok(204_800), |a| a.parse())?;
    let mut cfg = ExperimentConfig::preset("lightsout-3x3")?;
    cfg.budget_env_steps = budget;
    cfg.eval_every = 0;
    let outcome = train(&cfg, None)?;
    println!("trained {budget} steps: test success {:.3}", outcome.final_test.success_rate);

    let (t1, t2) = (5, 1);
    let net = outcome.agent.network();
    let ns = [1, 2, 4, 8];
    let summary = voc_curves(
        (&GreedyNet::new(net, t1), t1),
        (&GreedyNet::new(net, t2), t2),
        &cfg.env()?,
        &cfg.test_distribution()?,
        32,
        &ns,
        cfg.ppo.gamma,
        cfg.seed,
    )?;
    println!("{} successful trajectories, {} excluded", summary.curves.len(), summary.excluded);
    // Mean VoC by position in the episode.
    let longest = summary.curves.iter().map(|c| c.values.len()).max().unwrap_or(0);
    for t in 0..longest {
        let rows: Vec<&Vec<f64>> = summary.curves.iter().filter_map(|c| c.values.get(t)).collect();
        let means: Vec<String> = (0..ns.len())
            .map(|j| format!("{:.3}", rows.iter().map(|r| r[j]).sum::<f64>() / rows.len() as f64))
            .collect();
        println!("t={t:<2} ({:>2} trajectories) VoC_n for n={ns:?}: {}", rows.len(), means.join(" "));
    }
    let path = std::env::temp_dir().join("voc.tsv");
    write_voc_table(&path, &summary.curves)?;
    println!("table written to {}", path.display());
    Ok(())
}
