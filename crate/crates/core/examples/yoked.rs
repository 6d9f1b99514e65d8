//! Yoked training: a 1-step active agent collects all experience; a 5-step
//! passive agent with its own weights learns only from the active agent's
//! batches, isolating expressivity from exploration.
//!
//! `cargo run --release --example yoked -- [budget]`

use recurdepth::config::ExperimentConfig;
use recurdepth::eval::yoked_train;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let budget: u64 = std::env::args().nth(1).map_or(Ok(102_400), |a| a.parse())?;
    let mut active = ExperimentConfig::preset("lightsout-3x3")?;
    active.budget_env_steps = budget;
    active.eval_every = budget / 4;
    active.arch_steps = 1;
    let mut passive = active.clone();
    passive.arch_steps = 5;
    passive.seed = active.seed + 1;

    let out = yoked_train(&active, &passive, None)?;
    println!("batches consumed: {} (streams match: {})", out.active.batches, out.streams_match());
    let evals = |o: &recurdepth::trainers::TrainOutcome| -> Vec<(String, f64)> {
        o.records
            .iter()
            .filter(|r| r.get("type") == Some("eval"))
            .map(|r| (r.get("env_steps").unwrap_or("?").to_string(), r.get_f64("test_success").unwrap_or(f64::NAN)))
            .collect()
    };
    for ((steps, a), (_, p)) in evals(&out.active).into_iter().zip(evals(&out.passive)) {
        println!("env_steps={steps:>7} active(N=1) test={a:.3} passive(N=5) test={p:.3}");
    }
    Ok(())
}
