//! Train a recurrent PPO agent on LightsOut and report how well it solves
//! boards scrambled deeper than anything it trained on.
//!
//! `cargo run --release --example ppo_lightsout -- [key=value ...]`

use recurdepth::config::ExperimentConfig;
use recurdepth::trainers::train;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = ExperimentConfig::preset("lightsout-3x3")?;
    cfg.budget_env_steps = 400_000;
    cfg.eval_every = 100_000;
    for arg in std::env::args().skip(1) {
        let (k, v) = arg.split_once('=').ok_or("overrides are key=value")?;
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    let outcome = train(&cfg, None)?;
    for r in outcome.records.iter().filter(|r| r.get("type") == Some("eval")) {
        println!(
            "env_steps={:>8} train={:.3} test={:.3} test_depths={}",
            r.get("env_steps").unwrap_or("?"),
            r.get_f64("train_success").unwrap_or(f64::NAN),
            r.get_f64("test_success").unwrap_or(f64::NAN),
            r.get("test_depths").unwrap_or("-"),
        );
    }
    Ok(())
}
