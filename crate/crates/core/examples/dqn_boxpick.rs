//! Goal-conditioned DQN with Boltzmann exploration on Boxpick.
//!
//! `cargo run --release --example dqn_boxpick -- [key=value ...]`
//! e.g. `env=boxpick-exact-4 budget.env_steps=200000`

use recurdepth::config::ExperimentConfig;
use recurdepth::trainers::train;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = ExperimentConfig::preset("boxpick-gen-4-1")?;
    // A narrower network and pool than the defaults so this finishes in minutes.
    for (k, v) in [
        ("arch.hidden", "64"),
        ("dqn.pool", "16"),
        ("budget.env_steps", "60000"),
        ("eval.every", "20000"),
        ("eval.episodes", "64"),
    ] {
        cfg.set(k, v)?;
    }
    for arg in std::env::args().skip(1) {
        let (k, v) = arg.split_once('=').ok_or("overrides are key=value")?;
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    let outcome = train(&cfg, None)?;
    for r in &outcome.records {
        match r.get("type") {
            Some("eval") => println!(
                "env_steps={:>7} train={:.3} test={:.3}",
                r.get("env_steps").unwrap_or("?"),
                r.get_f64("train_success").unwrap_or(f64::NAN),
                r.get_f64("test_success").unwrap_or(f64::NAN),
            ),
            Some("update") => println!(
                "  updates={:>6} loss={:.4} mean_q={:.3} behaviour_entropy={:.3}",
                r.get("updates").unwrap_or("?"),
                r.get_f64("loss").unwrap_or(f64::NAN),
                r.get_f64("mean_q").unwrap_or(f64::NAN),
                r.get_f64("behaviour_entropy").unwrap_or(f64::NAN),
            ),
            _ => {}
        }
    }
    Ok(())
}
