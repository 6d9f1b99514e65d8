//! Command-line front end: `train`, `eval`, `voc`, `yoked`, `sweep` and
//! `show-config`, all driven by the plain-text experiment config.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::config::{Algo, ConfigError, ExperimentConfig};
use crate::eval::{evaluate, voc_curves, write_voc_table, yoked_train};
use crate::metrics::{read_metrics, MetricsRecord};
use crate::ndcore::read_checkpoint;
use crate::trainers::{train, Agent, GreedyNet, TrainError, TrainOutcome, CHECKPOINT_FILE, CONFIG_FILE, METRICS_FILE};

/// Default output root when neither `--out` nor the config's `out` is set.
pub const OUT_ENV: &str = "RECURDEPTH_OUT";
/// Reports from `eval` and `voc` are appended here inside the run directory.
pub const EVAL_FILE: &str = "eval.txt";
/// Final evaluation of every sweep point, one record per point.
pub const SWEEP_FILE: &str = "sweep.txt";

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 2 for anything the user can fix in the invocation or config,
    /// 1 for faults during a run.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) | CliError::Train(TrainError::Config(_)) => 2,
            _ => 1,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "recurdepth", version, about = "Train and probe recurrent-depth RL agents")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one agent; writes config.txt, metrics.txt and checkpoint.rdck.
    Train(RunArgs),
    /// Evaluate a trained run greedily at one or more recurrent step counts.
    Eval(EvalArgs),
    /// Value of Compute of running fewer recurrent steps, along successful trajectories.
    Voc(VocArgs),
    /// Train an active agent and a passive agent on the active agent's data.
    Yoked(YokedArgs),
    /// One training run per value of a config key.
    Sweep(SweepArgs),
    /// Print the fully resolved config and its hash.
    ShowConfig(RunArgs),
}

#[derive(Debug, Args, Clone, Default)]
pub struct RunArgs {
    /// Plain-text `key = value` config; unset keys take the env preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run directory (default: $RECURDEPTH_OUT/<run id>, else runs/<run id>).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Recurrent steps of the block (arch.steps).
    #[arg(long)]
    pub steps: Option<usize>,
    /// Episodes per evaluation (eval.episodes).
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Environment-step budget (budget.env_steps).
    #[arg(long)]
    pub budget: Option<u64>,
    /// Extra `key=value` settings applied after the config file.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args, Clone)]
pub struct EvalArgs {
    /// Run directory (or its checkpoint file) written by `train`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Recurrent step counts to evaluate at, comma separated (default: trained count).
    #[arg(long, value_delimiter = ',')]
    pub steps: Vec<usize>,
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Evaluation seed (default: the run's seed).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Which task distribution(s): train, test or both.
    #[arg(long, default_value = "both")]
    pub dist: String,
    /// Metrics file to append reports to (default: <run>/eval.txt).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct VocArgs {
    /// Run providing the higher-compute policy.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Run providing the lower-compute policy (default: same as --checkpoint).
    #[arg(long)]
    pub against: Option<PathBuf>,
    /// Recurrent steps of the higher-compute policy (default: trained count).
    #[arg(long)]
    pub t1: Option<usize>,
    /// Recurrent steps of the lower-compute policy.
    #[arg(long, default_value_t = 1)]
    pub t2: usize,
    /// Substitution lengths, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    pub n: Vec<usize>,
    #[arg(long, default_value_t = 32)]
    pub trajectories: usize,
    /// Discount (default: the run's algorithm discount).
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Task distribution: train or test.
    #[arg(long, default_value = "test")]
    pub dist: String,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output table (default: <run>/voc-<t1>-<t2>.tsv).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct YokedArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Recurrent steps of the passive agent.
    #[arg(long, default_value_t = 5)]
    pub passive_steps: usize,
    /// Initialization seed of the passive agent (default: active seed + 1).
    #[arg(long)]
    pub passive_seed: Option<u64>,
}

#[derive(Debug, Args, Clone)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// `key=v1,v2,...`; `steps` and `arch` abbreviate `arch.steps` and `arch.kind`.
    #[arg(long)]
    pub axis: String,
}

/// Parse the process arguments and run; returns the exit code.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Train(a) => cmd_train(&a, out),
        Command::Eval(a) => cmd_eval(&a, out),
        Command::Voc(a) => cmd_voc(&a, out),
        Command::Yoked(a) => cmd_yoked(&a, out),
        Command::Sweep(a) => cmd_sweep(&a, out),
        Command::ShowConfig(a) => {
            let cfg = resolve_config(&a)?;
            write!(out, "{}", cfg.to_text())?;
            writeln!(out, "# hash = {}", cfg.hash())?;
            writeln!(out, "# run_id = {}", cfg.run_id())?;
            Ok(())
        }
    }
}

/// Config file (or the default preset), then `--override`s in order, then
/// the dedicated flags; validated before returning.
pub fn resolve_config(a: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &a.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    for o in &a.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("override `{o}` is not key=value")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(s) = a.steps {
        cfg.arch_steps = s;
    }
    if let Some(e) = a.episodes {
        cfg.eval_episodes = e;
    }
    if let Some(b) = a.budget {
        cfg.budget_env_steps = b;
    }
    if let Some(o) = &a.out {
        cfg.out = o.display().to_string();
    }
    cfg.validate()?;
    Ok(cfg)
}

/// `--out`, else the config's `out`, else `$RECURDEPTH_OUT/<run id>`, else
/// `runs/<run id>`.
pub fn run_dir(cfg: &ExperimentConfig) -> PathBuf {
    if !cfg.out.is_empty() {
        return PathBuf::from(&cfg.out);
    }
    let root = std::env::var_os(OUT_ENV).map_or_else(|| PathBuf::from("runs"), PathBuf::from);
    root.join(cfg.run_id())
}

fn summary(label: &str, o: &TrainOutcome, dir: &Path) -> String {
    format!(
        "{label} run={} out={} env_steps={} updates={} train_success={} test_success={}",
        o.run_id,
        dir.display(),
        o.env_steps,
        o.updates,
        o.final_train.success_rate,
        o.final_test.success_rate
    )
}

fn cmd_train(a: &RunArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = resolve_config(a)?;
    let dir = run_dir(&cfg);
    let outcome = train(&cfg, Some(&dir))?;
    writeln!(out, "{}", summary("trained", &outcome, &dir))?;
    Ok(())
}

/// A run directory's config and restored agent. Accepts the directory or
/// the checkpoint file inside it.
pub fn load_run(path: &Path) -> Result<(PathBuf, ExperimentConfig, Agent)> {
    let dir = if path.is_dir() {
        path.to_path_buf()
    } else {
        path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf)
    };
    let ckpt = if path.is_file() { path.to_path_buf() } else { dir.join(CHECKPOINT_FILE) };
    if !ckpt.is_file() {
        return Err(CliError::Usage(format!("no checkpoint at {}", ckpt.display())));
    }
    let cfg_path = dir.join(CONFIG_FILE);
    if !cfg_path.is_file() {
        return Err(CliError::Usage(format!("no {CONFIG_FILE} next to {}", ckpt.display())));
    }
    let cfg = ExperimentConfig::load(&cfg_path)?;
    let params = read_checkpoint(&ckpt).map_err(|e| CliError::Usage(format!("{}: {e}", ckpt.display())))?;
    let agent = Agent::from_params(&cfg, &params)?;
    Ok((dir, cfg, agent))
}

fn append_records(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    for r in records {
        writeln!(f, "{r}")?;
    }
    Ok(())
}

fn cmd_eval(a: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let (dir, cfg, agent) = load_run(&a.checkpoint)?;
    let (want_train, want_test) = match a.dist.as_str() {
        "train" => (true, false),
        "test" => (false, true),
        "both" => (true, true),
        d => return Err(CliError::Usage(format!("--dist must be train, test or both, not `{d}`"))),
    };
    let env = cfg.env()?;
    let episodes = a.episodes.unwrap_or(cfg.eval_episodes);
    let seed = a.seed.unwrap_or(cfg.seed);
    let steps = if a.steps.is_empty() { vec![agent.steps()] } else { a.steps.clone() };
    let net = agent.network();
    let mut records = Vec::new();
    for &n in &steps {
        let policy = GreedyNet::new(net, n);
        let mut r = MetricsRecord::new("eval")
            .with("run", cfg.run_id())
            .with("config", cfg.hash())
            .with("recurrent_steps", n)
            .with("params", net.parameter_count())
            .with("block_macs", net.count_flops(n).block)
            .with("eval_seed", seed);
        let mut dists = Vec::new();
        if want_train {
            dists.push(("train", cfg.train_distribution()?));
        }
        if want_test {
            dists.push(("test", cfg.test_distribution()?));
        }
        for (prefix, dist) in &dists {
            evaluate(&policy, &env, dist, episodes, seed)?.extend_record(&mut r, prefix);
        }
        writeln!(out, "{r}")?;
        records.push(r);
    }
    append_records(&a.out.clone().unwrap_or_else(|| dir.join(EVAL_FILE)), &records)?;
    Ok(())
}

fn cmd_voc(a: &VocArgs, out: &mut dyn Write) -> Result<()> {
    if a.n.is_empty() {
        return Err(CliError::Usage("--n needs at least one substitution length".into()));
    }
    let (dir, cfg, agent1) = load_run(&a.checkpoint)?;
    let agent2 = match &a.against {
        Some(p) => {
            let (_, cfg2, agent) = load_run(p)?;
            if cfg2.env != cfg.env {
                return Err(CliError::Usage(format!("--against run is on {}, not {}", cfg2.env, cfg.env)));
            }
            agent
        }
        None => agent1.clone(),
    };
    let env = cfg.env()?;
    let dist = match a.dist.as_str() {
        "train" => cfg.train_distribution()?,
        "test" => cfg.test_distribution()?,
        d => return Err(CliError::Usage(format!("--dist must be train or test, not `{d}`"))),
    };
    let t1 = a.t1.unwrap_or(agent1.steps());
    let gamma = a.gamma.unwrap_or(match cfg.algo {
        Algo::Ppo => cfg.ppo.gamma,
        Algo::Dqn => cfg.dqn.gamma,
    });
    let seed = a.seed.unwrap_or(cfg.seed);
    let pi1 = GreedyNet::new(agent1.network(), t1);
    let pi2 = GreedyNet::new(agent2.network(), a.t2);
    let summary = voc_curves((&pi1, t1), (&pi2, a.t2), &env, &dist, a.trajectories, &a.n, gamma, seed)?;
    let table = a.out.clone().unwrap_or_else(|| dir.join(format!("voc-{t1}-{}.tsv", a.t2)));
    if let Some(parent) = table.parent() {
        std::fs::create_dir_all(parent)?;
    }
    write_voc_table(&table, &summary.curves)?;
    let mut records = Vec::new();
    for c in &summary.curves {
        let mut r = MetricsRecord::new("voc")
            .with("run", cfg.run_id())
            .with("trajectory", c.trajectory)
            .with("t1", c.t1)
            .with("t2", c.t2)
            .with("gamma", c.gamma)
            .with("length", c.values.len())
            .with("terminated_early", c.terminated_early);
        for (j, n) in c.ns.iter().enumerate() {
            let vals: Vec<String> = c.values.iter().map(|row| row[j].to_string()).collect();
            r.push(&format!("voc_n{n}"), vals.join(","));
        }
        records.push(r);
    }
    append_records(&dir.join(EVAL_FILE), &records)?;
    writeln!(
        out,
        "voc table={} curves={} excluded={} t1={t1} t2={}",
        table.display(),
        summary.curves.len(),
        summary.excluded,
        a.t2
    )?;
    Ok(())
}

fn cmd_yoked(a: &YokedArgs, out: &mut dyn Write) -> Result<()> {
    let active = resolve_config(&a.run)?;
    let mut passive = active.clone();
    passive.arch_steps = a.passive_steps;
    passive.seed = a.passive_seed.unwrap_or(active.seed.wrapping_add(1));
    passive.validate()?;
    let root = run_dir(&active);
    let (da, dp) = (root.join("active"), root.join("passive"));
    let o = yoked_train(&active, &passive, Some((da.clone(), dp.clone())))?;
    writeln!(out, "{}", summary("active", &o.active, &da))?;
    writeln!(out, "{}", summary("passive", &o.passive, &dp))?;
    writeln!(out, "batches={} streams_match={}", o.active.batches, o.streams_match())?;
    Ok(())
}

/// Split `key=v1,v2` into the resolved config key and its values.
pub fn parse_axis(axis: &str) -> Result<(String, Vec<String>)> {
    let (k, vs) = axis
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("axis `{axis}` is not key=v1,v2,...")))?;
    let key = match k.trim() {
        "steps" => "arch.steps",
        "arch" => "arch.kind",
        k => k,
    };
    let values: Vec<String> = vs.split(',').map(str::trim).filter(|v| !v.is_empty()).map(String::from).collect();
    if values.is_empty() {
        return Err(CliError::Usage(format!("sweep axis `{key}` has no values")));
    }
    Ok((key.to_string(), values))
}

fn cmd_sweep(a: &SweepArgs, out: &mut dyn Write) -> Result<()> {
    let (key, values) = parse_axis(&a.axis)?;
    let base = resolve_config(&a.run)?;
    // Resolve and validate every point before training any of them.
    let points = values
        .iter()
        .map(|v| {
            let mut c = base.clone();
            c.out.clear();
            c.set(&key, v)?;
            c.validate()?;
            Ok((v.clone(), c))
        })
        .collect::<Result<Vec<_>>>()?;
    let root = run_dir(&base);
    let short = key.rsplit('.').next().unwrap_or(&key).to_string();
    let mut merged = Vec::new();
    for (v, cfg) in points {
        let dir = root.join(format!("{short}-{v}"));
        let o = train(&cfg, Some(&dir))?;
        writeln!(out, "{}", summary(&format!("{key}={v}"), &o, &dir))?;
        let last = read_metrics(&dir.join(METRICS_FILE))?
            .into_iter()
            .rev()
            .find(|r| r.get("type") == Some("eval"))
            .ok_or_else(|| CliError::Usage(format!("{} has no eval record", dir.display())))?;
        let mut r = MetricsRecord::new("sweep").with("axis", &key).with("value", &v).with("dir", dir.display());
        for (k, val) in last.fields().iter().skip(1) {
            r.push(k, val);
        }
        merged.push(r);
    }
    let merged_path = root.join(SWEEP_FILE);
    std::fs::create_dir_all(&root)?;
    std::fs::write(&merged_path, merged.iter().map(|r| format!("{r}\n")).collect::<String>())?;
    writeln!(out, "sweep points={} merged={}", merged.len(), merged_path.display())?;
    Ok(())
}
