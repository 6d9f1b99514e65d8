use std::path::Path;
use std::process::{Command, Output};

use recurdepth::cli::{parse_axis, EVAL_FILE, SWEEP_FILE};
use recurdepth::config::ExperimentConfig;
use recurdepth::metrics::read_metrics;
use recurdepth::trainers::{CHECKPOINT_FILE, CONFIG_FILE, METRICS_FILE};

const TINY: &str = "\
# smallest PPO run that still exercises every stage
env = lightsout-3x3
arch.hidden = 8
arch.steps = 2
ppo.pool = 4
ppo.rollout_len = 16
ppo.minibatches = 4
ppo.epochs = 1
budget.env_steps = 128
eval.every = 64
eval.episodes = 8
";

fn bin(args: &[&str], out_root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_recurdepth"))
        .args(args)
        .env("RECURDEPTH_OUT", out_root)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn tiny_config(dir: &Path) -> String {
    let p = dir.join("tiny.cfg");
    std::fs::write(&p, TINY).unwrap();
    p.display().to_string()
}

#[test]
fn train_writes_a_run_directory_and_reruns_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for d in [&a, &b] {
        let o = bin(&["train", "--config", &cfg, "--seed", "7", "--out", d.to_str().unwrap()], tmp.path());
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(stdout(&o).starts_with("trained run="));
    }
    for f in [METRICS_FILE, CONFIG_FILE, CHECKPOINT_FILE] {
        assert!(a.join(f).is_file(), "{f}");
    }
    assert_eq!(std::fs::read(a.join(METRICS_FILE)).unwrap(), std::fs::read(b.join(METRICS_FILE)).unwrap());
    let saved = ExperimentConfig::load(&a.join(CONFIG_FILE)).unwrap();
    assert_eq!(saved.seed, 7);
    assert_eq!(saved.arch_hidden, 8);
}

#[test]
fn default_output_root_comes_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let o = bin(&["train", "--config", &cfg, "--budget", "0"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let mut c = ExperimentConfig::load(Path::new(&cfg)).unwrap();
    c.budget_env_steps = 0;
    assert!(tmp.path().join(c.run_id()).join(METRICS_FILE).is_file());
}

#[test]
fn unknown_keys_exit_2_naming_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("bad.cfg");
    std::fs::write(&p, "env = lightsout-3x3\nppo.learning_rate = 0.1\n").unwrap();
    let o = bin(&["train", "--config", p.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("ppo.learning_rate"), "{}", stderr(&o));
    let o = bin(&["show-config", "--override", "arch.depth=3"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("arch.depth"));
    let o = bin(&["frobnicate"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn show_config_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let o = bin(&["show-config", "--config", &cfg, "--steps", "3", "--override", "ppo.lr=0.0005"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let parsed = ExperimentConfig::parse(&text).unwrap();
    assert_eq!(parsed.arch_steps, 3);
    assert_eq!(parsed.ppo.lr, 0.0005);
    assert!(text.contains(&format!("# hash = {}", parsed.hash())));
}

#[test]
fn eval_reports_each_step_count_without_touching_the_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let run = tmp.path().join("run");
    let o = bin(&["train", "--config", &cfg, "--out", run.to_str().unwrap()], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let before = std::fs::read(run.join(CHECKPOINT_FILE)).unwrap();
    let o = bin(
        &["eval", "--checkpoint", run.to_str().unwrap(), "--steps", "1,2,3,4,5,6,7,8,9,10", "--episodes", "4"],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 10);
    assert_eq!(std::fs::read(run.join(CHECKPOINT_FILE)).unwrap(), before);
    let recs = read_metrics(&run.join(EVAL_FILE)).unwrap();
    assert_eq!(recs.len(), 10);
    let params: Vec<&str> = recs.iter().map(|r| r.get("params").unwrap()).collect();
    assert!(params.windows(2).all(|w| w[0] == w[1]));
    let macs = |i: usize| recs[i].get_f64("block_macs").unwrap();
    assert_eq!(macs(4), 5.0 * macs(0));
    assert_eq!(recs[0].get("test_episodes"), Some("4"));
}

#[test]
fn missing_checkpoint_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let ghost = tmp.path().join("nope");
    let o = bin(&["eval", "--checkpoint", ghost.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let o = bin(&["voc", "--checkpoint", ghost.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn voc_writes_a_table_and_zero_for_equal_compute() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let run = tmp.path().join("run");
    assert!(bin(&["train", "--config", &cfg, "--out", run.to_str().unwrap()], tmp.path()).status.success());
    let table = tmp.path().join("same.tsv");
    let o = bin(
        &[
            "voc", "--checkpoint", run.to_str().unwrap(), "--t1", "2", "--t2", "2", "--n", "0,1,3",
            "--dist", "train", "--trajectories", "16", "--out", table.to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&table).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("trajectory\tt\tn\tvalue"));
    for l in lines {
        let v: f64 = l.rsplit('\t').next().unwrap().parse().unwrap();
        assert!(v.abs() <= 1e-9, "{l}");
    }
    let empty = bin(&["voc", "--checkpoint", run.to_str().unwrap(), "--n", ""], tmp.path());
    assert_eq!(empty.status.code(), Some(2));
}

#[test]
fn yoked_writes_paired_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let root = tmp.path().join("yoked");
    let o = bin(
        &["yoked", "--config", &cfg, "--steps", "1", "--passive-steps", "3", "--out", root.to_str().unwrap()],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("streams_match=true"));
    for side in ["active", "passive"] {
        assert!(root.join(side).join(METRICS_FILE).is_file());
    }
    let passive = ExperimentConfig::load(&root.join("passive").join(CONFIG_FILE)).unwrap();
    assert_eq!(passive.arch_steps, 3);
}

#[test]
fn sweep_runs_every_point_once() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let root = tmp.path().join("sweep");
    let o = bin(
        &["sweep", "--config", &cfg, "--axis", "steps=1,2,5", "--budget", "64", "--out", root.to_str().unwrap()],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    for s in ["1", "2", "5"] {
        assert!(root.join(format!("steps-{s}")).join(METRICS_FILE).is_file());
    }
    let merged = read_metrics(&root.join(SWEEP_FILE)).unwrap();
    let values: Vec<&str> = merged.iter().map(|r| r.get("value").unwrap()).collect();
    assert_eq!(values, ["1", "2", "5"]);
    assert!(merged.iter().all(|r| r.get("test_success").is_some()));

    let o = bin(&["sweep", "--config", &cfg, "--axis", "steps="], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let o = bin(&["sweep", "--config", &cfg, "--axis", "steps=1,0"], tmp.path());
    assert_eq!(o.status.code(), Some(2), "every point validated before training");
}

#[test]
fn axis_aliases() {
    assert_eq!(parse_axis("steps=1,2").unwrap(), ("arch.steps".to_string(), vec!["1".into(), "2".into()]));
    assert_eq!(parse_axis("arch=iru,mlp").unwrap().0, "arch.kind");
    assert!(parse_axis("seed").is_err());
    assert!(parse_axis("seed= , ").is_err());
}
