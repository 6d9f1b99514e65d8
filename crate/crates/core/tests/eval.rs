use recurdepth::config::ExperimentConfig;
use recurdepth::envs::{Env, EnvState, LightsOut, LightsOutState, Task, TaskDistribution, TaskGoal, TaskMeta};
use recurdepth::eval::{
    estimate_value, evaluate, evaluate_network, value_of_compute, voc_curves, write_voc_table, yoked_train,
    DeterministicMdp, GoalTask,
};
use recurdepth::metrics::read_metrics;
use recurdepth::nets::{ArchConfig, Network};
use recurdepth::seeding::Seeds;
use recurdepth::trainers::{TrainError, UniformRandom, METRICS_FILE};

fn lightsout3() -> (Env, LightsOut) {
    let env = Env::parse("lightsout-3x3").unwrap();
    let lo = LightsOut::new(3, 3).unwrap();
    (env, lo)
}

/// Optimal 3x3 policy: the press set solving `state ^ goal` is unique, so
/// pressing any member shortens the solution by one. `pick_high` chooses the
/// highest-index member instead of the lowest.
fn solver(pick_high: bool) -> impl Fn(&[f64]) -> usize {
    let lo = LightsOut::new(3, 3).unwrap();
    let table: Vec<u32> = {
        let mut t = vec![0u32; 512];
        for presses in 0u32..512 {
            let diff = (0..9).filter(|a| presses >> a & 1 == 1).fold(0u64, |d, a| d ^ lo.mask(a).unwrap());
            t[diff as usize] = presses;
        }
        t
    };
    move |obs: &[f64]| {
        let diff = (0..9).fold(0usize, |d, i| d | (((obs[i] != obs[9 + i]) as usize) << i));
        let presses = table[diff];
        if presses == 0 {
            0
        } else if pick_high {
            31 - presses.leading_zeros() as usize
        } else {
            presses.trailing_zeros() as usize
        }
    }
}

fn task(start: u64, goal: u64) -> Task {
    Task {
        start: EnvState::LightsOut(LightsOutState(start)),
        goal: TaskGoal::LightsOut(LightsOutState(goal)),
        meta: TaskMeta::Depth(0),
    }
}

// ------------------------------------------------------------ evaluate

#[test]
fn already_solved_tasks_are_all_successes() {
    let (env, _) = lightsout3();
    let dist = TaskDistribution::Fixed {
        name: "solved".into(),
        tasks: vec![task(0b101, 0b101), task(0, 0), task(0x1ff, 0x1ff)],
    };
    let random = UniformRandom::new(9, Seeds::new(0).stream("policy", 0));
    let report = evaluate(&random, &env, &dist, 30, 7).unwrap();
    assert_eq!(report.success_rate, 1.0);
    assert_eq!(report.successes, 30);
    assert_eq!(report.distribution, "solved");
}

#[test]
fn uniform_random_fails_deep_large_boards() {
    let env = Env::parse("lightsout-4x5").unwrap();
    let dist = TaskDistribution::lightsout(&env, 5, 10).unwrap();
    let random = UniformRandom::new(20, Seeds::new(1).stream("policy", 0));
    let report = evaluate(&random, &env, &dist, 500, 1).unwrap();
    assert!(report.success_rate <= 0.05, "{}", report.success_rate);
    assert_eq!(report.per_depth.iter().map(|d| d.episodes).sum::<usize>(), 500);
}

#[test]
fn optimal_policy_solves_everything_in_depth_steps() {
    let (env, _) = lightsout3();
    let dist = TaskDistribution::lightsout(&env, 1, 9).unwrap();
    let policy = solver(false);
    let report = evaluate(&policy, &env, &dist, 200, 3).unwrap();
    assert_eq!(report.success_rate, 1.0);
    let again = evaluate(&policy, &env, &dist, 200, 3).unwrap();
    assert_eq!(report, again);
}

#[test]
fn evaluation_never_touches_parameters() {
    let (env, _) = lightsout3();
    let net = Network::new(&ArchConfig::iru(18, 9, 16, 2, 5), 3).unwrap();
    let before = net.params().clone();
    let dist = TaskDistribution::lightsout(&env, 1, 4).unwrap();
    let r1 = evaluate_network(&net, Some(1), &env, &dist, 32, 0).unwrap();
    let r5 = evaluate_network(&net, Some(5), &env, &dist, 32, 0).unwrap();
    assert!(net.params().bitwise_eq(&before));
    assert_eq!(r1.episodes, r5.episodes);
    let (f1, f5) = (net.count_flops(1), net.count_flops(5));
    assert_eq!(f5.block, 5 * f1.block);
    assert_eq!((f1.embed, f1.head), (f5.embed, f5.head));
}

// --------------------------------------------------------- value / VoC

#[test]
fn greedy_values_follow_the_reward_convention() {
    let (env, lo) = lightsout3();
    let policy = solver(false);
    let at = |start: u64| {
        let mdp = GoalTask {
            env: &env,
            goal: TaskGoal::LightsOut(LightsOutState(0)),
        };
        estimate_value(&policy, &mdp, &EnvState::LightsOut(LightsOutState(start)), 0.99).unwrap()
    };
    let solved = at(0);
    assert_eq!((solved.value, solved.steps, solved.reached), (0.0, 0, true));
    let one = at(lo.mask(4).unwrap());
    assert_eq!((one.value, one.steps), (0.0, 1));
    let three = at(lo.mask(0).unwrap() ^ lo.mask(4).unwrap() ^ lo.mask(8).unwrap());
    assert_eq!(three.steps, 3);
    assert!((three.value - -1.99).abs() < 1e-15, "{}", three.value);
}

/// A --0--> B (-1), A --1--> C (-2), C --0--> B (-3), C --1--> B (-1),
/// B --any--> G (0, terminal). One-hot observations over {A, B, C}.
struct Scripted;

impl DeterministicMdp for Scripted {
    type State = char;

    fn observe(&self, s: &char) -> recurdepth::trainers::Result<Vec<f64>> {
        Ok(['A', 'B', 'C'].iter().map(|c| f64::from(u8::from(c == s))).collect())
    }

    fn is_goal(&self, s: &char) -> recurdepth::trainers::Result<bool> {
        Ok(*s == 'G')
    }

    fn step(&self, s: &char, a: usize) -> recurdepth::trainers::Result<(char, f64, bool)> {
        Ok(match (*s, a) {
            ('A', 0) => ('B', -1.0, false),
            ('A', _) => ('C', -2.0, false),
            ('C', 0) => ('B', -3.0, false),
            ('C', _) => ('B', -1.0, false),
            _ => ('G', 0.0, true),
        })
    }

    fn horizon(&self) -> usize {
        10
    }
}

#[test]
fn scripted_mdp_voc_matches_hand_arithmetic() {
    let pi1 = |_: &[f64]| 0usize;
    let pi2 = |_: &[f64]| 1usize;
    let g = 0.5;
    // v1(A) = -1, v1(B) = 0, v1(C) = -3; full return of pi2 from A = -2 - 0.5 = -2.5.
    assert_eq!(estimate_value(&pi1, &Scripted, &'A', g).unwrap().value, -1.0);
    assert_eq!(estimate_value(&pi1, &Scripted, &'C', g).unwrap().value, -3.0);
    let voc = |n| value_of_compute(&pi1, &pi2, &Scripted, &'A', n, g).unwrap();
    assert_eq!(voc(0).value, 0.0);
    assert_eq!(voc(1).value, 2.5); // -1 - (-2 + 0.5 * -3)
    assert_eq!(voc(2).value, 1.5); // -1 - (-2 - 0.5 + 0.25 * 0)
    assert_eq!(voc(3).value, 1.5);
    assert!(!voc(3).terminated_early);
    let full = voc(10);
    assert_eq!(full.value, -1.0 - -2.5);
    assert!(full.terminated_early);
    assert!(!full.value_truncated);
}

#[test]
fn voc_of_a_policy_over_itself_is_zero() {
    let (env, _) = lightsout3();
    let dist = TaskDistribution::lightsout(&env, 1, 9).unwrap();
    let pi = solver(false);
    let ns: Vec<usize> = (0..=10).collect();
    let summary = voc_curves((&pi, 5), (&pi, 5), &env, &dist, 32, &ns, 0.99, 4).unwrap();
    assert_eq!(summary.curves.len(), 32);
    assert_eq!(summary.excluded, 0);
    let worst = summary
        .curves
        .iter()
        .flat_map(|c| c.values.iter().flatten())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(worst <= 1e-9, "{worst}");
    // A different but equally optimal policy also loses nothing.
    let alt = solver(true);
    let summary = voc_curves((&pi, 5), (&alt, 1), &env, &dist, 32, &ns, 0.99, 4).unwrap();
    assert!(summary.curves.iter().flat_map(|c| c.values.iter().flatten()).all(|v| v.abs() <= 1e-9));
}

#[test]
fn voc_curves_skip_failed_trajectories_and_export_a_table() {
    let (env, _) = lightsout3();
    let dist = TaskDistribution::lightsout(&env, 1, 4).unwrap();
    let press_zero = |_: &[f64]| 0usize;
    let opt = solver(false);
    let summary = voc_curves((&press_zero, 5), (&opt, 1), &env, &dist, 20, &[1, 2], 0.99, 9).unwrap();
    assert_eq!(summary.curves.len() + summary.excluded, 20);
    assert!(summary.excluded > 0);
    let summary = voc_curves((&opt, 5), (&press_zero, 1), &env, &dist, 6, &[0, 1, 3], 0.99, 9).unwrap();
    for c in &summary.curves {
        for row in &c.values {
            assert_eq!(row[0], 0.0);
            assert!(row[1] >= -1e-12, "a detour never gains return");
        }
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("voc.tsv");
    write_voc_table(&path, &summary.curves).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("trajectory\tt\tn\tvalue"));
    let rows: usize = summary.curves.iter().map(|c| c.values.len() * 3).sum();
    assert_eq!(lines.count(), rows);
}

// ---------------------------------------------------------------- yoked

fn tiny(seed: u64, steps: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::preset("lightsout-3x3").unwrap();
    for (k, v) in [
        ("arch.hidden", "8"),
        ("ppo.pool", "4"),
        ("ppo.rollout_len", "16"),
        ("ppo.minibatches", "4"),
        ("ppo.epochs", "2"),
        ("budget.env_steps", "192"),
        ("eval.every", "64"),
        ("eval.episodes", "8"),
    ] {
        cfg.set(k, v).unwrap();
    }
    cfg.arch_steps = steps;
    cfg.seed = seed;
    cfg
}

#[test]
fn passive_agent_consumes_the_active_batch_stream() {
    let out = yoked_train(&tiny(1, 1), &tiny(2, 5), None).unwrap();
    assert!(out.streams_match());
    assert_eq!(out.active.batches, 3);
    assert_ne!(out.active.records, out.passive.records);
}

#[test]
fn degenerate_yoking_reproduces_the_active_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let (a, p) = (dir.path().join("active"), dir.path().join("passive"));
    let out = yoked_train(&tiny(3, 2), &tiny(3, 2), Some((a.clone(), p.clone()))).unwrap();
    assert!(out.streams_match());
    let fa = std::fs::read(a.join(METRICS_FILE)).unwrap();
    let fp = std::fs::read(p.join(METRICS_FILE)).unwrap();
    assert_eq!(fa, fp);
    assert!(out.active.agent.params().bitwise_eq(&out.passive.agent.params()));
}

#[test]
fn zero_budget_yoking_only_evaluates() {
    let mut active = tiny(4, 1);
    active.budget_env_steps = 0;
    let mut passive = tiny(5, 5);
    passive.budget_env_steps = 0;
    let dir = tempfile::tempdir().unwrap();
    let (a, p) = (dir.path().join("a"), dir.path().join("p"));
    yoked_train(&active, &passive, Some((a.clone(), p.clone()))).unwrap();
    for d in [a, p] {
        let recs = read_metrics(&d.join(METRICS_FILE)).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].get("type"), Some("eval"));
    }
}

#[test]
fn yoking_across_envs_is_rejected() {
    let other = ExperimentConfig::preset("lightsout-4x5").unwrap();
    assert!(matches!(yoked_train(&tiny(1, 1), &other, None), Err(TrainError::Config(_))));
}
