//! Scaled ordering experiments. Budgets are fixed per criterion and identical across the
//! configurations being compared; each criterion needs 2 of 3 seeds.

use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use metamimic::agent::{evaluate_one_shot, NetVariant};
use metamimic::config::{RunConfig, TrainMode};
use metamimic::demos::{generate_demos, DemoDataset, StyleTag};
use metamimic::train::{train, Datasets, LearnerKind, MetricsRow, TrainOutcome};

use crate::Verdict;

const SEEDS: [u64; 3] = [1, 2, 3];
const SMOKE_STEPS: u64 = 5_000;
const DEMO_COUNT_STEPS: u64 = 2_000;
const ABLATION_STEPS: u64 = 800;
const TASK_STEPS: u64 = 1_500;

fn demos(count: usize, style: StyleTag, seed: u64) -> Arc<DemoDataset> {
    Arc::new(generate_demos(&RunConfig::default().env, count, style, seed).unwrap())
}

fn base(mode: TrainMode, seed: u64, steps: u64) -> RunConfig {
    let mut c = RunConfig::default();
    c.mode = mode;
    c.seed = seed;
    c.agent.network = NetVariant::Small;
    c.agent.actors = 4;
    c.learner_steps = steps;
    c.eval_period = steps;
    c.checkpoint_period = u64::MAX;
    c.record_wall_clock = false;
    c
}

fn run(c: &RunConfig, data: &Datasets) -> TrainOutcome {
    c.validate().unwrap();
    train(c, data, None, Arc::new(AtomicBool::new(false))).unwrap()
}

fn last_row(out: &TrainOutcome, learner: LearnerKind, pick: impl Fn(&MetricsRow) -> Option<f64>) -> f64 {
    out.rows.iter().rev().filter(|r| r.learner == learner).find_map(pick).expect("final evaluation row")
}

fn tally(wins: &[bool]) -> (bool, usize) {
    let n = wins.iter().filter(|w| **w).count();
    (n >= 2, n)
}

pub fn imitation_smoke() -> Verdict {
    let train_set = demos(100, StyleTag::Train, 11);
    let valid = demos(50, StyleTag::Validation, 12);
    let data = Datasets { train: Some(train_set), valid: Some(Arc::clone(&valid)) };
    let mut per_step = Vec::new();
    for seed in SEEDS {
        let mut c = base(TrainMode::Imitation, seed, SMOKE_STEPS);
        c.eval_demos = 5;
        let out = run(&c, &data);
        let nets = out.imitation.expect("imitation nets");
        let m = evaluate_one_shot(|_, _, o, g| nets.act(o, Some(g)), &valid, &c.env, &c.agent).unwrap();
        per_step.push(m.mean_step_imitation_reward);
    }
    let cfg = RunConfig::default().agent;
    let threshold = 0.5 * (cfg.beta_image + cfg.beta_body);
    let (pass, n) = tally(&per_step.iter().map(|r| *r >= threshold).collect::<Vec<_>>());
    Verdict::new(pass, format!("{SMOKE_STEPS} steps, per-step validation reward {per_step:.2?} vs threshold {threshold}; {n}/3 seeds pass"))
}

pub fn demo_count() -> Verdict {
    let valid = demos(20, StyleTag::Validation, 22);
    let full = demos(100, StyleTag::Train, 21);
    let few = Arc::new(DemoDataset { demos: full.demos[..10].to_vec(), ..(*full).clone() });
    let gap = |train_set: &Arc<DemoDataset>, seed| {
        let mut c = base(TrainMode::Imitation, seed, DEMO_COUNT_STEPS);
        c.eval_demos = 10;
        let out = run(&c, &Datasets { train: Some(Arc::clone(train_set)), valid: Some(Arc::clone(&valid)) });
        last_row(&out, LearnerKind::Imitation, |r| r.eval_imitation_return_train) - last_row(&out, LearnerKind::Imitation, |r| r.eval_imitation_return_valid)
    };
    let gaps: Vec<(f64, f64)> = SEEDS.iter().map(|&s| (gap(&few, s), gap(&full, s))).collect();
    let (pass, n) = tally(&gaps.iter().map(|(g10, g100)| g10 > g100).collect::<Vec<_>>());
    Verdict::new(pass, format!("{DEMO_COUNT_STEPS} steps, train-valid gap (10 demos, 100 demos) per seed {gaps:.1?}; {n}/3 seeds ordered"))
}

pub fn network_ablation() -> Verdict {
    let data = Datasets { train: Some(demos(100, StyleTag::Train, 31)), valid: Some(demos(10, StyleTag::Validation, 32)) };
    let variants = [(NetVariant::Large, true), (NetVariant::Large, false), (NetVariant::Small, false)];
    let mut scores = Vec::new();
    for seed in SEEDS {
        let s: Vec<f64> = variants
            .iter()
            .map(|&(network, norm)| {
                let mut c = base(TrainMode::Imitation, seed, ABLATION_STEPS);
                c.agent.network = network;
                c.agent.instance_norm = norm;
                c.eval_demos = 10;
                last_row(&run(&c, &data), LearnerKind::Imitation, |r| r.eval_imitation_return_valid)
            })
            .collect();
        scores.push(s);
    }
    let (pass, n) = tally(&scores.iter().map(|s| s[0] >= s[1] && s[1] >= s[2]).collect::<Vec<_>>());
    Verdict::new(pass, format!("{ABLATION_STEPS} steps, validation return (large+norm, large, small) per seed {scores:.1?}; {n}/3 seeds ordered"))
}

struct TaskRun {
    final_success: f64,
    first_half: Option<u64>,
}

fn task_run(mode: TrainMode, seed: u64, data: &Datasets) -> TaskRun {
    let mut c = base(mode, seed, TASK_STEPS);
    c.eval_period = TASK_STEPS / 10;
    c.eval_demos = 2;
    c.eval_episodes = 10;
    let out = run(&c, data);
    let task_rows: Vec<&MetricsRow> = out.rows.iter().filter(|r| r.learner == LearnerKind::Task).collect();
    TaskRun {
        final_success: task_rows.iter().rev().find_map(|r| r.stack_success_rate).expect("task evaluation"),
        first_half: task_rows.iter().find(|r| r.stack_success_rate.is_some_and(|s| s >= 0.5)).map(|r| r.learner_step),
    }
}

pub fn task_policies() -> Verdict {
    let data = Datasets { train: Some(demos(100, StyleTag::Train, 41)), valid: Some(demos(10, StyleTag::Validation, 42)) };
    let mut wins = Vec::new();
    let mut detail = Vec::new();
    for seed in SEEDS {
        let [joint, d4pg, fd, cur_d4pg, cur_joint] =
            [TrainMode::Joint, TrainMode::D4pg, TrainMode::D4pgfd, TrainMode::CurriculumD4pg, TrainMode::CurriculumMetamimic].map(|m| task_run(m, seed, &data));
        // A run that never reaches 50% counts as needing more than the budget.
        let fd_fast = fd.first_half.is_some_and(|f| joint.first_half.is_none_or(|j| f <= j));
        let ok = joint.final_success > d4pg.final_success
            && cur_d4pg.final_success >= d4pg.final_success
            && cur_joint.final_success >= joint.final_success
            && fd_fast;
        wins.push(ok);
        detail.push(format!(
            "seed {seed}: joint {:.2} d4pg {:.2} cur_d4pg {:.2} cur_joint {:.2}, 50% at fd {:?} joint {:?}",
            joint.final_success, d4pg.final_success, cur_d4pg.final_success, cur_joint.final_success, fd.first_half, joint.first_half
        ));
    }
    let (pass, n) = tally(&wins);
    Verdict::new(pass, format!("{TASK_STEPS} steps; {}; {n}/3 seeds ordered", detail.join("; ")))
}
