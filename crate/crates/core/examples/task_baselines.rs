//! Runs the task-policy variants (plain, demonstration-seeded replay, curriculum starts and
//! the joint imitation+task system) under one learner-step budget and prints the final
//! stacking success rate of each.
//!
//! cargo run --example task_baselines -- [learner_steps]

use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use metamimic::config::{RunConfig, TrainMode};
use metamimic::demos::{generate_demos, StyleTag};
use metamimic::train::{train, Datasets, LearnerKind};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let steps: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(400);
    let env = RunConfig::default().env;
    let data = Datasets {
        train: Some(Arc::new(generate_demos(&env, 30, StyleTag::Train, 1)?)),
        valid: Some(Arc::new(generate_demos(&env, 5, StyleTag::Validation, 2)?)),
    };
    for mode in [TrainMode::D4pg, TrainMode::D4pgfd, TrainMode::CurriculumD4pg, TrainMode::Joint, TrainMode::CurriculumMetamimic] {
        let mut c = RunConfig::default();
        c.mode = mode;
        c.agent.actors = 2;
        c.replay.min_fill = 256;
        c.learner_steps = steps;
        c.eval_period = steps;
        c.eval_demos = 2;
        c.eval_episodes = 10;
        c.validate()?;
        let out = train(&c, &data, None, Arc::new(AtomicBool::new(false)))?;
        let row = out.rows.iter().rev().find(|r| r.learner == LearnerKind::Task).ok_or("no task row")?;
        println!(
            "{:<22} success {:.2}  normalized return {:.3}  task replay {} ({} protected)",
            mode.name(),
            row.stack_success_rate.unwrap_or(0.0),
            row.eval_norm_task_return_train.unwrap_or(0.0),
            out.replay.task_len,
            out.replay.task_protected
        );
    }
    Ok(())
}
