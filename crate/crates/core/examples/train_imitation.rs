//! Trains the goal-conditioned imitation agent for a short budget with in-process actors
//! and prints the metrics rows. Pass `key=value` pairs to override config keys, e.g.
//! `learner_steps=2000 actors=4`.
//!
//! cargo run --example train_imitation -- [key=value ...]

use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use metamimic::config::{RunConfig, TrainMode};
use metamimic::demos::{generate_demos, StyleTag};
use metamimic::train::{train, Datasets, CSV_COLUMNS};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut c = RunConfig::default();
    c.mode = TrainMode::Imitation;
    c.agent.actors = 2;
    c.replay.min_fill = 256;
    c.learner_steps = 600;
    c.eval_period = 200;
    c.eval_demos = 5;
    for kv in std::env::args().skip(1) {
        let (k, v) = kv.split_once('=').ok_or("overrides are key=value")?;
        c.set(k.trim(), v.trim())?;
    }
    c.validate()?;

    let data = Datasets {
        train: Some(Arc::new(generate_demos(&c.env, c.demo_count_train, StyleTag::Train, 1)?)),
        valid: Some(Arc::new(generate_demos(&c.env, c.demo_count_valid.min(20), StyleTag::Validation, 2)?)),
    };
    let out = train(&c, &data, None, Arc::new(AtomicBool::new(false)))?;
    println!("{}", CSV_COLUMNS.join(","));
    for row in &out.rows {
        println!("{}", row.to_csv());
    }
    println!("{} actor episodes, replay holds {} imitation windows", out.actor_episodes, out.replay.imitation_len);
    Ok(())
}
