//! Trains a tiny imitation agent, writes a checkpoint, loads it back and evaluates it
//! one-shot on unseen validation demonstrations next to two reference policies.
//!
//! cargo run --example evaluate_checkpoint

use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use metamimic::agent::evaluate_one_shot;
use metamimic::config::{RunConfig, TrainMode};
use metamimic::demos::{generate_demos, StyleTag};
use metamimic::train::{load_nets, read_manifest, train, Datasets};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile_dir()?;
    let mut c = RunConfig::default();
    c.mode = TrainMode::Imitation;
    c.agent.actors = 1;
    c.replay.min_fill = 128;
    c.learner_steps = 200;
    c.eval_period = 200;
    c.eval_demos = 2;
    let valid = generate_demos(&c.env, 10, StyleTag::Validation, 2)?;
    let data = Datasets { train: Some(Arc::new(generate_demos(&c.env, 20, StyleTag::Train, 1)?)), valid: None };
    train(&c, &data, Some(&dir), Arc::new(AtomicBool::new(false)))?;

    let ck = dir.join("checkpoint");
    for (k, v) in read_manifest(&ck)? {
        println!("{k:<14} {v}");
    }
    let agent = c.effective_agent();
    let nets = load_nets(&ck, "imitation", &agent, agent.shape(c.env.grid, true))?.ok_or("no imitation networks")?;

    let learned = evaluate_one_shot(|_, _, o, g| nets.act(o, Some(g)), &valid, &c.env, &agent)?;
    let still = evaluate_one_shot(|_, _, _, _| Ok([0.0; 3]), &valid, &c.env, &agent)?;
    println!("{:<10} {:>14} {:>10} {:>10}", "policy", "reward/step", "norm task", "success");
    for (name, m) in [("learned", learned), ("zero", still)] {
        println!("{name:<10} {:>14.3} {:>10.3} {:>10.2}", m.mean_step_imitation_reward, m.normalized_task_return, m.stack_success_rate);
    }
    println!("oracle     {:>14.3}", agent.beta_image + agent.beta_body);
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

fn tempfile_dir() -> std::io::Result<std::path::PathBuf> {
    let dir = std::env::temp_dir().join(format!("metamimic-eval-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}
