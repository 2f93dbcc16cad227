use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use metamimic::agent::{compute_imitation_reward, evaluate_one_shot, AgentConfig, NetVariant};
use metamimic::config::{RunConfig, TrainMode};
use metamimic::demos::{generate_demos, StyleTag};
use metamimic::env::{BlockWorld, EnvConfig};
use metamimic::train::{train, Datasets};

use crate::Verdict;

pub fn run() -> Verdict {
    let env = EnvConfig::default();
    let cfg = AgentConfig::default();
    let data = generate_demos(&env, 20, StyleTag::Validation, 3).unwrap();

    // Step-by-step replay of the hidden actions, scored against the next demo frame.
    let mut worst: f64 = 0.0;
    for demo in &data.demos {
        let mut world = BlockWorld::new(env.clone()).unwrap();
        world.reset_to_state(&demo.states[0]).unwrap();
        for (t, a) in demo.actions.as_ref().unwrap().iter().enumerate() {
            let out = world.step(a);
            let r = compute_imitation_reward(&out.observation, demo.observation(t + 1), cfg.beta_image, cfg.beta_body).unwrap();
            worst = worst.max((r - (cfg.beta_image + cfg.beta_body)).abs());
        }
    }
    let m = evaluate_one_shot(|d, t, _, _| Ok(d.actions.as_ref().unwrap()[t]), &data, &env, &cfg).unwrap();
    let oracle = cfg.beta_image + cfg.beta_body;
    let pass = worst <= 1e-9 && (m.mean_step_imitation_reward - oracle).abs() <= 1e-9 && (m.normalized_task_return - 1.0).abs() <= 1e-9;
    Verdict::new(
        pass,
        format!(
            "max per-step deviation from {oracle} is {worst:.1e}; evaluate_one_shot per-step {:.12}, normalized task return {:.12}",
            m.mean_step_imitation_reward, m.normalized_task_return
        ),
    )
}

fn determinism_config() -> RunConfig {
    let mut c = RunConfig::default();
    c.mode = TrainMode::Imitation;
    c.seed = 17;
    c.agent.network = NetVariant::Small;
    c.agent.actors = 1;
    c.agent.sigma = 0.0;
    c.replay.min_fill = 256;
    c.learner_steps = 1_000;
    c.eval_period = 250;
    c.eval_demos = 5;
    c.record_wall_clock = false;
    c
}

pub fn determinism() -> Verdict {
    let c = determinism_config();
    let data = Datasets {
        train: Some(Arc::new(generate_demos(&c.env, 20, StyleTag::Train, 5).unwrap())),
        valid: Some(Arc::new(generate_demos(&c.env, 5, StyleTag::Validation, 6).unwrap())),
    };
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        train(&c, &data, Some(d.path()), Arc::new(AtomicBool::new(false))).unwrap();
    }
    let csv: Vec<Vec<u8>> = dirs.iter().map(|d| std::fs::read(d.path().join("metrics.csv")).unwrap()).collect();
    let rows = csv[0].iter().filter(|&&b| b == b'\n').count() - 1;
    Verdict::new(csv[0] == csv[1] && rows > 0, format!("two 1000-step single-actor runs, {rows} rows, CSVs identical: {}", csv[0] == csv[1]))
}
