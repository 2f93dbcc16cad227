use crate::demos::{DemoDataset, Demonstration};
use crate::env::{BlockWorld, EnvConfig, Observation, Stage};
use crate::replay::Action;

use super::reward::compute_imitation_reward;
use super::{AgentConfig, AgentError};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalMetrics {
    pub episodes: usize,
    pub mean_imitation_return: f64,
    /// Imitation reward averaged over every evaluated step.
    pub mean_step_imitation_reward: f64,
    pub mean_task_return: f64,
    /// Mean task return divided by the dataset's mean demonstration return.
    pub normalized_task_return: f64,
    pub stack_success_rate: f64,
}

/// Follows each demonstration once with a deterministic goal-conditioned policy. The
/// policy sees the demonstration, the step index, the current observation and the goal.
pub fn evaluate_one_shot<P>(mut policy: P, dataset: &DemoDataset, env: &EnvConfig, config: &AgentConfig) -> Result<EvalMetrics, AgentError>
where
    P: FnMut(&Demonstration, usize, &Observation, &Observation) -> Result<Action, AgentError>,
{
    let mut world = BlockWorld::new(env.clone())?;
    let (mut imitation, mut task, mut steps, mut successes) = (0.0, 0.0, 0usize, 0usize);
    for demo in &dataset.demos {
        let mut obs = world.reset_to_state(demo.initial_state())?;
        let mut stage = world.stage();
        for t in 0..demo.len() - 1 {
            let goal = demo.observation(t + 1);
            let action = policy(demo, t, &obs, goal)?.map(|v| v.clamp(-1.0, 1.0));
            let out = world.step(&action);
            imitation += compute_imitation_reward(&out.observation, goal, config.beta_image, config.beta_body)?;
            task += out.reward;
            steps += 1;
            stage = out.stage;
            obs = out.observation;
            if out.done {
                break;
            }
        }
        successes += (stage == Stage::Stacked) as usize;
    }
    let n = dataset.len().max(1) as f64;
    let demo_mean = dataset.mean_cumulative_task_reward();
    Ok(EvalMetrics {
        episodes: dataset.len(),
        mean_imitation_return: imitation / n,
        mean_step_imitation_reward: if steps == 0 { 0.0 } else { imitation / steps as f64 },
        mean_task_return: task / n,
        normalized_task_return: if demo_mean > 0.0 { task / n / demo_mean } else { 0.0 },
        stack_success_rate: successes as f64 / n,
    })
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TaskEvalMetrics {
    pub episodes: usize,
    pub mean_return: f64,
    /// Fraction of episodes that end with the blocks stacked.
    pub success_rate: f64,
}

/// Runs a deterministic unconditional policy for a full episode from each seed.
pub fn evaluate_task_policy<P>(mut policy: P, env: &EnvConfig, seeds: &[u64]) -> Result<TaskEvalMetrics, AgentError>
where
    P: FnMut(&Observation) -> Result<Action, AgentError>,
{
    let mut world = BlockWorld::new(env.clone())?;
    let (mut total, mut successes) = (0.0, 0usize);
    for &seed in seeds {
        let (_, mut obs) = world.reset(seed);
        loop {
            let action = policy(&obs)?.map(|v| v.clamp(-1.0, 1.0));
            let out = world.step(&action);
            total += out.reward;
            obs = out.observation;
            if out.done {
                successes += (out.stage == Stage::Stacked) as usize;
                break;
            }
        }
    }
    let n = seeds.len().max(1) as f64;
    Ok(TaskEvalMetrics { episodes: seeds.len(), mean_return: total / n, success_rate: successes as f64 / n })
}
