use crate::demos::Demonstration;
use crate::env::{EnvState, Observation};

use super::AgentError;

/// `beta_image * exp(-|image diff|^2) + beta_body * exp(-|body diff|^2)`.
pub fn compute_imitation_reward(next: &Observation, goal: &Observation, beta_image: f64, beta_body: f64) -> Result<f64, AgentError> {
    if next.image.len() != goal.image.len() || next.body.len() != goal.body.len() {
        return Err(AgentError::DimMismatch(format!(
            "observation image {} body {} vs goal image {} body {}",
            next.image.len(),
            next.body.len(),
            goal.image.len(),
            goal.body.len()
        )));
    }
    let image: f64 = next.image.iter().zip(&goal.image).map(|(a, b)| (a - b) * (a - b)).sum();
    let body: f64 = next.body.iter().zip(&goal.body).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(beta_image * (-image).exp() + beta_body * (-body).exp())
}

fn hand_to_block(s: &EnvState) -> [f64; 2] {
    [s.block_a[0] - s.gripper[0], s.block_a[1] - s.gripper[1]]
}

/// True when the gripper-to-block-A vector of `state` is farther than `cutoff` from the
/// same vector at step `t` of the demonstration, or `t` is past the demonstration.
pub fn early_termination(state: &EnvState, demo: &Demonstration, t: usize, cutoff: f64) -> bool {
    let Some(reference) = demo.states.get(t) else { return true };
    let (a, b) = (hand_to_block(state), hand_to_block(reference));
    (a[0] - b[0]).hypot(a[1] - b[1]) > cutoff
}
