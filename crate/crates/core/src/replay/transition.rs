use std::sync::Arc;

use crate::env::{Observation, ACTION_DIM};

use super::ReplayError;

pub type Action = [f64; ACTION_DIM];

/// N-step window from an imitation rollout.
#[derive(Clone, Debug, PartialEq)]
pub struct ImitationTransition {
    pub obs: Arc<Observation>,
    pub action: Action,
    /// Observation N steps later (or at episode end).
    pub next_obs: Arc<Observation>,
    pub reward_imitate: f64,
    pub reward_task: f64,
    /// `gamma^N`, or 0 when the episode terminated inside the window.
    pub discount: f64,
    /// Goal paired with `next_obs` for bootstrapping.
    pub next_goal: Arc<Observation>,
    /// Goal the action was chosen for.
    pub goal: Arc<Observation>,
    pub demo_id: u32,
    pub step_index: u32,
}

/// N-step window from an unconditional rollout.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskTransition {
    pub obs: Arc<Observation>,
    pub action: Action,
    pub next_obs: Arc<Observation>,
    pub reward_task: f64,
    pub discount: f64,
}

fn check_common(action: &Action, rewards: &[f64], discount: f64) -> Result<(), ReplayError> {
    if !(discount == 0.0 || (discount > 0.0 && discount <= 1.0)) {
        return Err(ReplayError::InvalidTransition(format!("discount {discount} outside {{0}} or (0, 1]")));
    }
    if rewards.iter().chain(action.iter()).any(|v| !v.is_finite()) {
        return Err(ReplayError::InvalidTransition("non-finite reward or action".into()));
    }
    Ok(())
}

impl ImitationTransition {
    pub fn validate(&self) -> Result<(), ReplayError> {
        check_common(&self.action, &[self.reward_imitate, self.reward_task], self.discount)
    }

    /// Task view: drops imitation reward and goals.
    pub fn to_task(&self) -> TaskTransition {
        TaskTransition {
            obs: Arc::clone(&self.obs),
            action: self.action,
            next_obs: Arc::clone(&self.next_obs),
            reward_task: self.reward_task,
            discount: self.discount,
        }
    }
}

impl TaskTransition {
    pub fn validate(&self) -> Result<(), ReplayError> {
        check_common(&self.action, &[self.reward_task], self.discount)
    }
}
