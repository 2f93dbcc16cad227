//! Imitation and task agents: networks, actors, learners, baselines and evaluation.

mod actors;
mod eval;
mod learner;
mod nets;
mod reward;

use thiserror::Error;

pub use actors::{fd_seed_replay, EpisodeStats, ImitationActor, TaskActor, WindowBuilder};
pub use eval::{evaluate_one_shot, evaluate_task_policy, EvalMetrics, TaskEvalMetrics};
pub use learner::{ImitationLearner, LearnerStep, TaskLearner};
pub use nets::{act_with, policy_input, AgentNets, LearnSample, LearnerSettings, NetShape, NetVariant, UpdateReport, HIDDEN};
pub use reward::{compute_imitation_reward, early_termination};

use crate::demos::DemoError;
use crate::distributional::{DistError, SupportSpec};
use crate::env::EnvError;
use crate::net::NetError;
use crate::replay::ReplayError;
use crate::transport::TransportError;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("empty minibatch")]
    EmptyBatch,
    #[error("invalid agent config: {0}")]
    InvalidConfig(String),
    #[error("replay unreachable after {attempts} attempts: {last}")]
    ReplayUnreachable { attempts: usize, last: String },
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error(transparent)]
    Demo(#[from] DemoError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Transport(#[from] TransportError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgentConfig {
    /// Weight of the image term of the imitation reward.
    pub beta_image: f64,
    /// Weight of the body-feature term of the imitation reward.
    pub beta_body: f64,
    pub gamma: f64,
    pub n_step: usize,
    pub batch_size: usize,
    pub actors: usize,
    pub policy_lr: f64,
    pub critic_lr: f64,
    /// Weight of the squared pre-tanh policy outputs in the policy loss, which uses
    /// values scaled by the support width.
    pub preact_penalty: f64,
    pub target_update_period: u64,
    /// Std of the Gaussian exploration noise at the start of training.
    pub sigma: f64,
    /// Per-episode multiplicative decay of `sigma`.
    pub sigma_decay: f64,
    pub early_termination_cutoff: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub v_bins: usize,
    /// Upper end of the imitation critic's support.
    pub imitation_v_max: f64,
    pub curriculum: bool,
    pub curriculum_max_step: usize,
    /// Fraction of each task-learner batch read from the imitation buffer.
    pub mix_ratio: f64,
    /// Learner steps between parameter publications.
    pub snapshot_period: u64,
    pub network: NetVariant,
    pub instance_norm: bool,
    pub residual: bool,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            beta_image: 15.0,
            beta_body: 2.0,
            gamma: 0.99,
            n_step: 5,
            batch_size: 64,
            actors: 4,
            policy_lr: 1e-4,
            critic_lr: 1e-4,
            preact_penalty: 1e-3,
            target_update_period: 100,
            sigma: 0.1,
            sigma_decay: 0.999,
            early_termination_cutoff: 0.5,
            v_min: 0.0,
            v_max: 100.0,
            v_bins: 101,
            imitation_v_max: 1700.0,
            curriculum: false,
            curriculum_max_step: 60,
            mix_ratio: 0.5,
            snapshot_period: 50,
            network: NetVariant::Large,
            instance_norm: true,
            residual: false,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: &str| Err(AgentError::InvalidConfig(m.to_string()));
        let positive = [
            ("beta_image", self.beta_image),
            ("beta_body", self.beta_body),
            ("early_termination_cutoff", self.early_termination_cutoff),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return bad(&format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [("policy_lr", self.policy_lr), ("critic_lr", self.critic_lr), ("preact_penalty", self.preact_penalty), ("sigma", self.sigma)] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(&format!("{name} must be non-negative, got {v}"));
            }
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(&format!("gamma {} outside (0, 1]", self.gamma));
        }
        if !(self.sigma_decay > 0.0 && self.sigma_decay <= 1.0) {
            return bad(&format!("sigma_decay {} outside (0, 1]", self.sigma_decay));
        }
        if !(0.0..=1.0).contains(&self.mix_ratio) {
            return bad(&format!("mix_ratio {} outside [0, 1]", self.mix_ratio));
        }
        for (name, v) in [
            ("n_step", self.n_step),
            ("batch_size", self.batch_size),
            ("actors", self.actors),
            ("curriculum_max_step", self.curriculum_max_step),
        ] {
            if v == 0 {
                return bad(&format!("{name} must be positive"));
            }
        }
        if self.snapshot_period == 0 {
            return bad("snapshot_period must be positive");
        }
        self.task_support()?;
        self.imitation_support()?;
        Ok(())
    }

    pub fn task_support(&self) -> Result<SupportSpec, AgentError> {
        Ok(SupportSpec::new(self.v_min, self.v_max, self.v_bins)?)
    }

    pub fn imitation_support(&self) -> Result<SupportSpec, AgentError> {
        Ok(SupportSpec::new(self.v_min, self.imitation_v_max, self.v_bins)?)
    }

    pub fn settings(&self) -> LearnerSettings {
        LearnerSettings {
            policy_lr: self.policy_lr,
            critic_lr: self.critic_lr,
            preact_penalty: self.preact_penalty,
            target_update_period: self.target_update_period,
        }
    }

    pub fn shape(&self, grid: usize, goal_conditioned: bool) -> NetShape {
        NetShape { variant: self.network, instance_norm: self.instance_norm, residual: self.residual, grid, goal_conditioned }
    }
}
