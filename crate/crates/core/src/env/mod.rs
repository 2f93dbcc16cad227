//! Deterministic 2-D kinematic block stacking.
//!
//! A gripper moves in a vertical plane (x to the right, y up, both in `[0, 1]`), picks up
//! block A and puts it on block B. Task reward is a per-step constant that depends only
//! on the current [`Stage`].

mod record;
mod render;

pub use record::{export_state, import_state, STATE_RECORD_LEN, STATE_RECORD_VERSION};
pub use render::render;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const BODY_DIM: usize = 5;
pub const ACTION_DIM: usize = 3;
pub const IMAGE_CHANNELS: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("corrupt state record: {0}")]
    CorruptRecord(String),
    #[error("invalid environment config: {0}")]
    InvalidConfig(String),
}

/// Geometry, tolerances and reward constants of the world.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvConfig {
    /// Image side length in cells.
    pub grid: usize,
    /// World units travelled per step at unit commanded velocity.
    pub step_size: f64,
    pub grasp_radius: f64,
    /// Lateral distance from block B within which a released block snaps onto it.
    pub stack_tolerance: f64,
    /// Height of block A above the floor that counts as lifted.
    pub lift_height: f64,
    pub floor_y: f64,
    pub block_size: f64,
    /// Aperture change per step.
    pub grip_rate: f64,
    pub grasp_threshold: f64,
    pub min_separation: f64,
    /// Per-step reward for None, Reaching, Lifting, Stacked.
    pub stage_rewards: [f64; 4],
    pub horizon: u32,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            grid: 16,
            step_size: 0.03,
            grasp_radius: 0.05,
            stack_tolerance: 0.04,
            lift_height: 0.3,
            floor_y: 0.05,
            block_size: 0.08,
            grip_rate: 0.6,
            grasp_threshold: 0.5,
            min_separation: 0.2,
            stage_rewards: [0.0, 0.1, 0.3, 1.0],
            horizon: 200,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let positive = [
            ("step_size", self.step_size),
            ("grasp_radius", self.grasp_radius),
            ("stack_tolerance", self.stack_tolerance),
            ("lift_height", self.lift_height),
            ("block_size", self.block_size),
            ("grip_rate", self.grip_rate),
            ("grasp_threshold", self.grasp_threshold),
            ("min_separation", self.min_separation),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(EnvError::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if self.grid < 4 {
            return Err(EnvError::InvalidConfig(format!("grid must be at least 4, got {}", self.grid)));
        }
        if self.horizon == 0 {
            return Err(EnvError::InvalidConfig("horizon must be positive".into()));
        }
        if !(0.0..0.5).contains(&self.floor_y) || self.floor_y + self.block_size + self.lift_height >= 1.0 {
            return Err(EnvError::InvalidConfig("floor, block size and lift height do not fit the arena".into()));
        }
        if self.stage_rewards.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(EnvError::InvalidConfig("stage rewards must be non-negative".into()));
        }
        if self.min_separation >= 0.8 {
            return Err(EnvError::InvalidConfig("min_separation too large for the block sampler".into()));
        }
        Ok(())
    }

    /// Stable fingerprint of every field, stored in dataset headers.
    pub fn hash(&self) -> u64 {
        let canonical = format!(
            "grid={};step_size={:e};grasp_radius={:e};stack_tolerance={:e};lift_height={:e};floor_y={:e};\
             block_size={:e};grip_rate={:e};grasp_threshold={:e};min_separation={:e};stage_rewards={:e},{:e},{:e},{:e};horizon={}",
            self.grid,
            self.step_size,
            self.grasp_radius,
            self.stack_tolerance,
            self.lift_height,
            self.floor_y,
            self.block_size,
            self.grip_rate,
            self.grasp_threshold,
            self.min_separation,
            self.stage_rewards[0],
            self.stage_rewards[1],
            self.stage_rewards[2],
            self.stage_rewards[3],
            self.horizon
        );
        let digest = Sha256::digest(canonical.as_bytes());
        u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
    }

    pub fn image_len(&self) -> usize {
        IMAGE_CHANNELS * self.grid * self.grid
    }

    pub fn stage_reward(&self, stage: Stage) -> f64 {
        self.stage_rewards[stage as usize]
    }
}

/// Full simulator state. Positions are block/gripper centers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvState {
    pub gripper: [f64; 2],
    pub velocity: [f64; 2],
    /// 0 closed, 1 open.
    pub aperture: f64,
    pub block_a: [f64; 2],
    pub block_b: [f64; 2],
    pub held: bool,
    pub step: u32,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    #[default]
    None = 0,
    Reaching = 1,
    Lifting = 2,
    Stacked = 3,
}

/// Image of the scene plus proprioceptive body features.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub grid: usize,
    /// `[channel][row][col]`, channels gripper, block A, block B; row 0 is the floor side.
    pub image: Vec<f64>,
    /// Gripper x, y, vx, vy, aperture.
    pub body: [f64; BODY_DIM],
}

/// Result of one environment transition.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub state: EnvState,
    pub observation: Observation,
    pub reward: f64,
    pub stage: Stage,
    pub done: bool,
}

pub fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

impl EnvConfig {
    /// Seeded initial state: blocks on the floor at least `min_separation` apart, gripper
    /// somewhere above them, open and at rest.
    pub fn sample_initial_state(&self, seed: u64) -> EnvState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gripper = [rng.random_range(0.1..0.9), rng.random_range(0.3..0.9)];
        let (ax, bx) = loop {
            let ax: f64 = rng.random_range(0.1..0.9);
            let bx: f64 = rng.random_range(0.1..0.9);
            if (ax - bx).abs() >= self.min_separation {
                break (ax, bx);
            }
        };
        EnvState {
            gripper,
            velocity: [0.0, 0.0],
            aperture: 1.0,
            block_a: [ax, self.floor_y],
            block_b: [bx, self.floor_y],
            held: false,
            step: 0,
        }
    }

    pub fn check_state(&self, s: &EnvState) -> Result<(), EnvError> {
        let coords = [s.gripper, s.velocity, s.block_a, s.block_b];
        if coords.iter().flatten().any(|v| !v.is_finite()) || !s.aperture.is_finite() {
            return Err(EnvError::InvalidState("non-finite field".into()));
        }
        for (name, p) in [("gripper", s.gripper), ("block A", s.block_a), ("block B", s.block_b)] {
            if p.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(EnvError::InvalidState(format!("{name} at {p:?} outside the unit square")));
            }
        }
        if !(0.0..=1.0).contains(&s.aperture) {
            return Err(EnvError::InvalidState(format!("aperture {} outside [0, 1]", s.aperture)));
        }
        if s.velocity.iter().any(|v| v.abs() > 1.0) {
            return Err(EnvError::InvalidState("velocity outside [-1, 1]".into()));
        }
        if s.held && (s.aperture >= self.grasp_threshold || distance(s.gripper, s.block_a) > self.grasp_radius) {
            return Err(EnvError::InvalidState("held block must be gripped and within grasp radius".into()));
        }
        if s.step > self.horizon {
            return Err(EnvError::InvalidState(format!("step {} beyond horizon {}", s.step, self.horizon)));
        }
        Ok(())
    }

    pub fn is_stacked(&self, s: &EnvState) -> bool {
        (s.block_a[0] - s.block_b[0]).abs() <= self.stack_tolerance
            && (s.block_a[1] - (s.block_b[1] + self.block_size)).abs() <= 1e-9
    }

    pub fn stage(&self, s: &EnvState) -> Stage {
        if !s.held && self.is_stacked(s) {
            Stage::Stacked
        } else if s.held && s.block_a[1] - self.floor_y > self.lift_height {
            Stage::Lifting
        } else if s.held || distance(s.gripper, s.block_a) <= self.grasp_radius {
            Stage::Reaching
        } else {
            Stage::None
        }
    }

    pub fn observe(&self, s: &EnvState) -> Observation {
        Observation {
            grid: self.grid,
            image: render(self, s),
            body: [s.gripper[0], s.gripper[1], s.velocity[0], s.velocity[1], s.aperture],
        }
    }

    /// Pure transition function. Non-finite action components are treated as zero.
    pub fn transition(&self, s: &EnvState, action: &[f64; ACTION_DIM]) -> EnvState {
        let a = action.map(|v| if v.is_finite() { v.clamp(-1.0, 1.0) } else { 0.0 });
        let mut n = *s;
        n.velocity = [a[0], a[1]];
        n.gripper = [
            (s.gripper[0] + a[0] * self.step_size).clamp(0.0, 1.0),
            (s.gripper[1] + a[1] * self.step_size).clamp(self.floor_y, 1.0),
        ];
        let target = if a[2] < 0.0 { 0.0 } else { 1.0 };
        n.aperture = s.aperture + (target - s.aperture).clamp(-self.grip_rate, self.grip_rate);

        if n.held {
            if n.aperture >= self.grasp_threshold {
                n.held = false;
                let above_b = (n.block_a[0] - n.block_b[0]).abs() <= self.stack_tolerance && n.block_a[1] > n.block_b[1];
                n.block_a = if above_b {
                    [n.block_b[0], n.block_b[1] + self.block_size]
                } else {
                    [n.block_a[0], self.floor_y]
                };
            } else {
                n.block_a = n.gripper;
            }
        } else if n.aperture < self.grasp_threshold && distance(n.gripper, n.block_a) <= self.grasp_radius {
            n.held = true;
            n.block_a = n.gripper;
        }
        n.step = s.step + 1;
        n
    }

    pub fn step(&self, s: &EnvState, action: &[f64; ACTION_DIM]) -> StepOutcome {
        let state = self.transition(s, action);
        let stage = self.stage(&state);
        StepOutcome {
            observation: self.observe(&state),
            reward: self.stage_reward(stage),
            stage,
            done: state.step >= self.horizon,
            state,
        }
    }
}

/// Stateful wrapper owned by one actor.
#[derive(Clone, Debug)]
pub struct BlockWorld {
    config: EnvConfig,
    state: EnvState,
}

impl BlockWorld {
    pub fn new(config: EnvConfig) -> Result<Self, EnvError> {
        config.validate()?;
        let state = config.sample_initial_state(0);
        Ok(Self { config, state })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn stage(&self) -> Stage {
        self.config.stage(&self.state)
    }

    pub fn observation(&self) -> Observation {
        self.config.observe(&self.state)
    }

    pub fn reset(&mut self, seed: u64) -> (EnvState, Observation) {
        self.state = self.config.sample_initial_state(seed);
        (self.state, self.observation())
    }

    pub fn reset_to_state(&mut self, state: &EnvState) -> Result<Observation, EnvError> {
        self.config.check_state(state)?;
        self.state = *state;
        Ok(self.observation())
    }

    pub fn step(&mut self, action: &[f64; ACTION_DIM]) -> StepOutcome {
        let out = self.config.step(&self.state, action);
        self.state = out.state;
        out
    }
}
