//! Scripted waypoint demonstrator.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{EnvConfig, EnvState, ACTION_DIM};

/// Gripper x counts as aligned with a block within this distance.
const ALIGN_TOL: f64 = 0.005;
/// Vertical tolerance for having reached the release height.
const HEIGHT_TOL: f64 = 1e-6;
/// Below carry height by more than this, a held block is lifted straight up first.
const LIFT_BAND: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StyleTag {
    Train = 0,
    Validation = 1,
}

impl StyleTag {
    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(Self::Train),
            1 => Some(Self::Validation),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Train => "train",
            Self::Validation => "validation",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Self::Train),
            "validation" | "valid" => Some(Self::Validation),
            _ => None,
        }
    }
}

/// Controller parameters. Speed is a fraction of the maximum velocity command; heights
/// are above the floor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExpertStyle {
    pub tag: StyleTag,
    pub speed: f64,
    pub arc_height: f64,
    pub approach_offset: f64,
    /// Sideways sway amplitude as a fraction of speed.
    pub wobble: f64,
    /// Sway frequency in radians per step.
    pub wobble_rate: f64,
    pub wobble_phase: f64,
}

impl ExpertStyle {
    pub fn base(tag: StyleTag) -> Self {
        match tag {
            StyleTag::Train => Self {
                tag,
                speed: 0.9,
                arc_height: 0.5,
                approach_offset: 0.1,
                wobble: 0.05,
                wobble_rate: 0.3,
                wobble_phase: 0.0,
            },
            StyleTag::Validation => Self {
                tag,
                speed: 0.65,
                arc_height: 0.6,
                approach_offset: 0.15,
                wobble: 0.12,
                wobble_rate: 0.17,
                wobble_phase: 0.0,
            },
        }
    }

    /// Per-episode variation of the base style.
    pub fn jittered(tag: StyleTag, jitter_seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(jitter_seed);
        let base = Self::base(tag);
        Self {
            speed: base.speed * rng.random_range(0.9..1.1),
            arc_height: base.arc_height + rng.random_range(-0.05..0.05),
            wobble_phase: rng.random_range(0.0..TAU),
            ..base
        }
    }
}

/// Where the controller is heading and what the gripper should do.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ExpertPlan {
    /// Move in a straight line toward the point, gripper command attached. Sway is
    /// allowed only when the move is not a final descent onto a block.
    MoveTo { target: [f64; 2], grip: f64, sway: bool },
    /// Stay put and issue a grip command.
    Grip(f64),
    Hold,
}

pub fn plan(config: &EnvConfig, style: &ExpertStyle, s: &EnvState) -> ExpertPlan {
    let [gx, gy] = s.gripper;
    if !s.held {
        if config.is_stacked(s) {
            return ExpertPlan::Hold;
        }
        let [ax, ay] = s.block_a;
        if s.aperture < config.grasp_threshold {
            // Closed on nothing: open before moving on.
            return ExpertPlan::Grip(1.0);
        }
        if (gx - ax).abs() <= ALIGN_TOL && (gy - ay).abs() <= 0.5 * config.grasp_radius {
            return ExpertPlan::Grip(-1.0);
        }
        if (gx - ax).abs() <= ALIGN_TOL {
            return ExpertPlan::MoveTo { target: [ax, ay], grip: 1.0, sway: false };
        }
        return ExpertPlan::MoveTo { target: [ax, ay + style.approach_offset], grip: 1.0, sway: true };
    }
    let [bx, by] = s.block_b;
    let release_y = by + config.block_size;
    let carry_y = config.floor_y + style.arc_height;
    if (gx - bx).abs() <= ALIGN_TOL {
        if (gy - release_y).abs() <= HEIGHT_TOL {
            return ExpertPlan::Grip(1.0);
        }
        return ExpertPlan::MoveTo { target: [bx, release_y], grip: -1.0, sway: false };
    }
    if gy < carry_y - LIFT_BAND {
        return ExpertPlan::MoveTo { target: [gx, carry_y], grip: -1.0, sway: true };
    }
    ExpertPlan::MoveTo { target: [bx, carry_y], grip: -1.0, sway: true }
}

/// Velocity command toward `target` at `speed`, shortened to land exactly on it.
pub fn straight_line_action(config: &EnvConfig, from: [f64; 2], target: [f64; 2], speed: f64) -> [f64; 2] {
    let d = [target[0] - from[0], target[1] - from[1]];
    let dist = d[0].hypot(d[1]);
    if dist == 0.0 {
        return [0.0, 0.0];
    }
    let mag = speed.min(dist / config.step_size);
    [d[0] / dist * mag, d[1] / dist * mag]
}

/// Expert action without sideways sway.
pub fn steady_action(config: &EnvConfig, style: &ExpertStyle, s: &EnvState) -> [f64; ACTION_DIM] {
    match plan(config, style, s) {
        ExpertPlan::Hold => [0.0; ACTION_DIM],
        ExpertPlan::Grip(g) => [0.0, 0.0, g],
        ExpertPlan::MoveTo { target, grip, .. } => {
            let v = straight_line_action(config, s.gripper, target, style.speed);
            [v[0], v[1], grip]
        }
    }
}

pub fn scripted_expert(config: &EnvConfig, style: &ExpertStyle, s: &EnvState) -> [f64; ACTION_DIM] {
    let mut a = steady_action(config, style, s);
    if let ExpertPlan::MoveTo { target, sway: true, .. } = plan(config, style, s) {
        let d = [target[0] - s.gripper[0], target[1] - s.gripper[1]];
        let dist = d[0].hypot(d[1]);
        if dist > 0.0 {
            // Sway fades out close to the waypoint so the controller still lands on it.
            let fade = (dist / 0.1).min(1.0);
            let sway = style.wobble * style.speed * fade * (style.wobble_rate * s.step as f64 + style.wobble_phase).sin();
            a[0] += -d[1] / dist * sway;
            a[1] += d[0] / dist * sway;
        }
    }
    a.map(|v| v.clamp(-1.0, 1.0))
}
