//! Run configuration in a plain `key = value` text format.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown or repeated keys are
//! errors. Every key and its default is listed by [`RunConfig::to_text`], which is also
//! the format written next to training output so a run can be repeated exactly.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agent::{AgentConfig, NetVariant};
use crate::env::EnvConfig;
use crate::replay::ReplayConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}` given twice")]
    DuplicateKey { line: usize, key: String },
    #[error("bad value `{value}` for `{key}`: {reason}")]
    BadValue { key: String, value: String, reason: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainMode {
    /// Imitation actors and learner only.
    Imitation,
    /// Task actors and learner only.
    Task,
    /// Imitation and task actors and learners sharing both buffers.
    Joint,
    /// Task learner on task-actor data only.
    D4pg,
    /// As `D4pg`, with demonstration windows stored permanently in task replay.
    D4pgfd,
    /// As `D4pg`, with episodes starting from early demonstration states.
    CurriculumD4pg,
    /// As `Joint`, with every actor starting from early demonstration states.
    CurriculumMetamimic,
}

impl TrainMode {
    pub const ALL: [TrainMode; 7] = [
        Self::Imitation,
        Self::Task,
        Self::Joint,
        Self::D4pg,
        Self::D4pgfd,
        Self::CurriculumD4pg,
        Self::CurriculumMetamimic,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Imitation => "imitation",
            Self::Task => "task",
            Self::Joint => "joint",
            Self::D4pg => "d4pg",
            Self::D4pgfd => "d4pgfd",
            Self::CurriculumD4pg => "curriculum_d4pg",
            Self::CurriculumMetamimic => "curriculum_metamimic",
        }
    }

    pub fn uses_imitation(&self) -> bool {
        matches!(self, Self::Imitation | Self::Joint | Self::CurriculumMetamimic)
    }

    pub fn uses_task(&self) -> bool {
        !matches!(self, Self::Imitation)
    }

    pub fn curriculum(&self) -> bool {
        matches!(self, Self::CurriculumD4pg | Self::CurriculumMetamimic)
    }

    /// Whether a training dataset must be available.
    pub fn needs_demos(&self) -> bool {
        self.uses_imitation() || matches!(self, Self::D4pgfd | Self::CurriculumD4pg)
    }
}

impl FromStr for TrainMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("expected one of {}", Self::ALL.map(|m| m.name()).join(", ")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub agent: AgentConfig,
    pub env: EnvConfig,
    pub replay: ReplayConfig,
    pub mode: TrainMode,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub train_dataset: PathBuf,
    pub valid_dataset: PathBuf,
    pub demo_count_train: usize,
    pub demo_count_valid: usize,
    /// Serve replay and parameters on this address; actors then connect over TCP.
    pub endpoint: Option<String>,
    /// Run actors on their own threads instead of interleaving them with the learners.
    pub threaded: bool,
    /// Task actors used alongside imitation actors in joint modes.
    pub task_actors: usize,
    /// Environment steps each actor takes per learner step (interleaved scheduling).
    pub env_steps_per_update: usize,
    /// Learner step budget (the primary learner in joint modes).
    pub learner_steps: u64,
    pub eval_period: u64,
    pub checkpoint_period: u64,
    /// Demonstrations per dataset used for periodic evaluation.
    pub eval_demos: usize,
    /// Episodes per periodic task-policy evaluation.
    pub eval_episodes: usize,
    /// When false, the wall-clock column is written as 0 so output is byte-stable.
    pub record_wall_clock: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            agent: AgentConfig::default(),
            env: EnvConfig::default(),
            replay: ReplayConfig::default(),
            mode: TrainMode::Joint,
            seed: 0,
            out_dir: PathBuf::from("runs/default"),
            train_dataset: PathBuf::from("data/train.mmdm"),
            valid_dataset: PathBuf::from("data/valid.mmdm"),
            demo_count_train: 100,
            demo_count_valid: 100,
            endpoint: None,
            threaded: false,
            task_actors: 1,
            env_steps_per_update: 2,
            learner_steps: 20_000,
            eval_period: 1_000,
            checkpoint_period: 10_000,
            eval_demos: 10,
            eval_episodes: 10,
            record_wall_clock: true,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::BadValue { key: key.into(), value: value.into(), reason: e.to_string() })
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::parse_text(&text)
    }

    /// Parses config text over the defaults, then validates.
    pub fn parse_text(text: &str) -> Result<Self, ConfigError> {
        let mut config = Self::default();
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(ConfigError::Syntax { line: i + 1 });
            }
            if !seen.insert(key.to_string()) {
                return Err(ConfigError::DuplicateKey { line: i + 1, key: key.into() });
            }
            match config.set(key, value) {
                Err(ConfigError::UnknownKey { key, .. }) => return Err(ConfigError::UnknownKey { line: i + 1, key }),
                other => other?,
            }
        }
        config.validate()?;
        Ok(config)
    }

    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, v: &str) -> Result<(), ConfigError> {
        let a = &mut self.agent;
        let e = &mut self.env;
        match key {
            "mode" => self.mode = v.parse().map_err(|reason| ConfigError::BadValue { key: key.into(), value: v.into(), reason })?,
            "seed" => self.seed = parse(key, v)?,
            "out_dir" => self.out_dir = PathBuf::from(v),
            "train_dataset" => self.train_dataset = PathBuf::from(v),
            "valid_dataset" => self.valid_dataset = PathBuf::from(v),
            "demo_count_train" => self.demo_count_train = parse(key, v)?,
            "demo_count_valid" => self.demo_count_valid = parse(key, v)?,
            "endpoint" => self.endpoint = (!v.is_empty()).then(|| v.to_string()),
            "threaded" => self.threaded = parse(key, v)?,
            "task_actors" => self.task_actors = parse(key, v)?,
            "env_steps_per_update" => self.env_steps_per_update = parse(key, v)?,
            "learner_steps" => self.learner_steps = parse(key, v)?,
            "eval_period" => self.eval_period = parse(key, v)?,
            "checkpoint_period" => self.checkpoint_period = parse(key, v)?,
            "eval_demos" => self.eval_demos = parse(key, v)?,
            "eval_episodes" => self.eval_episodes = parse(key, v)?,
            "record_wall_clock" => self.record_wall_clock = parse(key, v)?,

            "beta_image" => a.beta_image = parse(key, v)?,
            "beta_body" => a.beta_body = parse(key, v)?,
            "gamma" => a.gamma = parse(key, v)?,
            "n_step" => a.n_step = parse(key, v)?,
            "batch_size" => a.batch_size = parse(key, v)?,
            "actors" => a.actors = parse(key, v)?,
            "policy_lr" => a.policy_lr = parse(key, v)?,
            "critic_lr" => a.critic_lr = parse(key, v)?,
            "preact_penalty" => a.preact_penalty = parse(key, v)?,
            "target_update_period" => a.target_update_period = parse(key, v)?,
            "sigma" => a.sigma = parse(key, v)?,
            "sigma_decay" => a.sigma_decay = parse(key, v)?,
            "early_termination_cutoff" => a.early_termination_cutoff = parse(key, v)?,
            "v_min" => a.v_min = parse(key, v)?,
            "v_max" => a.v_max = parse(key, v)?,
            "v_bins" => a.v_bins = parse(key, v)?,
            "imitation_v_max" => a.imitation_v_max = parse(key, v)?,
            "curriculum" => a.curriculum = parse(key, v)?,
            "curriculum_max_step" => a.curriculum_max_step = parse(key, v)?,
            "mix_ratio" => a.mix_ratio = parse(key, v)?,
            "snapshot_period" => a.snapshot_period = parse(key, v)?,
            "network" => {
                a.network = NetVariant::parse(v).ok_or_else(|| ConfigError::BadValue {
                    key: key.into(),
                    value: v.into(),
                    reason: "expected small or large".into(),
                })?
            }
            "instance_norm" => a.instance_norm = parse(key, v)?,
            "residual" => a.residual = parse(key, v)?,

            "grid" => e.grid = parse(key, v)?,
            "step_size" => e.step_size = parse(key, v)?,
            "grasp_radius" => e.grasp_radius = parse(key, v)?,
            "stack_tolerance" => e.stack_tolerance = parse(key, v)?,
            "lift_height" => e.lift_height = parse(key, v)?,
            "floor_y" => e.floor_y = parse(key, v)?,
            "block_size" => e.block_size = parse(key, v)?,
            "grip_rate" => e.grip_rate = parse(key, v)?,
            "grasp_threshold" => e.grasp_threshold = parse(key, v)?,
            "min_separation" => e.min_separation = parse(key, v)?,
            "horizon" => e.horizon = parse(key, v)?,
            "stage_rewards" => {
                let parts: Vec<f64> = v.split(',').map(|p| parse(key, p.trim())).collect::<Result<_, _>>()?;
                e.stage_rewards = parts.try_into().map_err(|_| ConfigError::BadValue {
                    key: key.into(),
                    value: v.into(),
                    reason: "expected four comma-separated values".into(),
                })?;
            }

            "imitation_capacity" => self.replay.imitation_capacity = parse(key, v)?,
            "task_capacity" => self.replay.task_capacity = parse(key, v)?,
            "min_fill" => self.replay.min_fill = parse(key, v)?,
            _ => return Err(ConfigError::UnknownKey { line: 0, key: key.into() }),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.agent.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.env.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let invalid = |m: &str| Err(ConfigError::Invalid(m.into()));
        if self.replay.imitation_capacity == 0 || self.replay.task_capacity == 0 {
            return invalid("replay capacities must be positive");
        }
        if self.replay.imitation_capacity > crate::replay::MAX_CAPACITY || self.replay.task_capacity > crate::replay::MAX_CAPACITY {
            return invalid("replay capacity above 1000000");
        }
        let min_cap = match (self.mode.uses_imitation(), self.mode.uses_task()) {
            (true, true) => self.replay.imitation_capacity.min(self.replay.task_capacity),
            (true, false) => self.replay.imitation_capacity,
            _ => self.replay.task_capacity,
        };
        if self.replay.min_fill > min_cap || self.replay.min_fill < self.agent.batch_size {
            return invalid("min_fill must lie between batch_size and the replay capacity");
        }
        if self.env_steps_per_update == 0 || self.eval_period == 0 || self.checkpoint_period == 0 {
            return invalid("env_steps_per_update, eval_period and checkpoint_period must be positive");
        }
        if self.mode.uses_imitation() && self.mode.uses_task() && self.task_actors == 0 {
            return invalid("joint modes need at least one task actor");
        }
        if self.demo_count_train == 0 || self.demo_count_valid == 0 {
            return invalid("demo counts must be positive");
        }
        if self.env.grid < 5 {
            return invalid("networks need grid of at least 5");
        }
        Ok(())
    }

    /// Every key with its effective value, one per line, in a fixed order.
    pub fn to_text(&self) -> String {
        let a = &self.agent;
        let e = &self.env;
        let rows: Vec<(&str, String)> = vec![
            ("mode", self.mode.name().into()),
            ("seed", self.seed.to_string()),
            ("out_dir", self.out_dir.display().to_string()),
            ("train_dataset", self.train_dataset.display().to_string()),
            ("valid_dataset", self.valid_dataset.display().to_string()),
            ("demo_count_train", self.demo_count_train.to_string()),
            ("demo_count_valid", self.demo_count_valid.to_string()),
            ("endpoint", self.endpoint.clone().unwrap_or_default()),
            ("threaded", self.threaded.to_string()),
            ("task_actors", self.task_actors.to_string()),
            ("env_steps_per_update", self.env_steps_per_update.to_string()),
            ("learner_steps", self.learner_steps.to_string()),
            ("eval_period", self.eval_period.to_string()),
            ("checkpoint_period", self.checkpoint_period.to_string()),
            ("eval_demos", self.eval_demos.to_string()),
            ("eval_episodes", self.eval_episodes.to_string()),
            ("record_wall_clock", self.record_wall_clock.to_string()),
            ("beta_image", a.beta_image.to_string()),
            ("beta_body", a.beta_body.to_string()),
            ("gamma", a.gamma.to_string()),
            ("n_step", a.n_step.to_string()),
            ("batch_size", a.batch_size.to_string()),
            ("actors", a.actors.to_string()),
            ("policy_lr", a.policy_lr.to_string()),
            ("critic_lr", a.critic_lr.to_string()),
            ("preact_penalty", a.preact_penalty.to_string()),
            ("target_update_period", a.target_update_period.to_string()),
            ("sigma", a.sigma.to_string()),
            ("sigma_decay", a.sigma_decay.to_string()),
            ("early_termination_cutoff", a.early_termination_cutoff.to_string()),
            ("v_min", a.v_min.to_string()),
            ("v_max", a.v_max.to_string()),
            ("v_bins", a.v_bins.to_string()),
            ("imitation_v_max", a.imitation_v_max.to_string()),
            ("curriculum", a.curriculum.to_string()),
            ("curriculum_max_step", a.curriculum_max_step.to_string()),
            ("mix_ratio", a.mix_ratio.to_string()),
            ("snapshot_period", a.snapshot_period.to_string()),
            ("network", a.network.name().into()),
            ("instance_norm", a.instance_norm.to_string()),
            ("residual", a.residual.to_string()),
            ("grid", e.grid.to_string()),
            ("step_size", e.step_size.to_string()),
            ("grasp_radius", e.grasp_radius.to_string()),
            ("stack_tolerance", e.stack_tolerance.to_string()),
            ("lift_height", e.lift_height.to_string()),
            ("floor_y", e.floor_y.to_string()),
            ("block_size", e.block_size.to_string()),
            ("grip_rate", e.grip_rate.to_string()),
            ("grasp_threshold", e.grasp_threshold.to_string()),
            ("min_separation", e.min_separation.to_string()),
            ("horizon", e.horizon.to_string()),
            ("stage_rewards", fmt_list(&e.stage_rewards)),
            ("imitation_capacity", self.replay.imitation_capacity.to_string()),
            ("task_capacity", self.replay.task_capacity.to_string()),
            ("min_fill", self.replay.min_fill.to_string()),
        ];
        rows.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Fingerprint of the effective config, recorded in checkpoint manifests.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Agent settings with the mode's curriculum flag applied.
    pub fn effective_agent(&self) -> AgentConfig {
        let mut a = self.agent.clone();
        if self.mode.curriculum() {
            a.curriculum = true;
        }
        if self.mode == TrainMode::D4pg || self.mode == TrainMode::D4pgfd || self.mode == TrainMode::CurriculumD4pg {
            a.mix_ratio = 0.0;
        }
        a
    }

    /// Replay settings seeded from the run seed.
    pub fn effective_replay(&self) -> ReplayConfig {
        ReplayConfig { seed: self.seed ^ 0x5eed_0f_4e91a7, ..self.replay.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_text() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::parse_text(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn edited_values_round_trip() {
        let text = "mode = d4pgfd\nseed = 7\n# comment\n\nsigma = 0\npolicy_lr = 0.00012\nnetwork = small\nstage_rewards = 0, 0.2, 0.5, 2\nendpoint = 127.0.0.1:9000\n";
        let c = RunConfig::parse_text(text).unwrap();
        assert_eq!(c.mode, TrainMode::D4pgfd);
        assert_eq!(c.agent.policy_lr, 0.00012);
        assert_eq!(c.env.stage_rewards, [0.0, 0.2, 0.5, 2.0]);
        assert_eq!(c.endpoint.as_deref(), Some("127.0.0.1:9000"));
        assert_eq!(RunConfig::parse_text(&c.to_text()).unwrap(), c);
        assert_ne!(c.hash(), RunConfig::default().hash());
    }

    #[test]
    fn rejects_unknown_duplicate_and_bad_values() {
        assert!(matches!(RunConfig::parse_text("bogus = 1"), Err(ConfigError::UnknownKey { line: 1, .. })));
        assert!(matches!(RunConfig::parse_text("seed = 1\nseed = 2"), Err(ConfigError::DuplicateKey { line: 2, .. })));
        assert!(matches!(RunConfig::parse_text("seed = x"), Err(ConfigError::BadValue { .. })));
        assert!(matches!(RunConfig::parse_text("no equals sign"), Err(ConfigError::Syntax { line: 1 })));
        assert!(matches!(RunConfig::parse_text("gamma = 1.5"), Err(ConfigError::Invalid(_))));
        assert!(matches!(RunConfig::parse_text("mode = fastest"), Err(ConfigError::BadValue { .. })));
    }

    #[test]
    fn modes_set_curriculum_and_mixing() {
        for m in TrainMode::ALL {
            assert_eq!(m.name().parse::<TrainMode>().unwrap(), m);
        }
        let c = RunConfig { mode: TrainMode::CurriculumD4pg, ..RunConfig::default() };
        let a = c.effective_agent();
        assert!(a.curriculum);
        assert_eq!(a.mix_ratio, 0.0);
        assert_eq!(RunConfig::default().effective_agent().mix_ratio, 0.5);
    }
}
