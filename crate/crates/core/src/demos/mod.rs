//! Scripted demonstrations: generation, the on-disk dataset format, and sampling of
//! demos and curriculum start states.

mod expert;
mod format;

pub use expert::{plan, scripted_expert, steady_action, straight_line_action, ExpertPlan, ExpertStyle, StyleTag};
pub use format::{decode_dataset, encode_dataset, load_dataset, save_dataset, DATASET_MAGIC, DATASET_VERSION};

use std::path::PathBuf;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::env::{EnvConfig, EnvError, EnvState, Observation, Stage, BODY_DIM};
use crate::replay::Action;

/// Steps recorded after the first stacked state.
pub const HOLD_STEPS: usize = 10;

#[derive(Debug, Error)]
pub enum DemoError {
    #[error("expert failed {failures} of {attempts} episodes")]
    ExpertFailing { failures: usize, attempts: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("need at least one demonstration")]
    ZeroCount,
    #[error("dataset was recorded with environment config {found:016x}, expected {expected:016x}")]
    ConfigMismatch { expected: u64, found: u64 },
    #[error("corrupt dataset at byte {offset}: {reason}")]
    Corrupt { offset: usize, reason: String },
    #[error("dataset has no action track; load it with privileged access")]
    MissingActions,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// One recorded episode. Observations are shared so replay items can point at goals
/// without copying them.
#[derive(Clone, Debug, PartialEq)]
pub struct Demonstration {
    pub style: StyleTag,
    pub states: Vec<EnvState>,
    pub observations: Vec<Arc<Observation>>,
    pub cumulative_task_reward: f64,
    /// Expert actions, one per transition. Present only on privileged loads.
    pub actions: Option<Vec<Action>>,
}

impl Demonstration {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn initial_state(&self) -> &EnvState {
        &self.states[0]
    }

    /// Observation at `index`, clamped to the last one.
    pub fn observation(&self, index: usize) -> &Arc<Observation> {
        &self.observations[index.min(self.observations.len() - 1)]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetHeader {
    pub env_hash: u64,
    pub grid: u32,
    pub body_dim: u32,
    pub style: StyleTag,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DemoDataset {
    pub header: DatasetHeader,
    pub demos: Vec<Demonstration>,
}

impl DemoDataset {
    pub fn len(&self) -> usize {
        self.demos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.demos.is_empty()
    }

    pub fn has_actions(&self) -> bool {
        !self.demos.is_empty() && self.demos.iter().all(|d| d.actions.is_some())
    }

    pub fn mean_cumulative_task_reward(&self) -> f64 {
        if self.demos.is_empty() {
            return 0.0;
        }
        self.demos.iter().map(|d| d.cumulative_task_reward).sum::<f64>() / self.demos.len() as f64
    }

    pub fn mean_length(&self) -> f64 {
        if self.demos.is_empty() {
            return 0.0;
        }
        self.demos.iter().map(|d| d.len() as f64).sum::<f64>() / self.demos.len() as f64
    }

    pub fn check_env(&self, config: &EnvConfig) -> Result<(), DemoError> {
        let expected = config.hash();
        if self.header.env_hash != expected {
            return Err(DemoError::ConfigMismatch { expected, found: self.header.env_hash });
        }
        Ok(())
    }

    /// Copy without action tracks.
    pub fn stripped(&self) -> Self {
        let mut out = self.clone();
        for d in &mut out.demos {
            d.actions = None;
        }
        out
    }

    /// First `n` demonstrations.
    pub fn truncated(&self, n: usize) -> Self {
        Self { header: self.header.clone(), demos: self.demos.iter().take(n).cloned().collect() }
    }
}

/// Runs the expert from `initial` until it has held a stacked tower for
/// [`HOLD_STEPS`] steps. Returns `None` if the horizon ends first.
pub fn record_episode(config: &EnvConfig, style: &ExpertStyle, initial: EnvState) -> Option<Demonstration> {
    let mut states = vec![initial];
    let mut observations = vec![Arc::new(config.observe(&initial))];
    let mut actions = Vec::new();
    let mut reward = 0.0;
    let mut state = initial;
    let mut stacked_at = None;
    while state.step < config.horizon {
        let action = scripted_expert(config, style, &state);
        let out = config.step(&state, &action);
        reward += out.reward;
        actions.push(action);
        states.push(out.state);
        observations.push(Arc::new(out.observation));
        state = out.state;
        if out.stage == Stage::Stacked && stacked_at.is_none() {
            stacked_at = Some(actions.len());
        }
        if let Some(k) = stacked_at {
            if actions.len() >= k + HOLD_STEPS {
                break;
            }
        }
    }
    stacked_at?;
    Some(Demonstration { style: style.tag, states, observations, cumulative_task_reward: reward, actions: Some(actions) })
}

/// `n` successful expert episodes; failed attempts are resampled. Deterministic per seed.
pub fn generate_demos(config: &EnvConfig, n: usize, style: StyleTag, seed: u64) -> Result<DemoDataset, DemoError> {
    if n == 0 {
        return Err(DemoError::ZeroCount);
    }
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut demos = Vec::with_capacity(n);
    let mut attempts = 0;
    let mut failures = 0;
    while demos.len() < n {
        attempts += 1;
        let env_seed: u64 = rng.random();
        let jitter_seed: u64 = rng.random();
        let episode_style = ExpertStyle::jittered(style, jitter_seed);
        match record_episode(config, &episode_style, config.sample_initial_state(env_seed)) {
            Some(d) => demos.push(d),
            None => failures += 1,
        }
        if attempts >= 10 && failures * 2 > attempts {
            return Err(DemoError::ExpertFailing { failures, attempts });
        }
    }
    Ok(DemoDataset {
        header: DatasetHeader { env_hash: config.hash(), grid: config.grid as u32, body_dim: BODY_DIM as u32, style },
        demos,
    })
}

pub fn sample_demo<'a, R: Rng + ?Sized>(dataset: &'a DemoDataset, rng: &mut R) -> Result<(usize, &'a Demonstration), DemoError> {
    if dataset.demos.is_empty() {
        return Err(DemoError::EmptyDataset);
    }
    let i = rng.random_range(0..dataset.demos.len());
    Ok((i, &dataset.demos[i]))
}

/// Uniform start index among the first `max_step` steps (1-based `[1, min(max_step, len)]`,
/// returned 0-based) together with the recorded state there.
pub fn curriculum_initial_state<R: Rng + ?Sized>(demo: &Demonstration, max_step: usize, rng: &mut R) -> (usize, EnvState) {
    let upper = max_step.clamp(1, demo.states.len());
    let index = rng.random_range(0..upper);
    (index, demo.states[index])
}
