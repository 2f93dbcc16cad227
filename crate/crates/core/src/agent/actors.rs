use std::collections::VecDeque;
use std::sync::Arc;
use std::time::Duration;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::demos::{curriculum_initial_state, sample_demo, DemoDataset, DemoError, Demonstration};
use crate::distributional::n_step_aggregate;
use crate::env::{BlockWorld, EnvConfig, Observation, Stage};
use crate::net::{NetworkParams, NetworkSpec};
use crate::replay::{Action, ImitationTransition, TaskTransition};
use crate::transport::{NetId, ReplayClient};

use super::nets::act_with;
use super::reward::{compute_imitation_reward, early_termination};
use super::{AgentConfig, AgentError};

const INSERT_ATTEMPTS: usize = 4;
const INSERT_BACKOFF: Duration = Duration::from_millis(10);

struct StepRecord {
    obs: Arc<Observation>,
    action: Action,
    /// Imitation and task reward.
    rewards: [f64; 2],
    index: usize,
}

/// A finished N-step window.
pub struct Window {
    pub obs: Arc<Observation>,
    pub action: Action,
    pub reward_imitate: f64,
    pub reward_task: f64,
    pub discount: f64,
    pub next_obs: Arc<Observation>,
    /// Step index of the window's first transition.
    pub start: usize,
    /// Step index of `next_obs`.
    pub end: usize,
}

/// Turns a stream of single steps into N-step windows.
pub struct WindowBuilder {
    n: usize,
    gamma: f64,
    steps: VecDeque<StepRecord>,
}

impl WindowBuilder {
    pub fn new(n: usize, gamma: f64) -> Self {
        Self { n, gamma, steps: VecDeque::with_capacity(n) }
    }

    fn window(&self, count: usize, next_obs: &Arc<Observation>, terminal: bool) -> Result<Window, AgentError> {
        let first = &self.steps[0];
        let imitate: Vec<f64> = self.steps.iter().take(count).map(|s| s.rewards[0]).collect();
        let task: Vec<f64> = self.steps.iter().take(count).map(|s| s.rewards[1]).collect();
        let (reward_imitate, discount) = n_step_aggregate(&imitate, self.gamma)?;
        let (reward_task, _) = n_step_aggregate(&task, self.gamma)?;
        Ok(Window {
            obs: Arc::clone(&first.obs),
            action: first.action,
            reward_imitate,
            reward_task,
            discount: if terminal { 0.0 } else { discount },
            next_obs: Arc::clone(next_obs),
            start: first.index,
            end: first.index + count,
        })
    }

    /// Adds the step taken at `index` from `obs`; `next_obs` is where it landed. With
    /// `terminal`, every open window is closed without bootstrap; otherwise a window is
    /// returned once it spans N steps.
    pub fn push(
        &mut self,
        index: usize,
        obs: Arc<Observation>,
        action: Action,
        rewards: [f64; 2],
        next_obs: &Arc<Observation>,
        terminal: bool,
    ) -> Result<Vec<Window>, AgentError> {
        self.steps.push_back(StepRecord { obs, action, rewards, index });
        let mut out = Vec::new();
        if terminal {
            while !self.steps.is_empty() {
                out.push(self.window(self.steps.len(), next_obs, true)?);
                self.steps.pop_front();
            }
        } else if self.steps.len() == self.n {
            out.push(self.window(self.n, next_obs, false)?);
            self.steps.pop_front();
        }
        Ok(out)
    }

    /// Drops windows cut short by a time limit or the end of a demonstration.
    pub fn truncate(&mut self) {
        self.steps.clear();
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EpisodeStats {
    pub steps: usize,
    pub reward_imitate: f64,
    pub reward_task: f64,
    pub inserted: usize,
    pub early_terminated: bool,
    pub final_stage: Stage,
    /// Demonstration index the episode started from (0 without curriculum).
    pub start_index: usize,
}

fn insert_with_retry<T: Clone>(
    client: &mut dyn ReplayClient,
    items: Vec<T>,
    send: fn(&mut dyn ReplayClient, Vec<T>) -> Result<(), crate::transport::TransportError>,
) -> Result<(), AgentError> {
    let mut last = String::new();
    for attempt in 0..INSERT_ATTEMPTS {
        match send(client, items.clone()) {
            Ok(()) => return Ok(()),
            Err(e) => {
                warn!("insert attempt {} failed: {e}", attempt + 1);
                last = e.to_string();
                std::thread::sleep(INSERT_BACKOFF * (1 << attempt));
            }
        }
    }
    Err(AgentError::ReplayUnreachable { attempts: INSERT_ATTEMPTS, last })
}

/// Gaussian exploration noise, annealed per episode.
#[derive(Clone, Debug)]
struct Explorer {
    rng: ChaCha8Rng,
    sigma: f64,
    decay: f64,
}

impl Explorer {
    fn perturb(&mut self, mut a: Action) -> Action {
        if self.sigma > 0.0 {
            let noise = Normal::new(0.0, self.sigma).expect("sigma is finite and non-negative");
            for v in &mut a {
                *v += noise.sample(&mut self.rng);
            }
        }
        a.map(|v| v.clamp(-1.0, 1.0))
    }

    fn end_episode(&mut self) {
        self.sigma *= self.decay;
    }
}

/// Local policy copy refreshed from the parameter server.
#[derive(Clone, Debug)]
struct Snapshot {
    net: NetId,
    spec: NetworkSpec,
    params: NetworkParams,
    version: u64,
}

impl Snapshot {
    fn refresh(&mut self, client: &mut dyn ReplayClient) {
        match client.fetch_params(self.net, self.version) {
            Ok(Some((version, params))) => match params.check_matches(&self.spec.layers) {
                Ok(()) => {
                    self.params = params;
                    self.version = version;
                }
                Err(e) => warn!("ignoring incompatible {:?} snapshot: {e}", self.net),
            },
            Ok(None) => {}
            Err(e) => warn!("parameter refresh failed, keeping version {}: {e}", self.version),
        }
    }
}

struct ImitationEpisode {
    demo_id: usize,
    t: usize,
    obs: Arc<Observation>,
    builder: WindowBuilder,
    stats: EpisodeStats,
}

/// Rolls out the goal-conditioned policy against sampled demonstrations.
pub struct ImitationActor {
    pub id: usize,
    env: BlockWorld,
    config: AgentConfig,
    policy: Snapshot,
    explorer: Explorer,
    episode: Option<ImitationEpisode>,
}

impl ImitationActor {
    pub fn new(id: usize, env: EnvConfig, config: &AgentConfig, spec: NetworkSpec, params: NetworkParams, seed: u64) -> Result<Self, AgentError> {
        params.check_matches(&spec.layers)?;
        Ok(Self {
            id,
            env: BlockWorld::new(env)?,
            config: config.clone(),
            policy: Snapshot { net: NetId::ImitationPolicy, spec, params, version: 0 },
            explorer: Explorer { rng: ChaCha8Rng::seed_from_u64(seed), sigma: config.sigma, decay: config.sigma_decay },
            episode: None,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.explorer.sigma
    }

    pub fn policy_version(&self) -> u64 {
        self.policy.version
    }

    fn begin(&mut self, dataset: &DemoDataset, client: &mut dyn ReplayClient) -> Result<(), AgentError> {
        self.policy.refresh(client);
        let (demo_id, demo) = sample_demo(dataset, &mut self.explorer.rng)?;
        let (t, state) = if self.config.curriculum {
            curriculum_initial_state(demo, self.config.curriculum_max_step, &mut self.explorer.rng)
        } else {
            (0, *demo.initial_state())
        };
        let obs = Arc::new(self.env.reset_to_state(&state)?);
        self.episode = Some(ImitationEpisode {
            demo_id,
            t,
            obs,
            builder: WindowBuilder::new(self.config.n_step, self.config.gamma),
            stats: EpisodeStats { start_index: t, ..Default::default() },
        });
        Ok(())
    }

    /// Takes one environment step, starting an episode first if none is running.
    /// Returns the episode summary when this step ended it.
    pub fn step(&mut self, dataset: &DemoDataset, client: &mut dyn ReplayClient) -> Result<Option<EpisodeStats>, AgentError> {
        if self.episode.is_none() {
            self.begin(dataset, client)?;
        }
        let ep = self.episode.as_mut().expect("episode started");
        let demo = &dataset.demos[ep.demo_id];
        // A curriculum start on the final demo state leaves nothing to imitate.
        if ep.t + 1 >= demo.len() {
            let stats = std::mem::take(&mut ep.stats);
            self.episode = None;
            self.explorer.end_episode();
            return Ok(Some(stats));
        }
        let goal = Arc::clone(demo.observation(ep.t + 1));
        let action = self.explorer.perturb(act_with(&self.policy.spec, &self.policy.params, &ep.obs, Some(&goal))?);
        let out = self.env.step(&action);
        let next = Arc::new(out.observation);
        let r_imitate = compute_imitation_reward(&next, &goal, self.config.beta_image, self.config.beta_body)?;
        let early = early_termination(&out.state, demo, ep.t + 1, self.config.early_termination_cutoff);

        let windows = ep.builder.push(ep.t, Arc::clone(&ep.obs), action, [r_imitate, out.reward], &next, early)?;
        ep.t += 1;
        ep.obs = next;
        ep.stats.steps += 1;
        ep.stats.reward_imitate += r_imitate;
        ep.stats.reward_task += out.reward;
        ep.stats.final_stage = out.stage;
        ep.stats.early_terminated = early;
        let finished = early || ep.t + 1 >= demo.len() || out.done;

        let items: Vec<ImitationTransition> = windows
            .into_iter()
            .map(|w| imitation_transition(w, demo, ep.demo_id))
            .collect();
        ep.stats.inserted += items.len();
        if !items.is_empty() {
            if let Err(e) = insert_with_retry(client, items, |c, v| c.insert_imitation(v)) {
                self.episode = None;
                self.explorer.end_episode();
                return Err(e);
            }
        }
        if finished {
            let mut ep = self.episode.take().expect("episode running");
            ep.builder.truncate();
            self.explorer.end_episode();
            return Ok(Some(ep.stats));
        }
        Ok(None)
    }

    pub fn run_episode(&mut self, dataset: &DemoDataset, client: &mut dyn ReplayClient) -> Result<EpisodeStats, AgentError> {
        loop {
            if let Some(stats) = self.step(dataset, client)? {
                return Ok(stats);
            }
        }
    }
}

/// Goals are the demonstration observations one step ahead, clamped to the last one.
fn imitation_transition(w: Window, demo: &Demonstration, demo_id: usize) -> ImitationTransition {
    ImitationTransition {
        obs: w.obs,
        action: w.action,
        goal: Arc::clone(demo.observation(w.start + 1)),
        next_goal: Arc::clone(demo.observation(w.end + 1)),
        next_obs: w.next_obs,
        reward_imitate: w.reward_imitate,
        reward_task: w.reward_task,
        discount: w.discount,
        demo_id: demo_id as u32,
        step_index: w.start as u32,
    }
}

struct TaskEpisode {
    obs: Arc<Observation>,
    t: usize,
    builder: WindowBuilder,
    stats: EpisodeStats,
}

/// Rolls out the unconditional task policy from fresh or curriculum start states.
pub struct TaskActor {
    pub id: usize,
    env: BlockWorld,
    config: AgentConfig,
    policy: Snapshot,
    explorer: Explorer,
    episode: Option<TaskEpisode>,
}

impl TaskActor {
    pub fn new(id: usize, env: EnvConfig, config: &AgentConfig, spec: NetworkSpec, params: NetworkParams, seed: u64) -> Result<Self, AgentError> {
        params.check_matches(&spec.layers)?;
        Ok(Self {
            id,
            env: BlockWorld::new(env)?,
            config: config.clone(),
            policy: Snapshot { net: NetId::TaskPolicy, spec, params, version: 0 },
            explorer: Explorer { rng: ChaCha8Rng::seed_from_u64(seed), sigma: config.sigma, decay: config.sigma_decay },
            episode: None,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.explorer.sigma
    }

    /// Curriculum starts need `demos`; without them episodes reset from a random seed.
    fn begin(&mut self, demos: Option<&DemoDataset>, client: &mut dyn ReplayClient) -> Result<(), AgentError> {
        self.policy.refresh(client);
        let (start, obs) = match demos {
            Some(d) if self.config.curriculum => {
                let (_, demo) = sample_demo(d, &mut self.explorer.rng)?;
                let (k, state) = curriculum_initial_state(demo, self.config.curriculum_max_step, &mut self.explorer.rng);
                (k, self.env.reset_to_state(&state)?)
            }
            _ => {
                let seed = self.explorer.rng.random::<u64>();
                (0, self.env.reset(seed).1)
            }
        };
        self.episode = Some(TaskEpisode {
            obs: Arc::new(obs),
            t: 0,
            builder: WindowBuilder::new(self.config.n_step, self.config.gamma),
            stats: EpisodeStats { start_index: start, ..Default::default() },
        });
        Ok(())
    }

    pub fn step(&mut self, demos: Option<&DemoDataset>, client: &mut dyn ReplayClient) -> Result<Option<EpisodeStats>, AgentError> {
        if self.episode.is_none() {
            self.begin(demos, client)?;
        }
        let ep = self.episode.as_mut().expect("episode started");
        let action = self.explorer.perturb(act_with(&self.policy.spec, &self.policy.params, &ep.obs, None)?);
        let out = self.env.step(&action);
        let next = Arc::new(out.observation);
        let windows = ep.builder.push(ep.t, Arc::clone(&ep.obs), action, [0.0, out.reward], &next, false)?;
        ep.t += 1;
        ep.obs = next;
        ep.stats.steps += 1;
        ep.stats.reward_task += out.reward;
        ep.stats.final_stage = out.stage;
        let items: Vec<TaskTransition> = windows.into_iter().map(task_transition).collect();
        ep.stats.inserted += items.len();
        if !items.is_empty() {
            if let Err(e) = insert_with_retry(client, items, |c, v| c.insert_task(v, false)) {
                self.episode = None;
                self.explorer.end_episode();
                return Err(e);
            }
        }
        if out.done {
            let ep = self.episode.take().expect("episode running");
            self.explorer.end_episode();
            return Ok(Some(ep.stats));
        }
        Ok(None)
    }

    pub fn run_episode(&mut self, demos: Option<&DemoDataset>, client: &mut dyn ReplayClient) -> Result<EpisodeStats, AgentError> {
        loop {
            if let Some(stats) = self.step(demos, client)? {
                return Ok(stats);
            }
        }
    }
}

fn task_transition(w: Window) -> TaskTransition {
    TaskTransition { obs: w.obs, action: w.action, next_obs: w.next_obs, reward_task: w.reward_task, discount: w.discount }
}

/// Replays every demonstration's action track and stores the resulting task windows as
/// protected replay items. Returns the number inserted.
pub fn fd_seed_replay(dataset: &DemoDataset, env: &EnvConfig, client: &mut dyn ReplayClient, config: &AgentConfig) -> Result<usize, AgentError> {
    dataset.check_env(env)?;
    let mut world = BlockWorld::new(env.clone())?;
    let mut total = 0;
    for demo in &dataset.demos {
        let actions = demo.actions.as_ref().ok_or(DemoError::MissingActions)?;
        let mut obs = Arc::new(world.reset_to_state(demo.initial_state())?);
        let mut builder = WindowBuilder::new(config.n_step, config.gamma);
        let mut items = Vec::new();
        for (t, a) in actions.iter().enumerate() {
            let out = world.step(a);
            let next = Arc::new(out.observation);
            items.extend(builder.push(t, Arc::clone(&obs), *a, [0.0, out.reward], &next, false)?.into_iter().map(task_transition));
            obs = next;
        }
        total += items.len();
        insert_with_retry(client, items, |c, v| c.insert_task(v, true))?;
    }
    Ok(total)
}
