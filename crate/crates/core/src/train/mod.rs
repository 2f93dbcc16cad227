//! Training runs: actor/learner wiring for every mode, periodic evaluation, metrics
//! CSV and checkpoints.

mod checkpoint;
mod metrics;

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use checkpoint::{load_nets, read_manifest, save_checkpoint};
pub use metrics::{read_metrics, LearnerKind, MetricsRow, MetricsWriter, CSV_COLUMNS};

use crate::agent::{
    evaluate_one_shot, evaluate_task_policy, fd_seed_replay, AgentConfig, AgentError, AgentNets, EpisodeStats, ImitationActor, ImitationLearner,
    LearnerStep, TaskActor, TaskLearner, UpdateReport,
};
use crate::config::{ConfigError, RunConfig, TrainMode};
use crate::demos::DemoDataset;
use crate::env::EnvConfig;
use crate::replay::{ReplayError, ReplayService, ReplayStats};
use crate::transport::{serve, Hub, InProcessClient, ParamStore, ReplayClient, TcpClient, TransportError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("mode {0} needs a training dataset")]
    MissingDataset(&'static str),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("replay never became ready after {0} actor rounds")]
    Starved(u64),
    #[error("actor thread failed: {0}")]
    ActorFailed(String),
}

/// Demonstrations available to a run. `valid` is used for evaluation only.
#[derive(Clone, Debug, Default)]
pub struct Datasets {
    pub train: Option<Arc<DemoDataset>>,
    pub valid: Option<Arc<DemoDataset>>,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub rows: Vec<MetricsRow>,
    pub imitation: Option<AgentNets>,
    pub task: Option<AgentNets>,
    pub replay: ReplayStats,
    pub actor_episodes: u64,
    /// Stopped early by the caller's stop flag.
    pub interrupted: bool,
}

/// Stream index mixed into the run seed for each randomness consumer.
pub(crate) fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed.wrapping_add(stream.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const TASK_EVAL_STREAM: u64 = 1_000_000;
const MAX_IDLE_ROUNDS: u64 = 1_000_000;

#[derive(Clone, Copy, Debug, Default)]
struct ActorWindow {
    episodes: u64,
    imitation_steps: u64,
    imitation_reward: f64,
    steps: u64,
    task_reward: f64,
}

#[derive(Debug, Default)]
struct ActorTotals {
    episodes: u64,
    /// Separate accumulators for the imitation and task learner rows.
    windows: [ActorWindow; 2],
}

impl ActorTotals {
    fn record(&mut self, imitation: bool, s: &EpisodeStats) {
        self.episodes += 1;
        for w in &mut self.windows {
            w.episodes += 1;
            w.steps += s.steps as u64;
            w.task_reward += s.reward_task;
            if imitation {
                w.imitation_steps += s.steps as u64;
                w.imitation_reward += s.reward_imitate;
            }
        }
    }

    fn take(&mut self, kind: LearnerKind) -> ActorWindow {
        std::mem::take(&mut self.windows[kind as usize])
    }
}

enum Actor {
    Imitation(ImitationActor),
    Task(TaskActor),
}

impl Actor {
    fn step(&mut self, data: &Datasets, curriculum: bool, client: &mut dyn ReplayClient) -> Result<Option<(bool, EpisodeStats)>, AgentError> {
        match self {
            Actor::Imitation(a) => {
                let train = data.train.as_deref().expect("imitation actors only exist with a dataset");
                Ok(a.step(train, client)?.map(|s| (true, s)))
            }
            Actor::Task(a) => {
                let demos = if curriculum { data.train.as_deref() } else { None };
                Ok(a.step(demos, client)?.map(|s| (false, s)))
            }
        }
    }
}

#[derive(Default)]
struct LearnerWindow {
    loss: f64,
    objective: f64,
    updates: u64,
}

impl LearnerWindow {
    fn add(&mut self, r: &UpdateReport) {
        if !r.skipped {
            self.loss += r.critic_loss;
            self.objective += r.policy_objective;
            self.updates += 1;
        }
    }
}

/// Periodic evaluation on fixed demo subsets and fixed task seeds.
struct Evaluator {
    env: EnvConfig,
    agent: AgentConfig,
    train: Option<DemoDataset>,
    valid: Option<DemoDataset>,
    task_seeds: Vec<u64>,
    demo_mean_train: Option<f64>,
    demo_mean_valid: Option<f64>,
}

impl Evaluator {
    fn new(config: &RunConfig, agent: &AgentConfig, data: &Datasets) -> Self {
        let subset = |d: &Option<Arc<DemoDataset>>| d.as_ref().map(|d| d.truncated(config.eval_demos));
        let (train, valid) = (subset(&data.train), subset(&data.valid));
        let mean = |d: &Option<DemoDataset>| d.as_ref().map(|d| d.mean_cumulative_task_reward()).filter(|m| *m > 0.0);
        Self {
            env: config.env.clone(),
            agent: agent.clone(),
            demo_mean_train: mean(&train),
            demo_mean_valid: mean(&valid),
            train,
            valid,
            task_seeds: (0..config.eval_episodes as u64).map(|i| derive_seed(config.seed, TASK_EVAL_STREAM + i)).collect(),
        }
    }

    fn imitation_row(&self, nets: &AgentNets, row: &mut MetricsRow) -> Result<(), AgentError> {
        let run = |d: &DemoDataset| evaluate_one_shot(|_, _, o, g| nets.act(o, Some(g)), d, &self.env, &self.agent);
        if let Some(d) = &self.train {
            let m = run(d)?;
            row.eval_imitation_return_train = Some(m.mean_imitation_return);
            row.eval_norm_task_return_train = Some(m.normalized_task_return);
            row.stack_success_rate = Some(m.stack_success_rate);
        }
        if let Some(d) = &self.valid {
            let m = run(d)?;
            row.eval_imitation_return_valid = Some(m.mean_imitation_return);
            row.eval_norm_task_return_valid = Some(m.normalized_task_return);
            row.stack_success_rate = Some(m.stack_success_rate);
        }
        Ok(())
    }

    fn task_row(&self, nets: &AgentNets, row: &mut MetricsRow) -> Result<(), AgentError> {
        if self.task_seeds.is_empty() {
            return Ok(());
        }
        let m = evaluate_task_policy(|o| nets.act(o, None), &self.env, &self.task_seeds)?;
        row.stack_success_rate = Some(m.success_rate);
        row.eval_norm_task_return_train = self.demo_mean_train.map(|d| m.mean_return / d);
        row.eval_norm_task_return_valid = self.demo_mean_valid.map(|d| m.mean_return / d);
        Ok(())
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TrainError + '_ {
    move |source| TrainError::Io { path: path.to_path_buf(), source }
}

struct Output {
    dir: PathBuf,
    metrics: MetricsWriter,
}

/// Runs one training job until the learner step budget is spent or `stop` is raised.
/// With `output`, the effective config, metrics CSV and checkpoints are written there.
pub fn train(config: &RunConfig, data: &Datasets, output: Option<&Path>, stop: Arc<AtomicBool>) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    let mode = config.mode;
    if mode.needs_demos() && data.train.is_none() {
        return Err(TrainError::MissingDataset(mode.name()));
    }
    for d in [&data.train, &data.valid].into_iter().flatten() {
        d.check_env(&config.env).map_err(AgentError::from)?;
    }
    let agent = config.effective_agent();
    let mut out = match output {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(io_err(dir))?;
            let cfg_path = dir.join("config.txt");
            std::fs::write(&cfg_path, config.to_text()).map_err(io_err(&cfg_path))?;
            let csv = dir.join("metrics.csv");
            Some(Output { dir: dir.to_path_buf(), metrics: MetricsWriter::create(&csv).map_err(io_err(&csv))? })
        }
        None => None,
    };

    let replay = Arc::new(ReplayService::new(&config.effective_replay())?);
    let hub = Arc::new(Hub::new(Arc::clone(&replay), Arc::new(ParamStore::new())));
    let server = match &config.endpoint {
        Some(ep) => Some(serve(Arc::clone(&hub), ep)?),
        None => None,
    };
    let connect = || -> Result<Box<dyn ReplayClient>, TrainError> {
        Ok(match &server {
            Some(s) => Box::new(TcpClient::connect(&s.local_addr().to_string())?),
            None => Box::new(InProcessClient::new(Arc::clone(&hub))),
        })
    };

    let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let grid = config.env.grid;
    let mut imitation = if mode.uses_imitation() {
        let nets = AgentNets::new(agent.shape(grid, true), agent.imitation_support()?, agent.settings(), &mut init_rng)?;
        Some(ImitationLearner::new(nets, &agent, Arc::clone(&hub.params)))
    } else {
        None
    };
    let mut task = if mode.uses_task() {
        let nets = AgentNets::new(agent.shape(grid, false), agent.task_support()?, agent.settings(), &mut init_rng)?;
        Some(TaskLearner::new(nets, &agent, Arc::clone(&hub.params), derive_seed(config.seed, 1)))
    } else {
        None
    };

    if mode == TrainMode::D4pgfd {
        let train = data.train.as_deref().expect("checked above");
        let n = fd_seed_replay(train, &config.env, &mut InProcessClient::new(Arc::clone(&hub)), &agent)?;
        info!("seeded task replay with {n} demonstration windows");
    }

    let mut actors = Vec::new();
    let (n_imitation, n_task) = match (mode.uses_imitation(), mode.uses_task()) {
        (true, true) => (agent.actors, config.task_actors),
        (true, false) => (agent.actors, 0),
        _ => (0, agent.actors),
    };
    for i in 0..n_imitation {
        let l = imitation.as_ref().expect("imitation learner exists");
        let a = ImitationActor::new(i, config.env.clone(), &agent, l.nets.policy_spec.clone(), l.nets.policy.clone(), derive_seed(config.seed, 100 + i as u64))?;
        actors.push((Actor::Imitation(a), connect()?));
    }
    for i in 0..n_task {
        let l = task.as_ref().expect("task learner exists");
        let a = TaskActor::new(n_imitation + i, config.env.clone(), &agent, l.nets.policy_spec.clone(), l.nets.policy.clone(), derive_seed(config.seed, 200 + i as u64))?;
        actors.push((Actor::Task(a), connect()?));
    }

    let evaluator = Evaluator::new(config, &agent, data);
    let totals = Arc::new(Mutex::new(ActorTotals::default()));
    let started = Instant::now();
    let mut learner_client = InProcessClient::new(Arc::clone(&hub));
    let mut rows = Vec::new();
    let mut windows = [LearnerWindow::default(), LearnerWindow::default()];
    let primary = if imitation.is_some() { LearnerKind::Imitation } else { LearnerKind::Task };
    let primary_steps = |im: &Option<ImitationLearner>, t: &Option<TaskLearner>| match primary {
        LearnerKind::Imitation => im.as_ref().map_or(0, |l| l.steps()),
        LearnerKind::Task => t.as_ref().map_or(0, |l| l.steps()),
    };

    // Threaded scheduling hands the actors to their own threads.
    let actor_stop = Arc::new(AtomicBool::new(false));
    let mut threads = Vec::new();
    if config.threaded {
        for (mut actor, mut client) in actors.drain(..) {
            let (data, totals, stop) = (data.clone(), Arc::clone(&totals), Arc::clone(&actor_stop));
            let curriculum = agent.curriculum;
            threads.push(std::thread::spawn(move || -> Result<(), String> {
                while !stop.load(Ordering::SeqCst) {
                    match actor.step(&data, curriculum, client.as_mut()) {
                        Ok(Some((im, s))) => totals.lock().expect("totals lock").record(im, &s),
                        Ok(None) => {}
                        Err(e) => return Err(e.to_string()),
                    }
                }
                Ok(())
            }));
        }
    }

    let mut idle_rounds = 0u64;
    let mut interrupted = false;
    let mut failure = None;
    while primary_steps(&imitation, &task) < config.learner_steps {
        if stop.load(Ordering::SeqCst) {
            interrupted = true;
            break;
        }
        if config.threaded && threads.iter().any(|t| t.is_finished()) {
            break;
        }
        for (actor, client) in &mut actors {
            for _ in 0..config.env_steps_per_update {
                if let Some((im, s)) = actor.step(data, agent.curriculum, client.as_mut())? {
                    totals.lock().expect("totals lock").record(im, &s);
                }
            }
        }
        let mut updated = false;
        if let Some(l) = imitation.as_mut() {
            if let LearnerStep::Updated(r) = l.step(&mut learner_client)? {
                updated = true;
                windows[0].add(&r);
                if l.steps() % config.eval_period == 0 {
                    rows.push(emit(LearnerKind::Imitation, &l.nets, &mut windows[0], &totals, &evaluator, config, &started, out.as_mut())?);
                }
            }
        }
        if let Some(l) = task.as_mut() {
            if let LearnerStep::Updated(r) = l.step(&mut learner_client)? {
                updated = true;
                windows[1].add(&r);
                if l.steps() % config.eval_period == 0 {
                    rows.push(emit(LearnerKind::Task, &l.nets, &mut windows[1], &totals, &evaluator, config, &started, out.as_mut())?);
                }
            }
        }
        if updated {
            idle_rounds = 0;
            let step = primary_steps(&imitation, &task);
            if step % config.checkpoint_period == 0 {
                if let Some(o) = &out {
                    save_checkpoint(&o.dir.join("checkpoint"), config, imitation.as_ref().map(|l| &l.nets), task.as_ref().map(|l| &l.nets))?;
                }
            }
        } else {
            idle_rounds += 1;
            if idle_rounds >= MAX_IDLE_ROUNDS {
                failure = Some(TrainError::Starved(idle_rounds));
                break;
            }
            if config.threaded {
                std::thread::sleep(std::time::Duration::from_millis(1));
            }
        }
    }

    actor_stop.store(true, Ordering::SeqCst);
    for t in threads {
        match t.join() {
            Ok(Ok(())) => {}
            Ok(Err(e)) => failure = failure.or(Some(TrainError::ActorFailed(e))),
            Err(_) => failure = failure.or(Some(TrainError::ActorFailed("panicked".into()))),
        }
    }
    drop(actors);
    if let Some(s) = server {
        s.shutdown();
    }
    if let Some(e) = failure {
        return Err(e);
    }

    // Close with a row for any steps since the last report.
    if let Some(l) = &imitation {
        if windows[0].updates > 0 {
            rows.push(emit(LearnerKind::Imitation, &l.nets, &mut windows[0], &totals, &evaluator, config, &started, out.as_mut())?);
        }
    }
    if let Some(l) = &task {
        if windows[1].updates > 0 {
            rows.push(emit(LearnerKind::Task, &l.nets, &mut windows[1], &totals, &evaluator, config, &started, out.as_mut())?);
        }
    }
    if let Some(o) = &out {
        save_checkpoint(&o.dir.join("checkpoint"), config, imitation.as_ref().map(|l| &l.nets), task.as_ref().map(|l| &l.nets))?;
    }
    for (name, nets) in [("imitation", imitation.as_ref().map(|l| &l.nets)), ("task", task.as_ref().map(|l| &l.nets))] {
        if let Some(n) = nets {
            if n.skipped_steps > 0 {
                warn!("{name} learner skipped {} non-finite steps", n.skipped_steps);
            }
        }
    }
    let actor_episodes = totals.lock().expect("totals lock").episodes;
    Ok(TrainOutcome {
        rows,
        imitation: imitation.map(|l| l.nets),
        task: task.map(|l| l.nets),
        replay: replay.stats(),
        actor_episodes,
        interrupted,
    })
}

#[allow(clippy::too_many_arguments)]
fn emit(
    kind: LearnerKind,
    nets: &AgentNets,
    window: &mut LearnerWindow,
    totals: &Mutex<ActorTotals>,
    evaluator: &Evaluator,
    config: &RunConfig,
    started: &Instant,
    out: Option<&mut Output>,
) -> Result<MetricsRow, TrainError> {
    let (episodes, actors) = {
        let mut t = totals.lock().expect("totals lock");
        let w = t.take(kind);
        (t.episodes, w)
    };
    let w = std::mem::take(window);
    let per = |sum: f64, n: u64| (n > 0).then(|| sum / n as f64);
    let mut row = MetricsRow {
        wall_clock_s: if config.record_wall_clock { started.elapsed().as_secs_f64() } else { 0.0 },
        learner_step: nets.steps,
        actor_episodes: episodes,
        critic_loss: per(w.loss, w.updates).unwrap_or(f64::NAN),
        policy_objective: per(w.objective, w.updates).unwrap_or(f64::NAN),
        mean_r_imitate: per(actors.imitation_reward, actors.imitation_steps),
        mean_r_task: per(actors.task_reward, actors.steps),
        eval_norm_task_return_train: None,
        eval_norm_task_return_valid: None,
        eval_imitation_return_train: None,
        eval_imitation_return_valid: None,
        stack_success_rate: None,
        learner: kind,
    };
    match kind {
        LearnerKind::Imitation => evaluator.imitation_row(nets, &mut row)?,
        LearnerKind::Task => evaluator.task_row(nets, &mut row)?,
    }
    info!("{} step {}: {}", kind.name(), row.learner_step, row.to_csv());
    if let Some(o) = out {
        let path = o.dir.join("metrics.csv");
        o.metrics.write(&row).map_err(io_err(&path))?;
    }
    Ok(row)
}
