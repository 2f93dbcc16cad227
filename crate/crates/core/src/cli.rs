//! Command-line entry points: `gen-demos`, `train`, `eval` and `inspect-replay`.
//!
//! Exit codes: 0 on success, 2 when the configuration is unusable, 3 when the run
//! itself fails.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use crate::agent::{evaluate_one_shot, evaluate_task_policy, AgentNets};
use crate::config::{ConfigError, RunConfig};
use crate::demos::{generate_demos, load_dataset, save_dataset, DemoDataset, StyleTag};
use crate::replay::ReplayStats;
use crate::train::{derive_seed, load_nets, read_manifest, train, Datasets, TrainError};
use crate::transport::{ReplayClient, TcpClient};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "metamimic", about = "One-shot imitation and task-policy training in a block-stacking world")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Record train and validation demonstration datasets with the scripted expert.
    GenDemos(Common),
    /// Train in one of the modes and write metrics.csv and checkpoints to the output directory.
    Train(Common),
    /// Evaluate a checkpoint on a dataset and write a standalone report.
    Eval(Common),
    /// Print buffer sizes, priority quantiles and counters of a running replay server.
    InspectReplay(Common),
}

#[derive(Args, Debug, Default)]
pub struct Common {
    /// Config file of `key = value` lines; unset keys keep their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Checkpoint directory (eval).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Dataset file: training demos for `train`, evaluation demos for `eval`.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Serve replay over TCP on HOST:PORT (train) or connect to it (inspect-replay).
    #[arg(long, conflicts_with = "in_process")]
    pub endpoint: Option<String>,
    /// Keep actors and replay in one process without sockets.
    #[arg(long)]
    pub in_process: bool,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => EXIT_CONFIG,
            Self::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Config(m) => write!(f, "config error: {m}"),
            Self::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        Self::Config(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) | TrainError::MissingDataset(_) => Self::Config(e.to_string()),
            _ => Self::Runtime(e.to_string()),
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Loads the config file (or defaults) and applies command-line overrides.
pub fn resolve_config(args: &Common) -> Result<RunConfig, CliError> {
    let mut c = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(m) = &args.mode {
        c.set("mode", m)?;
    }
    if let Some(s) = args.seed {
        c.seed = s;
    }
    if let Some(o) = &args.out {
        c.out_dir = o.clone();
    }
    if let Some(e) = &args.endpoint {
        c.endpoint = Some(e.clone());
    }
    if args.in_process {
        c.endpoint = None;
    }
    c.validate()?;
    Ok(c)
}

/// Parses `args` (including the program name), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::GenDemos(a) => cmd_gen_demos(a).map(|_| ()),
        Command::Train(a) => cmd_train(a, install_stop_handler()),
        Command::Eval(a) => cmd_eval(a).map(|r| print!("{}", r.human)),
        Command::InspectReplay(a) => cmd_inspect_replay(a).map(|s| print!("{}", format_stats(&s))),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

fn install_stop_handler() -> Arc<AtomicBool> {
    let stop = Arc::new(AtomicBool::new(false));
    let flag = Arc::clone(&stop);
    if let Err(e) = ctrlc::set_handler(move || flag.store(true, Ordering::SeqCst)) {
        log::warn!("no signal handler installed: {e}");
    }
    stop
}

/// Paths written by `gen-demos`.
#[derive(Debug)]
pub struct GeneratedDemos {
    pub train: PathBuf,
    pub valid: PathBuf,
    pub manifest: PathBuf,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// With `--out DIR` the datasets go to `DIR/train.mmdm` and `DIR/valid.mmdm`; otherwise
/// to the configured dataset paths. A manifest is written next to the training set.
pub fn cmd_gen_demos(args: &Common) -> Result<GeneratedDemos, CliError> {
    let c = resolve_config(args)?;
    let (train_path, valid_path) = match &args.out {
        Some(dir) => (dir.join("train.mmdm"), dir.join("valid.mmdm")),
        None => (c.train_dataset.clone(), c.valid_dataset.clone()),
    };
    let manifest_path = train_path.parent().unwrap_or(Path::new(".")).join("manifest.txt");
    let mut manifest = format!("env_hash = {:016x}\nseed = {}\n", c.env.hash(), c.seed);
    for (path, n, style, stream) in [(&train_path, c.demo_count_train, StyleTag::Train, 1), (&valid_path, c.demo_count_valid, StyleTag::Validation, 2)] {
        let dataset = generate_demos(&c.env, n, style, derive_seed(c.seed, stream)).map_err(runtime)?;
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
        }
        save_dataset(path, &dataset).map_err(runtime)?;
        let bytes = std::fs::read(path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
        let name = style.name();
        manifest.push_str(&format!(
            "{name}_file = {}\n{name}_demos = {}\n{name}_mean_length = {:.3}\n{name}_mean_task_return = {:.6}\n{name}_sha256 = {}\n",
            path.display(),
            dataset.len(),
            dataset.mean_length(),
            dataset.mean_cumulative_task_reward(),
            sha256_hex(&bytes)
        ));
        println!("wrote {} demonstrations to {}", dataset.len(), path.display());
    }
    std::fs::write(&manifest_path, manifest).map_err(|e| runtime(format!("{}: {e}", manifest_path.display())))?;
    Ok(GeneratedDemos { train: train_path, valid: valid_path, manifest: manifest_path })
}

fn load(path: &Path, c: &RunConfig, privileged: bool) -> Result<Arc<DemoDataset>, CliError> {
    load_dataset(path, &c.env, privileged).map(Arc::new).map_err(runtime)
}

/// Trains until the step budget is spent or `stop` is raised; a final checkpoint is
/// written either way.
pub fn cmd_train(args: &Common, stop: Arc<AtomicBool>) -> Result<(), CliError> {
    let c = resolve_config(args)?;
    let train_path = args.dataset.clone().unwrap_or_else(|| c.train_dataset.clone());
    let mut data = Datasets::default();
    if c.mode.needs_demos() {
        if !train_path.exists() {
            return Err(CliError::Config(format!("mode {} needs a training dataset; {} does not exist", c.mode.name(), train_path.display())));
        }
        // Hidden actions are only read when seeding replay with demonstration windows.
        data.train = Some(load(&train_path, &c, c.mode == crate::config::TrainMode::D4pgfd)?);
    }
    if c.valid_dataset.exists() {
        data.valid = Some(load(&c.valid_dataset, &c, false)?);
    }
    let outcome = train(&c, &data, Some(&c.out_dir), stop)?;
    if outcome.interrupted {
        println!("interrupted; final checkpoint written to {}", c.out_dir.join("checkpoint").display());
    }
    for r in outcome.rows.iter().rev().take(2) {
        println!("{} learner step {}: critic loss {:.4}", r.learner.name(), r.learner_step, r.critic_loss);
    }
    println!("metrics in {}", c.out_dir.join("metrics.csv").display());
    Ok(())
}

/// Evaluation results: `human` is printed, each of `rows` is a machine-readable CSV
/// line matching `EVAL_COLUMNS`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub human: String,
    pub rows: Vec<String>,
    pub path: PathBuf,
}

pub const EVAL_COLUMNS: &str = "policy,episodes,mean_imitation_return,mean_step_imitation_reward,normalized_task_return,stack_success_rate";

fn eval_nets(c: &RunConfig, dataset: &DemoDataset, imitation: Option<&AgentNets>, task: Option<&AgentNets>) -> Result<(String, Vec<String>), CliError> {
    let agent = c.effective_agent();
    let mut human = String::new();
    let mut rows = Vec::new();
    if let Some(nets) = imitation {
        let m = evaluate_one_shot(|_, _, o, g| nets.act(o, Some(g)), dataset, &c.env, &agent).map_err(runtime)?;
        human.push_str(&format!(
            "imitation policy on {} demonstrations\n  imitation return      {:.4}\n  per-step reward       {:.4} (oracle {:.1})\n  normalized task return {:.4}\n  stack success rate    {:.4}\n",
            m.episodes,
            m.mean_imitation_return,
            m.mean_step_imitation_reward,
            agent.beta_image + agent.beta_body,
            m.normalized_task_return,
            m.stack_success_rate
        ));
        rows.push(format!("imitation,{},{},{},{},{}", m.episodes, m.mean_imitation_return, m.mean_step_imitation_reward, m.normalized_task_return, m.stack_success_rate));
    }
    if let Some(nets) = task {
        let seeds: Vec<u64> = (0..c.eval_episodes as u64).map(|i| derive_seed(c.seed, 2_000_000 + i)).collect();
        let m = evaluate_task_policy(|o| nets.act(o, None), &c.env, &seeds).map_err(runtime)?;
        let demo_mean = dataset.mean_cumulative_task_reward();
        let normalized = if demo_mean > 0.0 { m.mean_return / demo_mean } else { f64::NAN };
        human.push_str(&format!(
            "task policy over {} episodes\n  task return           {:.4}\n  normalized task return {:.4}\n  stack success rate    {:.4}\n",
            m.episodes, m.mean_return, normalized, m.success_rate
        ));
        rows.push(format!("task,{},,,{},{}", m.episodes, normalized, m.success_rate));
    }
    Ok((human, rows))
}

/// Loads the checkpoint, checks it against the configured network variant and evaluates
/// every policy it holds. The report goes to `--out` (a file) or `eval_report.txt`
/// inside the checkpoint directory.
pub fn cmd_eval(args: &Common) -> Result<EvalReport, CliError> {
    let c = resolve_config(args)?;
    let ck = args.checkpoint.clone().unwrap_or_else(|| c.out_dir.join("checkpoint"));
    let manifest = read_manifest(&ck).map_err(runtime)?;
    let get = |k: &str| manifest.iter().find(|(key, _)| key == k).map(|(_, v)| v.as_str());
    let agent = c.effective_agent();
    let expected = [("network", agent.network.name().to_string()), ("instance_norm", agent.instance_norm.to_string()), ("residual", agent.residual.to_string()), ("grid", c.env.grid.to_string())];
    for (k, v) in expected {
        if let Some(found) = get(k) {
            if found != v {
                return Err(CliError::Config(format!("checkpoint has {k} = {found} but the config has {v}")));
            }
        }
    }
    let dim = |e: TrainError| match e {
        TrainError::Agent(a) => CliError::Config(a.to_string()),
        other => runtime(other),
    };
    let imitation = load_nets(&ck, "imitation", &agent, agent.shape(c.env.grid, true)).map_err(dim)?;
    let task = load_nets(&ck, "task", &agent, agent.shape(c.env.grid, false)).map_err(dim)?;
    if imitation.is_none() && task.is_none() {
        return Err(runtime(format!("{} holds no networks", ck.display())));
    }
    let data_path = args.dataset.clone().unwrap_or_else(|| c.valid_dataset.clone());
    let dataset = load(&data_path, &c, false)?;
    let (mut human, rows) = eval_nets(&c, &dataset, imitation.as_ref(), task.as_ref())?;
    human.insert_str(0, &format!("checkpoint {}\ndataset {}\n", ck.display(), data_path.display()));
    let path = args.out.clone().unwrap_or_else(|| ck.join("eval_report.txt"));
    let mut text = human.clone();
    text.push('\n');
    text.push_str(EVAL_COLUMNS);
    text.push('\n');
    for r in &rows {
        text.push_str(r);
        text.push('\n');
    }
    std::fs::write(&path, text).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    human.push_str(&format!("{EVAL_COLUMNS}\n"));
    for r in &rows {
        human.push_str(&format!("{r}\n"));
    }
    Ok(EvalReport { human, rows, path })
}

pub fn cmd_inspect_replay(args: &Common) -> Result<ReplayStats, CliError> {
    let endpoint = match &args.endpoint {
        Some(e) => e.clone(),
        None => resolve_config(args)?.endpoint.ok_or_else(|| CliError::Config("inspect-replay needs --endpoint or an endpoint in the config".into()))?,
    };
    let mut client = TcpClient::connect(&endpoint).map_err(runtime)?;
    client.stats().map_err(runtime)
}

pub fn format_stats(s: &ReplayStats) -> String {
    let q = s.priority_quantiles;
    format!(
        "imitation_len = {}\ntask_len = {}\ntask_protected = {}\nimitation_inserts = {}\ntask_inserts = {}\nimitation_samples = {}\ntask_samples = {}\nnot_ready = {}\npriority_quantiles = {} {} {} {} {}\n",
        s.imitation_len, s.task_len, s.task_protected, s.imitation_inserts, s.task_inserts, s.imitation_samples, s.task_samples, s.not_ready, q[0], q[1], q[2], q[3], q[4]
    )
}
