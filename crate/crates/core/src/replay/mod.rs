//! Replay memories: a prioritized buffer for imitation experience and a uniform FIFO
//! buffer for task experience, plus a thread-safe service wrapping both.

mod prioritized;
mod transition;
mod tree;
mod uniform;

pub use prioritized::{InsertOutcome, PrioritizedBuffer};
pub use transition::{Action, ImitationTransition, TaskTransition};
pub use uniform::UniformBuffer;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Smallest priority a transition can be updated to.
pub const PRIORITY_FLOOR: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReplayError {
    #[error("priority must be positive and finite, got {0}")]
    InvalidPriority(f64),
    #[error("buffer is empty")]
    Empty,
    #[error("buffer holds {len} items, needs {min_fill} before sampling")]
    NotReady { len: usize, min_fill: usize },
    #[error("capacity must be positive")]
    ZeroCapacity,
    #[error("buffer is full of protected items")]
    ProtectedFull,
    #[error("{0} ids but {1} priorities")]
    LengthMismatch(usize, usize),
    #[error("invalid transition: {0}")]
    InvalidTransition(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReplayConfig {
    pub imitation_capacity: usize,
    pub task_capacity: usize,
    /// Minimum size before a buffer answers sample requests.
    pub min_fill: usize,
    pub seed: u64,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        Self { imitation_capacity: 100_000, task_capacity: 100_000, min_fill: 1_000, seed: 0 }
    }
}

/// Upper bound on configured capacities.
pub const MAX_CAPACITY: usize = 1_000_000;

/// Counters and size summary of a replay service.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReplayStats {
    pub imitation_len: u64,
    pub task_len: u64,
    pub task_protected: u64,
    pub imitation_inserts: u64,
    pub task_inserts: u64,
    pub imitation_samples: u64,
    pub task_samples: u64,
    pub not_ready: u64,
    /// Min, 25th, 50th, 75th percentile and max of imitation priorities (zeros when empty).
    pub priority_quantiles: [f64; 5],
}

/// Nearest-rank quantiles at 0, .25, .5, .75, 1 of `values`.
pub fn priority_quantiles(values: &[f64]) -> [f64; 5] {
    if values.is_empty() {
        return [0.0; 5];
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let last = (v.len() - 1) as f64;
    [0.0, 0.25, 0.5, 0.75, 1.0].map(|q| v[(q * last).round() as usize])
}

/// Full logical contents of a service, for equivalence checks.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplaySnapshot {
    pub imitation: Vec<(u64, f64, ImitationTransition)>,
    pub task: Vec<(u64, TaskTransition)>,
    pub task_protected: usize,
}

/// Both buffers behind coarse locks. Every method is atomic with respect to the others.
#[derive(Debug)]
pub struct ReplayService {
    imitation: Mutex<PrioritizedBuffer<ImitationTransition>>,
    task: Mutex<UniformBuffer<TaskTransition>>,
    rng: Mutex<ChaCha8Rng>,
    min_fill: usize,
    imitation_inserts: AtomicU64,
    task_inserts: AtomicU64,
    imitation_samples: AtomicU64,
    task_samples: AtomicU64,
    not_ready: AtomicU64,
}

impl ReplayService {
    pub fn new(config: &ReplayConfig) -> Result<Self, ReplayError> {
        if config.imitation_capacity > MAX_CAPACITY || config.task_capacity > MAX_CAPACITY {
            return Err(ReplayError::InvalidTransition(format!("capacity above {MAX_CAPACITY}")));
        }
        Ok(Self {
            imitation: Mutex::new(PrioritizedBuffer::new(config.imitation_capacity)?),
            task: Mutex::new(UniformBuffer::new(config.task_capacity)?),
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(config.seed)),
            min_fill: config.min_fill,
            imitation_inserts: AtomicU64::new(0),
            task_inserts: AtomicU64::new(0),
            imitation_samples: AtomicU64::new(0),
            task_samples: AtomicU64::new(0),
            not_ready: AtomicU64::new(0),
        })
    }

    pub fn min_fill(&self) -> usize {
        self.min_fill
    }

    /// Inserts at the current maximum priority. Returns the number stored.
    pub fn insert_imitation(&self, batch: Vec<ImitationTransition>) -> Result<usize, ReplayError> {
        for t in &batch {
            t.validate()?;
        }
        let mut buf = self.imitation.lock().expect("imitation buffer lock");
        let n = batch.len();
        for t in batch {
            buf.insert(t, None)?;
        }
        self.imitation_inserts.fetch_add(n as u64, Ordering::Relaxed);
        Ok(n)
    }

    /// Protected items are never evicted.
    pub fn insert_task(&self, batch: Vec<TaskTransition>, protected: bool) -> Result<usize, ReplayError> {
        for t in &batch {
            t.validate()?;
        }
        let mut buf = self.task.lock().expect("task buffer lock");
        let n = batch.len();
        for t in batch {
            if protected {
                buf.insert_protected(t)?;
            } else {
                buf.insert(t)?;
            }
        }
        self.task_inserts.fetch_add(n as u64, Ordering::Relaxed);
        Ok(n)
    }

    fn ready(&self, len: usize) -> Result<(), ReplayError> {
        if len == 0 || len < self.min_fill {
            self.not_ready.fetch_add(1, Ordering::Relaxed);
            return Err(ReplayError::NotReady { len, min_fill: self.min_fill });
        }
        Ok(())
    }

    pub fn imitation_len(&self) -> usize {
        self.imitation.lock().expect("imitation buffer lock").len()
    }

    pub fn task_len(&self) -> usize {
        self.task.lock().expect("task buffer lock").len()
    }

    /// Priority-proportional draws.
    pub fn sample_imitation(&self, batch: usize) -> Result<Vec<(u64, ImitationTransition)>, ReplayError> {
        let buf = self.imitation.lock().expect("imitation buffer lock");
        self.ready(buf.len())?;
        let out = buf.sample(batch, &mut *self.rng.lock().expect("rng lock"))?;
        self.imitation_samples.fetch_add(batch as u64, Ordering::Relaxed);
        Ok(out)
    }

    /// Uniform draws from the imitation buffer.
    pub fn sample_imitation_uniform(&self, batch: usize) -> Result<Vec<(u64, ImitationTransition)>, ReplayError> {
        let buf = self.imitation.lock().expect("imitation buffer lock");
        self.ready(buf.len())?;
        let out = buf.sample_uniform(batch, &mut *self.rng.lock().expect("rng lock"))?;
        self.imitation_samples.fetch_add(batch as u64, Ordering::Relaxed);
        Ok(out)
    }

    pub fn sample_task(&self, batch: usize) -> Result<Vec<(u64, TaskTransition)>, ReplayError> {
        let buf = self.task.lock().expect("task buffer lock");
        self.ready(buf.len())?;
        let out = buf.sample(batch, &mut *self.rng.lock().expect("rng lock"))?;
        self.task_samples.fetch_add(batch as u64, Ordering::Relaxed);
        Ok(out)
    }

    /// Applies to the imitation buffer; evicted ids are ignored.
    pub fn update_priorities(&self, ids: &[u64], priorities: &[f64]) -> Result<usize, ReplayError> {
        self.imitation.lock().expect("imitation buffer lock").update_priorities(ids, priorities)
    }

    pub fn stats(&self) -> ReplayStats {
        let (imitation_len, quantiles) = {
            let buf = self.imitation.lock().expect("imitation buffer lock");
            (buf.len() as u64, priority_quantiles(&buf.priorities()))
        };
        let (task_len, task_protected) = {
            let buf = self.task.lock().expect("task buffer lock");
            (buf.len() as u64, buf.protected_len() as u64)
        };
        ReplayStats {
            imitation_len,
            task_len,
            task_protected,
            imitation_inserts: self.imitation_inserts.load(Ordering::Relaxed),
            task_inserts: self.task_inserts.load(Ordering::Relaxed),
            imitation_samples: self.imitation_samples.load(Ordering::Relaxed),
            task_samples: self.task_samples.load(Ordering::Relaxed),
            not_ready: self.not_ready.load(Ordering::Relaxed),
            priority_quantiles: quantiles,
        }
    }

    pub fn snapshot(&self) -> ReplaySnapshot {
        let imitation = self
            .imitation
            .lock()
            .expect("imitation buffer lock")
            .entries()
            .into_iter()
            .map(|(id, p, t)| (id, p, t.clone()))
            .collect();
        let task_buf = self.task.lock().expect("task buffer lock");
        ReplaySnapshot {
            imitation,
            task: task_buf.iter().cloned().collect(),
            task_protected: task_buf.protected_len(),
        }
    }
}
