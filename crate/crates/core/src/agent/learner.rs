use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::net::NetworkParams;
use crate::replay::{ImitationTransition, TaskTransition};
use crate::transport::{BufferId, NetId, Packed, ParamStore, ReplayClient, SampleMode, TransportError};

use super::nets::{policy_input, AgentNets, LearnSample, UpdateReport};
use super::{AgentConfig, AgentError};

#[derive(Clone, Debug, PartialEq)]
pub enum LearnerStep {
    NotReady,
    Updated(UpdateReport),
}

fn imitation_sample(t: &ImitationTransition) -> LearnSample {
    LearnSample {
        input: policy_input(&t.obs, Some(&t.goal)),
        action: t.action,
        reward: t.reward_imitate,
        discount: t.discount,
        next_input: policy_input(&t.next_obs, Some(&t.next_goal)),
    }
}

fn task_sample(t: &TaskTransition) -> LearnSample {
    LearnSample {
        input: policy_input(&t.obs, None),
        action: t.action,
        reward: t.reward_task,
        discount: t.discount,
        next_input: policy_input(&t.next_obs, None),
    }
}

fn wrong_buffer() -> AgentError {
    AgentError::Transport(TransportError::UnexpectedReply("transitions from the wrong buffer".into()))
}

/// Trains the goal-conditioned policy from prioritized imitation replay.
pub struct ImitationLearner {
    pub nets: AgentNets,
    batch_size: u32,
    snapshot_period: u64,
    store: Arc<ParamStore>,
    next_request: u64,
}

impl ImitationLearner {
    /// Publishes the initial policy so actors start from the same weights.
    pub fn new(nets: AgentNets, config: &AgentConfig, store: Arc<ParamStore>) -> Self {
        store.publish(NetId::ImitationPolicy, &nets.policy);
        Self { nets, batch_size: config.batch_size as u32, snapshot_period: config.snapshot_period, store, next_request: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.nets.steps
    }

    pub fn policy(&self) -> &NetworkParams {
        &self.nets.policy
    }

    pub fn step(&mut self, client: &mut dyn ReplayClient) -> Result<LearnerStep, AgentError> {
        self.next_request += 1;
        let Some((ids, packed)) = client.sample(BufferId::Imitation, SampleMode::Prioritized, self.batch_size, self.next_request)? else {
            return Ok(LearnerStep::NotReady);
        };
        let Packed::Imitation(items) = packed else { return Err(wrong_buffer()) };
        let batch: Vec<LearnSample> = items.iter().map(imitation_sample).collect();
        let report = self.nets.update(&batch)?;
        if !report.skipped {
            client.update_priorities(ids, report.per_sample_loss.clone())?;
        }
        if self.nets.steps.is_multiple_of(self.snapshot_period) {
            self.store.publish(NetId::ImitationPolicy, &self.nets.policy);
        }
        Ok(LearnerStep::Updated(report))
    }
}

/// Trains the unconditional policy on task rewards from both buffers.
pub struct TaskLearner {
    pub nets: AgentNets,
    batch_size: usize,
    mix_ratio: f64,
    snapshot_period: u64,
    store: Arc<ParamStore>,
    rng: ChaCha8Rng,
    next_request: u64,
    /// Items of the last batch that came from the imitation buffer.
    pub last_from_imitation: usize,
}

impl TaskLearner {
    pub fn new(nets: AgentNets, config: &AgentConfig, store: Arc<ParamStore>, seed: u64) -> Self {
        store.publish(NetId::TaskPolicy, &nets.policy);
        Self {
            nets,
            batch_size: config.batch_size,
            mix_ratio: config.mix_ratio,
            snapshot_period: config.snapshot_period,
            store,
            rng: ChaCha8Rng::seed_from_u64(seed),
            next_request: 0,
            last_from_imitation: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.nets.steps
    }

    pub fn policy(&self) -> &NetworkParams {
        &self.nets.policy
    }

    fn fetch(&mut self, client: &mut dyn ReplayClient, buffer: BufferId, n: usize) -> Result<Option<Vec<LearnSample>>, AgentError> {
        if n == 0 {
            return Ok(Some(Vec::new()));
        }
        self.next_request += 1;
        let Some((_, packed)) = client.sample(buffer, SampleMode::Uniform, n as u32, self.next_request)? else { return Ok(None) };
        Ok(Some(match packed {
            Packed::Imitation(items) if buffer == BufferId::Imitation => items.iter().map(|t| task_sample(&t.to_task())).collect(),
            Packed::Task(items) if buffer == BufferId::Task => items.iter().map(task_sample).collect(),
            _ => return Err(wrong_buffer()),
        }))
    }

    /// Number of batch items to draw from the imitation buffer.
    pub(super) fn split(&mut self) -> usize {
        let rho = self.mix_ratio;
        (0..self.batch_size).filter(|_| self.rng.random::<f64>() < rho).count()
    }

    pub fn step(&mut self, client: &mut dyn ReplayClient) -> Result<LearnerStep, AgentError> {
        let k = self.split();
        let b = self.batch_size;
        let batch = match (self.fetch(client, BufferId::Imitation, k)?, self.fetch(client, BufferId::Task, b - k)?) {
            (Some(mut from_imitation), Some(from_task)) => {
                self.last_from_imitation = from_imitation.len();
                from_imitation.extend(from_task);
                from_imitation
            }
            (Some(_), None) => {
                // Task buffer not ready yet: fill the whole batch from imitation experience.
                if self.mix_ratio == 0.0 {
                    return Ok(LearnerStep::NotReady);
                }
                self.last_from_imitation = b;
                match self.fetch(client, BufferId::Imitation, b)? {
                    Some(v) => v,
                    None => return Ok(LearnerStep::NotReady),
                }
            }
            (None, Some(_)) => {
                self.last_from_imitation = 0;
                match self.fetch(client, BufferId::Task, b)? {
                    Some(v) => v,
                    None => return Ok(LearnerStep::NotReady),
                }
            }
            (None, None) => return Ok(LearnerStep::NotReady),
        };
        let report = self.nets.update(&batch)?;
        if self.nets.steps.is_multiple_of(self.snapshot_period) {
            self.store.publish(NetId::TaskPolicy, &self.nets.policy);
        }
        Ok(LearnerStep::Updated(report))
    }
}
