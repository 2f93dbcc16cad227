use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use log::warn;

use crate::net::{serialize_params, NetworkParams};
use crate::replay::{ReplayError, ReplayService};

use super::wire::{BufferId, Message, NetId, Packed, SampleMode};

/// Latest serialized policy per network. Version 0 means nothing published yet.
#[derive(Debug, Default)]
pub struct ParamStore {
    entries: Mutex<HashMap<NetId, (u64, Arc<Vec<u8>>)>>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stores a new snapshot and returns its version.
    pub fn publish(&self, net: NetId, params: &NetworkParams) -> u64 {
        self.publish_bytes(net, serialize_params(params))
    }

    pub fn publish_bytes(&self, net: NetId, bytes: Vec<u8>) -> u64 {
        let mut entries = self.entries.lock().expect("param store lock");
        let entry = entries.entry(net).or_insert((0, Arc::new(Vec::new())));
        entry.0 += 1;
        entry.1 = Arc::new(bytes);
        entry.0
    }

    pub fn version(&self, net: NetId) -> u64 {
        self.entries.lock().expect("param store lock").get(&net).map_or(0, |e| e.0)
    }

    /// `(version, Some(bytes))` when newer than `known`, else `(version, None)`.
    pub fn fetch(&self, net: NetId, known: u64) -> (u64, Option<Arc<Vec<u8>>>) {
        match self.entries.lock().expect("param store lock").get(&net) {
            Some((v, bytes)) if *v != known => (*v, Some(Arc::clone(bytes))),
            Some((v, _)) => (*v, None),
            None => (0, None),
        }
    }
}

/// Request handler shared by the TCP server and the in-process channel.
#[derive(Debug)]
pub struct Hub {
    pub replay: Arc<ReplayService>,
    pub params: Arc<ParamStore>,
}

impl Hub {
    pub fn new(replay: Arc<ReplayService>, params: Arc<ParamStore>) -> Self {
        Self { replay, params }
    }

    /// Answers one request. Inserts and priority updates produce no reply.
    pub fn handle(&self, msg: Message) -> Option<Message> {
        match msg {
            Message::InsertTransitions { protected, transitions } => {
                let result = match transitions {
                    Packed::Imitation(items) => self.replay.insert_imitation(items),
                    Packed::Task(items) => self.replay.insert_task(items, protected),
                };
                if let Err(e) = result {
                    warn!("insert dropped: {e}");
                }
                None
            }
            Message::SampleRequest { buffer, mode, batch, request_id } => {
                let batch = batch as usize;
                let sampled = match (buffer, mode) {
                    (BufferId::Imitation, SampleMode::Prioritized) => self.replay.sample_imitation(batch).map(split_imitation),
                    (BufferId::Imitation, SampleMode::Uniform) => self.replay.sample_imitation_uniform(batch).map(split_imitation),
                    (BufferId::Task, _) => self.replay.sample_task(batch).map(|v| {
                        let (ids, items) = v.into_iter().unzip();
                        (ids, Packed::Task(items))
                    }),
                };
                Some(match sampled {
                    Ok((ids, transitions)) => Message::SampleResponse { request_id, ids, transitions },
                    Err(ReplayError::NotReady { .. } | ReplayError::Empty) => Message::NotReady { request_id },
                    Err(e) => {
                        warn!("sample request {request_id} failed: {e}");
                        Message::NotReady { request_id }
                    }
                })
            }
            Message::UpdatePriorities { ids, priorities } => {
                if let Err(e) = self.replay.update_priorities(&ids, &priorities) {
                    warn!("priority update dropped: {e}");
                }
                None
            }
            Message::ParamsRequest { net, known_version } => {
                let (version, bytes) = self.params.fetch(net, known_version);
                Some(Message::ParamsResponse { net, version, params: bytes.map(|b| b.to_vec()) })
            }
            Message::StatsRequest => Some(Message::Stats(self.replay.stats())),
            other => {
                warn!("ignoring unexpected client message with tag {}", other.tag());
                None
            }
        }
    }
}

fn split_imitation(v: Vec<(u64, crate::replay::ImitationTransition)>) -> (Vec<u64>, Packed) {
    let (ids, items) = v.into_iter().unzip();
    (ids, Packed::Imitation(items))
}
