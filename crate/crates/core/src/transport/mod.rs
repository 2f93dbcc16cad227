//! Actor-to-server messaging: a framed binary protocol over TCP and an in-process channel
//! with the same request/response behavior.

mod hub;
mod tcp;
pub mod wire;

use std::sync::Arc;

use thiserror::Error;

pub use hub::{Hub, ParamStore};
pub use tcp::{serve, ServerHandle, TcpClient};
pub use wire::{decode, encode, BufferId, Message, NetId, Packed, ProtocolError, SampleMode};

use crate::net::{deserialize_params, NetError, NetworkParams};
use crate::replay::{ImitationTransition, ReplayStats, TaskTransition};

#[derive(Debug, Error)]
pub enum TransportError {
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot reach {0}: {1}")]
    Connect(String, #[source] std::io::Error),
    #[error("unexpected reply: {0}")]
    UnexpectedReply(String),
    #[error("bad parameter snapshot: {0}")]
    Params(#[from] NetError),
}

pub(crate) fn expects_reply(msg: &Message) -> bool {
    matches!(msg, Message::SampleRequest { .. } | Message::ParamsRequest { .. } | Message::StatsRequest)
}

fn unexpected(m: Option<Message>) -> TransportError {
    TransportError::UnexpectedReply(match m {
        Some(m) => format!("tag {}", m.tag()),
        None => "none".into(),
    })
}

/// One actor's connection to the replay and parameter server.
pub trait ReplayClient: Send {
    /// Sends `msg`; returns the reply for request kinds that have one.
    fn request(&mut self, msg: Message) -> Result<Option<Message>, TransportError>;

    fn insert_imitation(&mut self, items: Vec<ImitationTransition>) -> Result<(), TransportError> {
        self.request(Message::InsertTransitions { protected: false, transitions: Packed::Imitation(items) }).map(|_| ())
    }

    fn insert_task(&mut self, items: Vec<TaskTransition>, protected: bool) -> Result<(), TransportError> {
        self.request(Message::InsertTransitions { protected, transitions: Packed::Task(items) }).map(|_| ())
    }

    /// `None` when the buffer is not ready.
    fn sample(&mut self, buffer: BufferId, mode: SampleMode, batch: u32, request_id: u64) -> Result<Option<(Vec<u64>, Packed)>, TransportError> {
        match self.request(Message::SampleRequest { buffer, mode, batch, request_id })? {
            Some(Message::SampleResponse { request_id: r, ids, transitions }) if r == request_id => Ok(Some((ids, transitions))),
            Some(Message::NotReady { request_id: r }) if r == request_id => Ok(None),
            other => Err(unexpected(other)),
        }
    }

    fn update_priorities(&mut self, ids: Vec<u64>, priorities: Vec<f64>) -> Result<(), TransportError> {
        self.request(Message::UpdatePriorities { ids, priorities }).map(|_| ())
    }

    /// New parameters if the server holds a version other than `known`.
    fn fetch_params(&mut self, net: NetId, known: u64) -> Result<Option<(u64, NetworkParams)>, TransportError> {
        match self.request(Message::ParamsRequest { net, known_version: known })? {
            Some(Message::ParamsResponse { net: n, version, params }) if n == net => match params {
                Some(bytes) => Ok(Some((version, deserialize_params(&bytes)?))),
                None => Ok(None),
            },
            other => Err(unexpected(other)),
        }
    }

    fn stats(&mut self) -> Result<ReplayStats, TransportError> {
        match self.request(Message::StatsRequest)? {
            Some(Message::Stats(s)) => Ok(s),
            other => Err(unexpected(other)),
        }
    }
}

/// Calls the hub directly, skipping the codec.
#[derive(Clone, Debug)]
pub struct InProcessClient {
    hub: Arc<Hub>,
}

impl InProcessClient {
    pub fn new(hub: Arc<Hub>) -> Self {
        Self { hub }
    }
}

impl ReplayClient for InProcessClient {
    fn request(&mut self, msg: Message) -> Result<Option<Message>, TransportError> {
        Ok(self.hub.handle(msg))
    }
}
