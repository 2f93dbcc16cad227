//! Frame codec. A frame is `u32 payload length | u8 tag | payload`, little-endian
//! throughout. Payload layouts per tag:
//!
//! ```text
//! 1 InsertTransitions  u8 buffer, u8 protected, u32 count, count packed transitions
//! 2 SampleRequest      u8 buffer, u8 mode, u32 batch, u64 request id
//! 3 SampleResponse     u64 request id, u8 buffer, u32 count, count u64 ids, count packed transitions
//! 4 NotReady           u64 request id
//! 5 UpdatePriorities   u32 count, count u64 ids, count f64 priorities
//! 6 ParamsRequest      u8 net, u64 known version
//! 7 ParamsResponse     u8 net, u64 version, u8 changed, if changed: u32 length, bytes
//! 8 StatsRequest       empty
//! 9 Stats              8 u64 counters, 5 f64 priority quantiles
//! ```
//!
//! A packed observation is `u32 grid, 3*grid*grid f64 image, 5 f64 body`. A packed task
//! transition is `obs, 3 f64 action, next obs, f64 reward, f64 discount`; an imitation
//! transition is `obs, action, next obs, f64 imitation reward, f64 task reward, f64 discount,
//! next goal, goal, u32 demo id, u32 step index`.

use std::io::{Read, Write};
use std::sync::Arc;

use thiserror::Error;

use crate::bytes::{put_f64s, put_u32, put_u64, ByteReader, Truncated};
use crate::env::{Observation, ACTION_DIM, BODY_DIM, IMAGE_CHANNELS};
use crate::replay::{Action, ImitationTransition, ReplayStats, TaskTransition};

/// Largest accepted payload.
pub const MAX_PAYLOAD: usize = 64 << 20;
pub const HEADER_LEN: usize = 5;
const MAX_GRID: u32 = 256;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("short frame: need {needed} bytes, have {available}")]
    ShortFrame { needed: usize, available: usize },
    #[error("unknown message tag {0}")]
    BadTag(u8),
    #[error("payload length {0} exceeds limit")]
    LengthOverflow(usize),
    #[error("malformed payload at byte {offset}: {reason}")]
    Malformed { offset: usize, reason: String },
}

impl From<Truncated> for ProtocolError {
    fn from(t: Truncated) -> Self {
        ProtocolError::Malformed { offset: t.offset, reason: format!("truncated {}", t.what) }
    }
}

fn malformed(offset: usize, reason: impl Into<String>) -> ProtocolError {
    ProtocolError::Malformed { offset, reason: reason.into() }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BufferId {
    Imitation = 0,
    Task = 1,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SampleMode {
    Prioritized = 0,
    Uniform = 1,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NetId {
    ImitationPolicy = 0,
    TaskPolicy = 1,
}

impl BufferId {
    fn from_byte(b: u8) -> Option<Self> {
        [Self::Imitation, Self::Task].into_iter().find(|x| *x as u8 == b)
    }
}

impl SampleMode {
    fn from_byte(b: u8) -> Option<Self> {
        [Self::Prioritized, Self::Uniform].into_iter().find(|x| *x as u8 == b)
    }
}

impl NetId {
    fn from_byte(b: u8) -> Option<Self> {
        [Self::ImitationPolicy, Self::TaskPolicy].into_iter().find(|x| *x as u8 == b)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Packed {
    Imitation(Vec<ImitationTransition>),
    Task(Vec<TaskTransition>),
}

impl Packed {
    pub fn len(&self) -> usize {
        match self {
            Packed::Imitation(v) => v.len(),
            Packed::Task(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn buffer(&self) -> BufferId {
        match self {
            Packed::Imitation(_) => BufferId::Imitation,
            Packed::Task(_) => BufferId::Task,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Message {
    InsertTransitions { protected: bool, transitions: Packed },
    SampleRequest { buffer: BufferId, mode: SampleMode, batch: u32, request_id: u64 },
    SampleResponse { request_id: u64, ids: Vec<u64>, transitions: Packed },
    NotReady { request_id: u64 },
    UpdatePriorities { ids: Vec<u64>, priorities: Vec<f64> },
    ParamsRequest { net: NetId, known_version: u64 },
    /// `params` is `None` when the caller already holds `version`.
    ParamsResponse { net: NetId, version: u64, params: Option<Vec<u8>> },
    StatsRequest,
    Stats(ReplayStats),
}

impl Message {
    pub fn tag(&self) -> u8 {
        match self {
            Message::InsertTransitions { .. } => 1,
            Message::SampleRequest { .. } => 2,
            Message::SampleResponse { .. } => 3,
            Message::NotReady { .. } => 4,
            Message::UpdatePriorities { .. } => 5,
            Message::ParamsRequest { .. } => 6,
            Message::ParamsResponse { .. } => 7,
            Message::StatsRequest => 8,
            Message::Stats(_) => 9,
        }
    }
}

fn put_obs(out: &mut Vec<u8>, o: &Observation) {
    put_u32(out, o.grid as u32);
    put_f64s(out, &o.image);
    put_f64s(out, &o.body);
}

fn put_packed(out: &mut Vec<u8>, packed: &Packed) {
    match packed {
        Packed::Task(items) => {
            for t in items {
                put_obs(out, &t.obs);
                put_f64s(out, &t.action);
                put_obs(out, &t.next_obs);
                put_f64s(out, &[t.reward_task, t.discount]);
            }
        }
        Packed::Imitation(items) => {
            for t in items {
                put_obs(out, &t.obs);
                put_f64s(out, &t.action);
                put_obs(out, &t.next_obs);
                put_f64s(out, &[t.reward_imitate, t.reward_task, t.discount]);
                put_obs(out, &t.next_goal);
                put_obs(out, &t.goal);
                put_u32(out, t.demo_id);
                put_u32(out, t.step_index);
            }
        }
    }
}

/// Encodes one complete frame.
pub fn encode(msg: &Message) -> Vec<u8> {
    let mut p = Vec::new();
    match msg {
        Message::InsertTransitions { protected, transitions } => {
            p.push(transitions.buffer() as u8);
            p.push(*protected as u8);
            put_u32(&mut p, transitions.len() as u32);
            put_packed(&mut p, transitions);
        }
        Message::SampleRequest { buffer, mode, batch, request_id } => {
            p.push(*buffer as u8);
            p.push(*mode as u8);
            put_u32(&mut p, *batch);
            put_u64(&mut p, *request_id);
        }
        Message::SampleResponse { request_id, ids, transitions } => {
            put_u64(&mut p, *request_id);
            p.push(transitions.buffer() as u8);
            put_u32(&mut p, ids.len() as u32);
            for id in ids {
                put_u64(&mut p, *id);
            }
            put_packed(&mut p, transitions);
        }
        Message::NotReady { request_id } => put_u64(&mut p, *request_id),
        Message::UpdatePriorities { ids, priorities } => {
            put_u32(&mut p, ids.len() as u32);
            for id in ids {
                put_u64(&mut p, *id);
            }
            put_f64s(&mut p, priorities);
        }
        Message::ParamsRequest { net, known_version } => {
            p.push(*net as u8);
            put_u64(&mut p, *known_version);
        }
        Message::ParamsResponse { net, version, params } => {
            p.push(*net as u8);
            put_u64(&mut p, *version);
            match params {
                None => p.push(0),
                Some(bytes) => {
                    p.push(1);
                    put_u32(&mut p, bytes.len() as u32);
                    p.extend_from_slice(bytes);
                }
            }
        }
        Message::StatsRequest => {}
        Message::Stats(s) => {
            for v in [
                s.imitation_len,
                s.task_len,
                s.task_protected,
                s.imitation_inserts,
                s.task_inserts,
                s.imitation_samples,
                s.task_samples,
                s.not_ready,
            ] {
                put_u64(&mut p, v);
            }
            put_f64s(&mut p, &s.priority_quantiles);
        }
    }
    let mut frame = Vec::with_capacity(HEADER_LEN + p.len());
    put_u32(&mut frame, p.len() as u32);
    frame.push(msg.tag());
    frame.extend_from_slice(&p);
    frame
}

fn read_obs(r: &mut ByteReader<'_>) -> Result<Arc<Observation>, ProtocolError> {
    let at = r.pos();
    let grid = r.u32("grid")?;
    if grid == 0 || grid > MAX_GRID {
        return Err(malformed(at, format!("grid {grid} out of range")));
    }
    let image = r.f64s(IMAGE_CHANNELS * (grid as usize).pow(2), "image")?;
    let body: [f64; BODY_DIM] = r.f64s(BODY_DIM, "body")?.try_into().expect("body length");
    Ok(Arc::new(Observation { grid: grid as usize, image, body }))
}

fn read_action(r: &mut ByteReader<'_>) -> Result<Action, ProtocolError> {
    Ok(r.f64s(ACTION_DIM, "action")?.try_into().expect("action length"))
}

fn read_packed(r: &mut ByteReader<'_>, buffer: BufferId, count: usize) -> Result<Packed, ProtocolError> {
    // Every packed item is far larger than 8 bytes, so this bounds allocation by input size.
    if count > r.remaining() / 8 {
        return Err(malformed(r.pos(), format!("count {count} exceeds payload")));
    }
    Ok(match buffer {
        BufferId::Task => {
            let mut items = Vec::with_capacity(count);
            for _ in 0..count {
                let obs = read_obs(r)?;
                let action = read_action(r)?;
                let next_obs = read_obs(r)?;
                let reward_task = r.f64("reward")?;
                let discount = r.f64("discount")?;
                items.push(TaskTransition { obs, action, next_obs, reward_task, discount });
            }
            Packed::Task(items)
        }
        BufferId::Imitation => {
            let mut items = Vec::with_capacity(count);
            for _ in 0..count {
                let obs = read_obs(r)?;
                let action = read_action(r)?;
                let next_obs = read_obs(r)?;
                let reward_imitate = r.f64("imitation reward")?;
                let reward_task = r.f64("task reward")?;
                let discount = r.f64("discount")?;
                let next_goal = read_obs(r)?;
                let goal = read_obs(r)?;
                let demo_id = r.u32("demo id")?;
                let step_index = r.u32("step index")?;
                items.push(ImitationTransition {
                    obs,
                    action,
                    next_obs,
                    reward_imitate,
                    reward_task,
                    discount,
                    next_goal,
                    goal,
                    demo_id,
                    step_index,
                });
            }
            Packed::Imitation(items)
        }
    })
}

fn read_ids(r: &mut ByteReader<'_>, count: usize) -> Result<Vec<u64>, ProtocolError> {
    if count > r.remaining() / 8 {
        return Err(malformed(r.pos(), format!("count {count} exceeds payload")));
    }
    (0..count).map(|_| r.u64("id").map_err(Into::into)).collect()
}

fn read_enum<T>(r: &mut ByteReader<'_>, what: &'static str, f: fn(u8) -> Option<T>) -> Result<T, ProtocolError> {
    let at = r.pos();
    let b = r.u8(what)?;
    f(b).ok_or_else(|| malformed(at, format!("unknown {what} {b}")))
}

fn decode_payload(tag: u8, payload: &[u8]) -> Result<Message, ProtocolError> {
    let mut r = ByteReader::new(payload);
    let msg = match tag {
        1 => {
            let buffer = read_enum(&mut r, "buffer", BufferId::from_byte)?;
            let at = r.pos();
            let protected = match r.u8("protected flag")? {
                0 => false,
                1 => true,
                b => return Err(malformed(at, format!("protected flag {b}"))),
            };
            if protected && buffer == BufferId::Imitation {
                return Err(malformed(at, "imitation items cannot be protected"));
            }
            let count = r.u32("count")? as usize;
            Message::InsertTransitions { protected, transitions: read_packed(&mut r, buffer, count)? }
        }
        2 => Message::SampleRequest {
            buffer: read_enum(&mut r, "buffer", BufferId::from_byte)?,
            mode: read_enum(&mut r, "mode", SampleMode::from_byte)?,
            batch: r.u32("batch")?,
            request_id: r.u64("request id")?,
        },
        3 => {
            let request_id = r.u64("request id")?;
            let buffer = read_enum(&mut r, "buffer", BufferId::from_byte)?;
            let count = r.u32("count")? as usize;
            let ids = read_ids(&mut r, count)?;
            Message::SampleResponse { request_id, ids, transitions: read_packed(&mut r, buffer, count)? }
        }
        4 => Message::NotReady { request_id: r.u64("request id")? },
        5 => {
            let count = r.u32("count")? as usize;
            let ids = read_ids(&mut r, count)?;
            let priorities = r.f64s(count, "priorities")?;
            Message::UpdatePriorities { ids, priorities }
        }
        6 => Message::ParamsRequest {
            net: read_enum(&mut r, "net", NetId::from_byte)?,
            known_version: r.u64("known version")?,
        },
        7 => {
            let net = read_enum(&mut r, "net", NetId::from_byte)?;
            let version = r.u64("version")?;
            let at = r.pos();
            let params = match r.u8("changed flag")? {
                0 => None,
                1 => {
                    let len = r.u32("params length")? as usize;
                    Some(r.take(len, "params")?.to_vec())
                }
                b => return Err(malformed(at, format!("changed flag {b}"))),
            };
            Message::ParamsResponse { net, version, params }
        }
        8 => Message::StatsRequest,
        9 => {
            let mut c = [0u64; 8];
            for v in &mut c {
                *v = r.u64("counter")?;
            }
            let q: [f64; 5] = r.f64s(5, "quantiles")?.try_into().expect("five quantiles");
            Message::Stats(ReplayStats {
                imitation_len: c[0],
                task_len: c[1],
                task_protected: c[2],
                imitation_inserts: c[3],
                task_inserts: c[4],
                imitation_samples: c[5],
                task_samples: c[6],
                not_ready: c[7],
                priority_quantiles: q,
            })
        }
        t => return Err(ProtocolError::BadTag(t)),
    };
    if r.remaining() != 0 {
        return Err(malformed(r.pos(), "trailing payload bytes"));
    }
    Ok(msg)
}

/// Payload length and tag from a frame header.
pub fn decode_header(header: &[u8]) -> Result<(usize, u8), ProtocolError> {
    if header.len() < HEADER_LEN {
        return Err(ProtocolError::ShortFrame { needed: HEADER_LEN, available: header.len() });
    }
    let len = u32::from_le_bytes(header[..4].try_into().expect("4 bytes")) as usize;
    if len > MAX_PAYLOAD {
        return Err(ProtocolError::LengthOverflow(len));
    }
    Ok((len, header[4]))
}

/// Decodes a buffer holding exactly one frame.
pub fn decode(bytes: &[u8]) -> Result<Message, ProtocolError> {
    let (len, tag) = decode_header(bytes)?;
    let total = HEADER_LEN + len;
    if bytes.len() < total {
        return Err(ProtocolError::ShortFrame { needed: total, available: bytes.len() });
    }
    if bytes.len() > total {
        return Err(malformed(total, "bytes after frame end"));
    }
    decode_payload(tag, &bytes[HEADER_LEN..])
}

#[derive(Debug, Error)]
pub enum FrameIoError {
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn write_frame<W: Write>(w: &mut W, msg: &Message) -> std::io::Result<()> {
    w.write_all(&encode(msg))?;
    w.flush()
}

/// Reads one frame from a stream.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Message, FrameIoError> {
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header)?;
    let (len, tag) = decode_header(&header)?;
    let mut payload = vec![0u8; len];
    r.read_exact(&mut payload)?;
    Ok(decode_payload(tag, &payload)?)
}
