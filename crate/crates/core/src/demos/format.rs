//! Demonstration dataset file, all integers and reals little-endian:
//!
//! ```text
//! "MMDM"                 4 bytes magic
//! version                u32 (1)
//! env config hash        u64
//! grid                   u32
//! body dim               u32
//! action dim             u32
//! style                  u8 (0 train, 1 validation)
//! episode count          u32
//! per episode:
//!   length L             u32 (observations, at least 2)
//!   has actions          u8
//!   cumulative reward    f64
//!   L state records      78 bytes each (see env::export_state)
//!   L observations       3*grid*grid image f64s, then body f64s
//!   actions              (L - 1) * action dim f64s, only when has actions = 1
//! ```

use std::path::Path;
use std::sync::Arc;

use crate::bytes::{put_f64s, put_u32, put_u64, ByteReader, Truncated};
use crate::env::{export_state, import_state, EnvConfig, Observation, ACTION_DIM, BODY_DIM, IMAGE_CHANNELS, STATE_RECORD_LEN};

use super::{DatasetHeader, DemoDataset, DemoError, Demonstration, StyleTag};

pub const DATASET_MAGIC: &[u8; 4] = b"MMDM";
pub const DATASET_VERSION: u32 = 1;

impl From<Truncated> for DemoError {
    fn from(t: Truncated) -> Self {
        DemoError::Corrupt { offset: t.offset, reason: format!("truncated {}", t.what) }
    }
}

fn corrupt(offset: usize, reason: impl Into<String>) -> DemoError {
    DemoError::Corrupt { offset, reason: reason.into() }
}

pub fn encode_dataset(dataset: &DemoDataset) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(DATASET_MAGIC);
    put_u32(&mut out, DATASET_VERSION);
    put_u64(&mut out, dataset.header.env_hash);
    put_u32(&mut out, dataset.header.grid);
    put_u32(&mut out, dataset.header.body_dim);
    put_u32(&mut out, ACTION_DIM as u32);
    out.push(dataset.header.style as u8);
    put_u32(&mut out, dataset.demos.len() as u32);
    for demo in &dataset.demos {
        put_u32(&mut out, demo.observations.len() as u32);
        out.push(demo.actions.is_some() as u8);
        put_f64s(&mut out, &[demo.cumulative_task_reward]);
        for s in &demo.states {
            out.extend_from_slice(&export_state(s));
        }
        for o in &demo.observations {
            put_f64s(&mut out, &o.image);
            put_f64s(&mut out, &o.body);
        }
        if let Some(actions) = &demo.actions {
            for a in actions {
                put_f64s(&mut out, a);
            }
        }
    }
    out
}

/// Parses a dataset. Action tracks are kept only when `privileged` is set.
pub fn decode_dataset(bytes: &[u8], privileged: bool) -> Result<DemoDataset, DemoError> {
    let mut r = ByteReader::new(bytes);
    if r.take(4, "magic")? != DATASET_MAGIC {
        return Err(corrupt(0, "bad magic"));
    }
    let version = r.u32("version")?;
    if version != DATASET_VERSION {
        return Err(corrupt(4, format!("unsupported version {version}")));
    }
    let env_hash = r.u64("config hash")?;
    let grid_at = r.pos();
    let grid = r.u32("grid")?;
    if !(4..=256).contains(&grid) {
        return Err(corrupt(grid_at, format!("grid {grid} out of range")));
    }
    let dims_at = r.pos();
    let body_dim = r.u32("body dim")?;
    let action_dim = r.u32("action dim")?;
    if body_dim as usize != BODY_DIM || action_dim as usize != ACTION_DIM {
        return Err(corrupt(dims_at, format!("unsupported dims body {body_dim} action {action_dim}")));
    }
    let style_at = r.pos();
    let style = StyleTag::from_byte(r.u8("style")?).ok_or_else(|| corrupt(style_at, "unknown style"))?;
    let count = r.u32("episode count")? as usize;
    let image_len = IMAGE_CHANNELS * (grid as usize).pow(2);

    let mut demos = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let len_at = r.pos();
        let len = r.u32("episode length")? as usize;
        if len < 2 {
            return Err(corrupt(len_at, format!("episode length {len} below 2")));
        }
        let flag_at = r.pos();
        let has_actions = match r.u8("action flag")? {
            0 => false,
            1 => true,
            b => return Err(corrupt(flag_at, format!("action flag {b}"))),
        };
        let cumulative_task_reward = r.f64("cumulative reward")?;
        let mut states = Vec::with_capacity(len.min(4096));
        for _ in 0..len {
            let at = r.pos();
            let rec = r.take(STATE_RECORD_LEN, "state record")?;
            states.push(import_state(rec).map_err(|e| corrupt(at, e.to_string()))?);
        }
        let mut observations = Vec::with_capacity(len.min(4096));
        for _ in 0..len {
            let image = r.f64s(image_len, "observation image")?;
            let body: [f64; BODY_DIM] = r.f64s(BODY_DIM, "observation body")?.try_into().expect("body length");
            observations.push(Arc::new(Observation { grid: grid as usize, image, body }));
        }
        let actions = if has_actions {
            let mut actions = Vec::with_capacity(len - 1);
            for _ in 0..len - 1 {
                let a: [f64; ACTION_DIM] = r.f64s(ACTION_DIM, "action")?.try_into().expect("action length");
                actions.push(a);
            }
            privileged.then_some(actions)
        } else {
            None
        };
        demos.push(Demonstration { style, states, observations, cumulative_task_reward, actions });
    }
    if r.remaining() != 0 {
        return Err(corrupt(r.pos(), "trailing bytes"));
    }
    Ok(DemoDataset { header: DatasetHeader { env_hash, grid, body_dim, style }, demos })
}

pub fn save_dataset(path: &Path, dataset: &DemoDataset) -> Result<(), DemoError> {
    std::fs::write(path, encode_dataset(dataset)).map_err(|source| DemoError::Io { path: path.to_path_buf(), source })
}

/// Reads a dataset and checks it was recorded under `env`. The first observation of
/// every episode must match a render of its initial state.
pub fn load_dataset(path: &Path, env: &EnvConfig, privileged: bool) -> Result<DemoDataset, DemoError> {
    let bytes = std::fs::read(path).map_err(|source| DemoError::Io { path: path.to_path_buf(), source })?;
    let dataset = decode_dataset(&bytes, privileged)?;
    dataset.check_env(env)?;
    for (i, d) in dataset.demos.iter().enumerate() {
        if *d.observations[0] != env.observe(&d.states[0]) {
            return Err(corrupt(0, format!("episode {i}: first observation does not match its initial state")));
        }
    }
    Ok(dataset)
}
