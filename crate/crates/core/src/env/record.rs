//! Fixed little-endian state record:
//!
//! ```text
//! version u8 (1)
//! gripper x, y | velocity x, y | aperture | block A x, y | block B x, y   9 x f64
//! held u8 (0/1)
//! step u32
//! ```

use super::{EnvError, EnvState};

pub const STATE_RECORD_VERSION: u8 = 1;
pub const STATE_RECORD_LEN: usize = 1 + 9 * 8 + 1 + 4;

pub fn export_state(state: &EnvState) -> Vec<u8> {
    let mut out = Vec::with_capacity(STATE_RECORD_LEN);
    out.push(STATE_RECORD_VERSION);
    let values = [
        state.gripper[0],
        state.gripper[1],
        state.velocity[0],
        state.velocity[1],
        state.aperture,
        state.block_a[0],
        state.block_a[1],
        state.block_b[0],
        state.block_b[1],
    ];
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.push(state.held as u8);
    out.extend_from_slice(&state.step.to_le_bytes());
    out
}

pub fn import_state(bytes: &[u8]) -> Result<EnvState, EnvError> {
    if bytes.len() != STATE_RECORD_LEN {
        return Err(EnvError::CorruptRecord(format!(
            "expected {STATE_RECORD_LEN} bytes, got {}",
            bytes.len()
        )));
    }
    if bytes[0] != STATE_RECORD_VERSION {
        return Err(EnvError::CorruptRecord(format!("unsupported record version {}", bytes[0])));
    }
    let f = |i: usize| {
        let start = 1 + 8 * i;
        f64::from_le_bytes(bytes[start..start + 8].try_into().expect("8 bytes"))
    };
    let held = match bytes[73] {
        0 => false,
        1 => true,
        b => return Err(EnvError::CorruptRecord(format!("held flag {b}"))),
    };
    let state = EnvState {
        gripper: [f(0), f(1)],
        velocity: [f(2), f(3)],
        aperture: f(4),
        block_a: [f(5), f(6)],
        block_b: [f(7), f(8)],
        held,
        step: u32::from_le_bytes(bytes[74..78].try_into().expect("4 bytes")),
    };
    if (0..9).any(|i| !f(i).is_finite()) {
        return Err(EnvError::CorruptRecord("non-finite field".into()));
    }
    Ok(state)
}
