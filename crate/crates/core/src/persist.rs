//! Versioned JSON checkpoints.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{ChaseError, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    version: u32,
    kind: String,
    payload: T,
}

pub fn save<T: Serialize>(path: &Path, kind: &str, payload: &T) -> Result<()> {
    let env = Envelope { version: CHECKPOINT_VERSION, kind: kind.to_string(), payload };
    std::fs::write(path, serde_json::to_vec(&env)?)?;
    Ok(())
}

pub fn load<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<T> {
    let env: Envelope<T> = serde_json::from_slice(&std::fs::read(path)?)?;
    if env.version != CHECKPOINT_VERSION {
        return Err(ChaseError::InvalidInput(format!("{}: unsupported checkpoint version {}", path.display(), env.version)));
    }
    if env.kind != kind {
        return Err(ChaseError::InvalidInput(format!("{}: expected a {kind} checkpoint, found {}", path.display(), env.kind)));
    }
    Ok(env.payload)
}

/// SHA-256 of a value's JSON encoding, hex encoded.
pub fn content_hash_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(crate::simulator::content_hash(&serde_json::to_vec(value)?))
}
