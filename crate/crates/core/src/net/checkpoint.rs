//! JSON checkpoints. serde_json prints floats in shortest round-trip form,
//! so save → load reproduces every parameter bit-exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AdamState, NetworkParams};
use crate::error::Result;

/// How the weights in a checkpoint came to be: enough to re-derive the RNG
/// streams that produced them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedProvenance {
    pub master_seed: u64,
    /// Human-readable cell label, e.g. "regularized-lam1-s3".
    pub cell: String,
    pub derived_seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub provenance: SeedProvenance,
    pub net: NetworkParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adam: Option<AdamState>,
}

pub const CHECKPOINT_VERSION: u32 = 1;

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer(&mut w, ckpt)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let file = File::open(path)?;
    let ckpt: Checkpoint = serde_json::from_reader(BufReader::new(file))?;
    ckpt.net.validate()?;
    Ok(ckpt)
}
