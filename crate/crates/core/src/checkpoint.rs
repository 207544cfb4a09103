//! JSON checkpoints for fitted parameters, used for warm starts across a
//! sequence and for inspecting what a fit converged to.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backscatter::BackscatterParams;
use crate::deatten::DeattenParams;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "seaclear-checkpoint/1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub backscatter_layers: usize,
    pub deatten_terms: usize,
    pub backscatter: BackscatterParams,
    pub deatten: DeattenParams,
    /// How the fit was initialized (for provenance, not machine use).
    pub init_scheme: String,
    /// The projection box the parameters satisfy.
    pub bounds_note: String,
}

impl Checkpoint {
    pub fn new(backscatter: BackscatterParams, deatten: DeattenParams, init_scheme: &str) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            backscatter_layers: backscatter.layers(),
            deatten_terms: deatten.terms(),
            backscatter,
            deatten,
            init_scheme: init_scheme.to_string(),
            bounds_note: "amplitudes in [0,1]; backscatter rates >= 0; deatten rates in [0,1]"
                .to_string(),
        }
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, ckpt).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    w.write_all(b"\n").map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let ckpt: Checkpoint =
        serde_json::from_reader(BufReader::new(file)).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
    if ckpt.format != CHECKPOINT_FORMAT {
        return Err(Error::InvalidArgument {
            what: "checkpoint format",
            why: format!("{} (expected {CHECKPOINT_FORMAT})", ckpt.format),
        });
    }
    Ok(ckpt)
}
