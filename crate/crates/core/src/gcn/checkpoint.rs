//! Model checkpoint container.
//!
//! Layout: magic `MGRP`, u32 version, u32 header length, a JSON header
//! echoing the training config and class names, u32 parameter count, then
//! per parameter u16 name length, name bytes, u32 rows, u32 cols and the
//! row-major values as little-endian f64.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelParams, TrainConfig};
use crate::data::binary::{Reader, Writer};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MGRP";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub class_names: Vec<String>,
    pub params: ModelParams,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: TrainConfig,
    class_names: Vec<String>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&Header {
            config: self.config.clone(),
            class_names: self.class_names.clone(),
        })?;
        let mut w = Writer::new();
        w.bytes(CHECKPOINT_MAGIC);
        w.u32(CHECKPOINT_VERSION);
        w.u32(u32::try_from(header.len()).map_err(|_| Error::Format("header too large".into()))?);
        w.bytes(&header);
        let names = self.params.tensor_names();
        let tensors = self.params.tensors();
        w.u32(names.len() as u32);
        for (name, m) in names.iter().zip(tensors) {
            w.named_matrix(name, m)?;
        }
        Ok(w.finish())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.expect_magic(CHECKPOINT_MAGIC)?;
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let header_len = r.u32()? as usize;
        let header: Header = serde_json::from_slice(r.take(header_len)?)
            .map_err(|e| Error::Format(format!("checkpoint header: {e}")))?;
        header.config.validate()?;
        let count = r.u32()?;
        let mut named = Vec::new();
        for _ in 0..count {
            named.push(r.named_matrix()?);
        }
        r.finish()?;
        let params = ModelParams::from_named(header.config.flags(), header.config.seed, named)?;
        if params.num_classes() != header.class_names.len() {
            return Err(Error::Format(format!(
                "checkpoint has {} classes but {} class names",
                params.num_classes(),
                header.class_names.len()
            )));
        }
        Ok(Checkpoint {
            config: header.config,
            class_names: header.class_names,
            params,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path)?;
        Checkpoint::from_bytes(&bytes).map_err(|e| Error::load(path, e.to_string()))
    }
}
