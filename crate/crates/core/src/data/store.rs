//! Binary store of named feature matrices.
//!
//! Layout: magic `FMAT`, u32 version (1), u32 entry count, then per entry
//! u16 name length, name bytes, u32 rows, u32 cols and the row-major
//! values as little-endian f64. Entries are written in name order.

use std::collections::BTreeMap;
use std::path::Path;

use super::binary::{Reader, Writer};
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::scene::FeatureRef;

pub const FEATURE_MAGIC: &[u8; 4] = b"FMAT";
pub const FEATURE_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureStore {
    matrices: BTreeMap<String, Matrix>,
}

impl FeatureStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, matrix: Matrix) -> Option<Matrix> {
        self.matrices.insert(name.into(), matrix)
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.matrices.get(name)
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.matrices.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn resolve(&self, r: &FeatureRef) -> Result<&[f64]> {
        let m = self.matrices.get(&r.name).ok_or_else(|| {
            Error::Data(format!(
                "dangling feature ref: no matrix named {:?}",
                r.name
            ))
        })?;
        if r.row >= m.rows() {
            return Err(Error::Data(format!(
                "dangling feature ref: row {} of {:?} which has {} rows",
                r.row,
                r.name,
                m.rows()
            )));
        }
        Ok(m.row(r.row))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Writer::new();
        w.bytes(FEATURE_MAGIC);
        w.u32(FEATURE_VERSION);
        let count = u32::try_from(self.matrices.len())
            .map_err(|_| Error::Format("too many entries".into()))?;
        w.u32(count);
        for (name, m) in &self.matrices {
            w.named_matrix(name, m)?;
        }
        Ok(w.finish())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.expect_magic(FEATURE_MAGIC)?;
        let version = r.u32()?;
        if version != FEATURE_VERSION {
            return Err(Error::Format(format!(
                "unsupported feature store version {version}"
            )));
        }
        let count = r.u32()?;
        let mut store = FeatureStore::new();
        for _ in 0..count {
            let (name, m) = r.named_matrix()?;
            if store.matrices.insert(name.clone(), m).is_some() {
                return Err(Error::Format(format!("duplicate matrix name {name:?}")));
            }
        }
        r.finish()?;
        Ok(store)
    }
}

pub fn write_feature_matrix(path: impl AsRef<Path>, store: &FeatureStore) -> Result<()> {
    std::fs::write(path, store.to_bytes()?)?;
    Ok(())
}

pub fn read_feature_matrix(path: impl AsRef<Path>) -> Result<FeatureStore> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    FeatureStore::from_bytes(&bytes).map_err(|e| Error::load(path, e.to_string()))
}
