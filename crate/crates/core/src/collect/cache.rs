//! On-disk structure-constant cache.
//!
//! The file is a JSON object with a `header` (schema version, rank, mode
//! and a hash of the basis order) and the list of computed `entries`.
//! A context only accepts a cache whose header matches its own.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{CoeffMode, Exponent, GroupContext};

pub const CACHE_SCHEMA: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheHeader {
    pub schema: u32,
    pub n: u32,
    pub mode: CoeffMode,
    pub basis_order_hash: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub i: usize,
    pub j: usize,
    pub nf: Vec<(usize, Exponent)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheFile {
    pub header: CacheHeader,
    pub entries: Vec<CacheEntry>,
}

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("cache header mismatch: expected {expected:?}, found {found:?}")]
    HeaderMismatch { expected: Box<CacheHeader>, found: Box<CacheHeader> },
    #[error("cache entry ({i},{j}) is invalid")]
    BadEntry { i: usize, j: usize },
    #[error("cache entry ({i},{j}) disagrees with an already computed value")]
    Conflict { i: usize, j: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl GroupContext {
    /// SHA-256 over the basis listing, hex encoded.
    pub fn basis_order_hash(&self) -> String {
        let mut h = Sha256::new();
        for b in self.basis() {
            h.update(b.to_string().as_bytes());
            h.update(b";");
        }
        hex::encode(h.finalize())
    }

    pub fn cache_header(&self) -> CacheHeader {
        CacheHeader { schema: CACHE_SCHEMA, n: self.n(), mode: self.mode(), basis_order_hash: self.basis_order_hash() }
    }

    /// Every structure constant computed so far, sorted by `(i, j)`.
    pub fn export_cache(&self) -> CacheFile {
        let len = self.basis_len();
        let mut entries = Vec::new();
        for i in 0..len {
            for j in 0..len {
                if let Some(terms) = self.sc_cell(i, j).get() {
                    entries.push(CacheEntry { i, j, nf: terms.to_vec() });
                }
            }
        }
        CacheFile { header: self.cache_header(), entries }
    }

    /// Installs cached structure constants; returns how many were new.
    pub fn load_cache(&self, file: &CacheFile) -> Result<usize, CacheError> {
        let expected = self.cache_header();
        if file.header != expected {
            return Err(CacheError::HeaderMismatch {
                expected: Box::new(expected),
                found: Box::new(file.header.clone()),
            });
        }
        let len = self.basis_len();
        let mut installed = 0;
        for CacheEntry { i, j, nf } in &file.entries {
            let (i, j) = (*i, *j);
            let canonical = i < len
                && j < len
                && nf.windows(2).all(|w| w[0].0 < w[1].0)
                && nf.iter().all(|&(m, e)| m < len && e != 0 && self.reduce(e) == e);
            if !canonical {
                return Err(CacheError::BadEntry { i, j });
            }
            let cell = self.sc_cell(i, j);
            match cell.get() {
                Some(existing) if existing.as_ref() != nf.as_slice() => {
                    return Err(CacheError::Conflict { i, j });
                }
                Some(_) => {}
                None => {
                    if cell.set(Arc::from(nf.clone())).is_ok() {
                        installed += 1;
                    }
                }
            }
        }
        Ok(installed)
    }

    pub fn save_cache(&self, path: &Path) -> Result<(), CacheError> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let text = serde_json::to_string(&self.export_cache())?;
        fs::write(path, text)?;
        Ok(())
    }

    /// Loads `path` if it exists; a missing file is not an error.
    pub fn load_cache_file(&self, path: &Path) -> Result<usize, CacheError> {
        match fs::read_to_string(path) {
            Ok(text) => self.load_cache(&serde_json::from_str(&text)?),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(0),
            Err(e) => Err(e.into()),
        }
    }

    /// Conventional file name for this context inside a cache directory.
    pub fn cache_path(&self, dir: &Path) -> PathBuf {
        let mode = match self.mode() {
            CoeffMode::Integers => "Z".to_string(),
            CoeffMode::ModPrimePower { p, r } => format!("p{}r{}", p, r),
        };
        dir.join(format!("sc-n{}-{}-c{}.json", self.n(), mode, self.class_bound()))
    }
}
