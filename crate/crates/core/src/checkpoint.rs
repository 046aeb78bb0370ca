//! Versioned checkpoint container with content hashes and an upstream hash chain.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::ParamStore;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub module: String,
    pub format_version: u32,
    pub config_hash: String,
    /// Upstream module id → content hash of the checkpoint this one was built against.
    pub upstream: BTreeMap<String, String>,
    pub meta: serde_json::Value,
    pub params: ParamStore,
}

impl Checkpoint {
    pub fn new(module: &str, config_hash: String, meta: serde_json::Value, params: ParamStore) -> Self {
        Checkpoint {
            module: module.to_string(),
            format_version: FORMAT_VERSION,
            config_hash,
            upstream: BTreeMap::new(),
            meta,
            params,
        }
    }

    pub fn with_upstream(mut self, module: &str, hash: &str) -> Self {
        self.upstream.insert(module.to_string(), hash.to_string());
        self
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("checkpoint serialises")
    }

    pub fn content_hash(&self) -> String {
        hash_bytes(&self.to_bytes())
    }

    /// Writes the checkpoint and returns its content hash.
    pub fn save(&self, path: &Path) -> Result<String> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
        }
        let bytes = self.to_bytes();
        fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
        Ok(hash_bytes(&bytes))
    }

    /// Reads a checkpoint of the given module; returns it with its content hash.
    pub fn load(path: &Path, module: &str) -> Result<(Self, String)> {
        if !path.exists() {
            return Err(Error::Config(format!("missing {module} checkpoint {}", path.display())));
        }
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_slice(&bytes)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        if ckpt.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "{}: format version {} (expected {FORMAT_VERSION})",
                path.display(),
                ckpt.format_version
            )));
        }
        if ckpt.module != module {
            return Err(Error::Checkpoint(format!(
                "{} holds a `{}` checkpoint, expected `{module}`",
                path.display(),
                ckpt.module
            )));
        }
        Ok((ckpt, hash_bytes(&bytes)))
    }

    /// Fails unless this checkpoint was built against `hash` of `module`.
    pub fn require_upstream(&self, module: &str, hash: &str) -> Result<()> {
        match self.upstream.get(module) {
            Some(h) if h == hash => Ok(()),
            Some(h) => Err(Error::Checkpoint(format!(
                "{} checkpoint was built against {module} {}, but {} was supplied",
                self.module,
                short(h),
                short(hash)
            ))),
            None => Err(Error::Checkpoint(format!(
                "{} checkpoint records no {module} upstream",
                self.module
            ))),
        }
    }

    pub fn meta_as<T: for<'de> Deserialize<'de>>(&self) -> Result<T> {
        serde_json::from_value(self.meta.clone()).map_err(|e| Error::Checkpoint(format!("{} metadata: {e}", self.module)))
    }
}

fn short(h: &str) -> &str {
    &h[..h.len().min(12)]
}

pub fn hash_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Stable hash of any serialisable configuration.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    hash_bytes(&serde_json::to_vec(value).expect("config serialises"))
}
