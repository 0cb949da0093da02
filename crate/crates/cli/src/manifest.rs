//! Provenance record written beside every command's outputs.

use std::path::Path;

use indexmap::IndexMap;
use serde::Serialize;
use sha2::{Digest, Sha256};
use time::format_description::well_known::Rfc3339;
use time::OffsetDateTime;

use crate::error::{CliError, Result};
use crate::formats::to_json_bytes;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool: String,
    pub version: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    /// Input path to SHA-256 digest.
    pub inputs: IndexMap<String, String>,
    /// Output file name to SHA-256 digest.
    pub outputs: IndexMap<String, String>,
    /// RFC 3339 UTC; taken from `SOURCE_DATE_EPOCH` when set so that reruns are byte-identical.
    pub timestamp: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn timestamp() -> Result<String> {
    let now = match std::env::var("SOURCE_DATE_EPOCH") {
        Ok(raw) => {
            let secs: i64 = raw
                .trim()
                .parse()
                .map_err(|_| CliError::input(format!("SOURCE_DATE_EPOCH '{raw}' is not an integer")))?;
            OffsetDateTime::from_unix_timestamp(secs)
                .map_err(|e| CliError::input(format!("SOURCE_DATE_EPOCH '{raw}': {e}")))?
        }
        Err(_) => OffsetDateTime::now_utc()
            .replace_nanosecond(0)
            .expect("zero is in range"),
    };
    Ok(now.format(&Rfc3339).expect("RFC 3339 formatting of a valid date"))
}

impl RunManifest {
    pub fn new(command: &str, seed: Option<u64>, config: serde_json::Value) -> Result<Self> {
        Ok(Self {
            command: command.to_owned(),
            tool: env!("CARGO_PKG_NAME").to_owned(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            seed,
            config,
            inputs: IndexMap::new(),
            outputs: IndexMap::new(),
            timestamp: timestamp()?,
        })
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        self.inputs.insert(path.display().to_string(), sha256_hex(&bytes));
        Ok(())
    }
}

/// Collects a command's outputs and writes them, with the manifest, into one directory.
pub struct OutputDir<'a> {
    dir: &'a Path,
    manifest: RunManifest,
}

impl<'a> OutputDir<'a> {
    pub fn create(dir: &'a Path, manifest: RunManifest) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self { dir, manifest })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.manifest.outputs.insert(name.to_owned(), sha256_hex(bytes));
        Ok(())
    }

    pub fn finish(self) -> Result<()> {
        let path = self.dir.join(MANIFEST_FILE);
        std::fs::write(&path, to_json_bytes(&self.manifest)).map_err(|e| CliError::io(&path, e))
    }
}
