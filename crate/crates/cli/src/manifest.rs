//! Run manifest written beside every command's outputs.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize)]
pub struct InputFile {
    pub path: PathBuf,
    pub bytes: u64,
    pub sha256: String,
}

impl InputFile {
    pub fn hash(path: &Path) -> std::io::Result<Self> {
        let mut reader = BufReader::new(File::open(path)?);
        let mut hasher = Sha256::new();
        let mut buf = [0u8; 1 << 16];
        let mut bytes = 0u64;
        loop {
            let n = reader.read(&mut buf)?;
            if n == 0 {
                break;
            }
            hasher.update(&buf[..n]);
            bytes += n as u64;
        }
        Ok(Self {
            path: path.to_path_buf(),
            bytes,
            sha256: hex::encode(hasher.finalize()),
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    /// Flags after merging the config file, plus the resolved library settings.
    pub config: serde_json::Value,
    pub inputs: Vec<InputFile>,
    pub outputs: Vec<PathBuf>,
    pub seed: Option<u64>,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    pub wall_clock_secs: f64,
    pub exit_code: i32,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunManifest {
    pub fn new(command: &'static str, started_at: DateTime<Utc>) -> Self {
        Self {
            schema_version: MANIFEST_SCHEMA_VERSION,
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            config: serde_json::Value::Null,
            inputs: Vec::new(),
            outputs: Vec::new(),
            seed: None,
            started_at,
            finished_at: started_at,
            wall_clock_secs: 0.0,
            exit_code: 0,
            warnings: Vec::new(),
            error: None,
        }
    }

    /// Hashes `path` if it can be read; unreadable inputs are reported by
    /// the command itself.
    pub fn add_input(&mut self, path: &Path) {
        if let Ok(f) = InputFile::hash(path) {
            self.inputs.push(f);
        }
    }
}
