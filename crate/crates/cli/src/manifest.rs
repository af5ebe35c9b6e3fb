use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use indexmap::IndexMap;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST_FILE: &str = "run_manifest.jsonl";

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub run_id: String,
    pub command: String,
    pub config: Value,
    pub inputs: IndexMap<String, String>,
    pub seed: u64,
    pub tool_version: String,
    pub started_at: f64,
    pub finished_at: f64,
    pub outcome: Value,
}

pub fn now_secs() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// Hex SHA-256 of a file, or of a directory's files in name order (names
/// included, subdirectories and the manifest log skipped).
pub fn digest_path(path: &Path) -> Result<String, CliError> {
    let mut h = Sha256::new();
    if path.is_dir() {
        let mut names: Vec<_> = fs::read_dir(path)
            .map_err(|e| CliError::io(path, e))?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().is_file() && e.file_name() != MANIFEST_FILE)
            .map(|e| e.file_name())
            .collect();
        names.sort();
        for name in names {
            let p = path.join(&name);
            h.update(name.to_string_lossy().as_bytes());
            h.update([0]);
            h.update(fs::read(&p).map_err(|e| CliError::io(&p, e))?);
        }
    } else {
        h.update(fs::read(path).map_err(|e| CliError::io(path, e))?);
    }
    Ok(hex(&h.finalize()))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Content address of a run: command, resolved config, input digests, seed.
pub fn run_id(command: &str, config: &Value, inputs: &IndexMap<String, String>, seed: u64) -> String {
    let mut h = Sha256::new();
    h.update(command.as_bytes());
    h.update([0]);
    h.update(config.to_string().as_bytes());
    for (k, v) in inputs {
        h.update([0]);
        h.update(k.as_bytes());
        h.update(b"=");
        h.update(v.as_bytes());
    }
    h.update(seed.to_le_bytes());
    hex(&h.finalize())[..16].to_string()
}

impl RunManifest {
    pub fn new(command: &str, config: Value, inputs: IndexMap<String, String>, seed: u64, started_at: f64) -> Self {
        RunManifest {
            run_id: run_id(command, &config, &inputs, seed),
            command: command.to_string(),
            config,
            inputs,
            seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started_at,
            finished_at: started_at,
            outcome: Value::Null,
        }
    }

    /// Appends one line to `<out_dir>/run_manifest.jsonl`.
    pub fn append(mut self, out_dir: &Path, outcome: Value) -> Result<Self, CliError> {
        self.finished_at = now_secs();
        self.outcome = outcome;
        let path = out_dir.join(MANIFEST_FILE);
        let mut f = OpenOptions::new().create(true).append(true).open(&path).map_err(|e| CliError::io(&path, e))?;
        let line = serde_json::to_string(&self).expect("manifest serializes");
        writeln!(f, "{line}").map_err(|e| CliError::io(&path, e))?;
        Ok(self)
    }
}
