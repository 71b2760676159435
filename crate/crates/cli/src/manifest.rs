//! Run manifest: what was read, with which parameters, and how the solves went.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Running,
    Ok,
    Partial,
    Error,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: &'static str,
    pub parameters: BTreeMap<String, Value>,
    pub inputs: Vec<InputDigest>,
    pub status: RunStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exit_code: Option<i32>,
    /// Solve or step outcomes by kind.
    pub counts: BTreeMap<String, usize>,
    pub outputs: Vec<String>,
    pub wall_clock_s: f64,
    #[serde(skip)]
    started: Instant,
    #[serde(skip)]
    dir: PathBuf,
}

impl RunManifest {
    pub fn new(command: &str, dir: &Path, parameters: BTreeMap<String, Value>) -> Self {
        Self {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION"),
            parameters,
            inputs: Vec::new(),
            status: RunStatus::Running,
            error: None,
            exit_code: None,
            counts: BTreeMap::new(),
            outputs: Vec::new(),
            wall_clock_s: 0.0,
            started: Instant::now(),
            dir: dir.to_path_buf(),
        }
    }

    /// Reads an input file and records its digest.
    pub fn read_input(&mut self, path: &Path) -> Result<String> {
        let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
        self.record(path, &bytes);
        String::from_utf8(bytes).with_context(|| format!("{} is not UTF-8", path.display()))
    }

    pub fn record(&mut self, path: &Path, bytes: &[u8]) {
        let path = path.display().to_string();
        if self.inputs.iter().any(|i| i.path == path) {
            return;
        }
        self.inputs.push(InputDigest {
            path,
            sha256: hex::encode(Sha256::digest(bytes)),
            bytes: bytes.len(),
        });
    }

    pub fn count(&mut self, key: &str, n: usize) {
        *self.counts.entry(key.to_string()).or_default() += n;
    }

    /// Writes `contents` under the output directory and lists it.
    pub fn output(&mut self, name: &str, contents: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).with_context(|| format!("cannot create {}", parent.display()))?;
        }
        fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    pub fn save(&mut self) -> Result<()> {
        self.wall_clock_s = self.started.elapsed().as_secs_f64();
        let text = serde_json::to_string_pretty(self)?;
        let path = self.dir.join(MANIFEST_FILE);
        fs::write(&path, text + "\n").with_context(|| format!("cannot write {}", path.display()))
    }

    pub fn finish(&mut self, status: RunStatus, exit_code: i32, error: Option<String>) -> Result<()> {
        self.status = status;
        self.exit_code = Some(exit_code);
        self.error = error;
        self.save()
    }
}
