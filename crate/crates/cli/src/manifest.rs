//! Run manifests: every command records what it read, what it wrote and
//! the configuration it resolved, so a run can be audited and replayed.

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// One manifest per command invocation. Re-running a command with the
/// same inputs, seed and configuration reproduces every output byte for
/// byte; only the timestamps differ.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    /// Requested worker threads (0 = library default).
    pub threads: usize,
    /// Fully resolved command configuration, flags and defaults alike.
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    /// Output files, relative to the output directory.
    pub outputs: Vec<String>,
    pub started_at_epoch_s: u64,
    pub finished_at_epoch_s: u64,
}

impl RunManifest {
    pub fn begin(command: &str, seed: u64, threads: usize, config: serde_json::Value) -> Self {
        RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            threads,
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            started_at_epoch_s: epoch_seconds(),
            finished_at_epoch_s: 0,
        }
    }

    /// Digest and record an input file.
    pub fn record_input(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.inputs.push(FileDigest {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        });
        Ok(())
    }

    pub fn record_outputs<I, S>(&mut self, names: I)
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.outputs.extend(names.into_iter().map(Into::into));
    }

    /// Stamp the end time and write `manifest-<command>.json` under `dir`.
    pub fn finish(mut self, dir: &Path) -> Result<PathBuf> {
        self.finished_at_epoch_s = epoch_seconds();
        let path = dir.join(format!("manifest-{}.json", self.command));
        write_json(&path, &self)?;
        Ok(path)
    }
}

fn epoch_seconds() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file =
        File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file.read(&mut buf).with_context(|| format!("read {}", path.display()))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(format!("{:x}", hasher.finalize()))
}

/// Pretty-printed JSON with a trailing newline; field order follows the
/// struct, so output bytes are deterministic.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut file =
        File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let text = serde_json::to_string_pretty(value)?;
    file.write_all(text.as_bytes())?;
    file.write_all(b"\n")?;
    Ok(())
}
