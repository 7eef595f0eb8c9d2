//! Output directories, atomic file writes, digests and the run manifest.

use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] homog::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    BadArtifact { path: PathBuf, message: String },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 1: bad input or violated hypothesis, 2: numerical failure, 3: I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_numerical() => 2,
            CliError::Core(_) | CliError::BadArtifact { .. } => 1,
            CliError::Io { .. } => 3,
        }
    }

    pub fn record(&self) -> ErrorRecord {
        let (kind, hypothesis) = match self {
            CliError::Core(homog::Error::Hypothesis(h)) => ("HypothesisViolation", Some(h.kind())),
            CliError::Core(e) => (e.kind(), None),
            CliError::Io { .. } => ("Io", None),
            CliError::BadArtifact { .. } => ("BadArtifact", None),
        };
        ErrorRecord {
            kind: kind.to_string(),
            hypothesis: hypothesis.map(str::to_string),
            message: self.to_string(),
            exit_code: self.exit_code(),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Clone, Serialize)]
pub struct ErrorRecord {
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hypothesis: Option<String>,
    pub message: String,
    pub exit_code: i32,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn read(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<(T, String)> {
    let bytes = read(path)?;
    let value = serde_json::from_slice(&bytes).map_err(|e| CliError::BadArtifact {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok((value, sha256_hex(&bytes)))
}

/// Collects artifacts for one run and writes them with digests.
///
/// A fresh output directory is assembled next to its final location and
/// renamed into place once every file is written; an existing directory
/// receives each file through a temporary name and a rename.
pub struct Outputs {
    target: PathBuf,
    staging: Option<PathBuf>,
    digests: BTreeMap<String, String>,
}

impl Outputs {
    pub fn open(target: &Path) -> CliResult<Self> {
        if target.is_dir() {
            return Ok(Outputs {
                target: target.to_path_buf(),
                staging: None,
                digests: BTreeMap::new(),
            });
        }
        let name = target
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "out".into());
        let parent = target.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        let staging = parent.join(format!(".{name}.partial-{}", std::process::id()));
        if staging.exists() {
            fs::remove_dir_all(&staging).map_err(|e| CliError::io(&staging, e))?;
        }
        fs::create_dir(&staging).map_err(|e| CliError::io(&staging, e))?;
        Ok(Outputs {
            target: target.to_path_buf(),
            staging: Some(staging),
            digests: BTreeMap::new(),
        })
    }

    fn dir(&self) -> &Path {
        self.staging.as_deref().unwrap_or(&self.target)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.dir().join(name);
        let tmp = self.dir().join(format!(".{name}.tmp"));
        let mut f = fs::File::create(&tmp).map_err(|e| CliError::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| CliError::io(&tmp, e))?;
        f.sync_all().map_err(|e| CliError::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| CliError::io(&path, e))?;
        self.digests.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value).expect("artifact serializes");
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Writes `manifest.json` and moves a staged directory into place.
    pub fn finish(mut self, manifest: Manifest) -> CliResult<()> {
        let manifest = Manifest {
            artifacts: std::mem::take(&mut self.digests),
            ..manifest
        };
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        let path = self.dir().join("manifest.json");
        let tmp = self.dir().join(".manifest.json.tmp");
        fs::write(&tmp, text).map_err(|e| CliError::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| CliError::io(&path, e))?;
        if let Some(staging) = self.staging.take() {
            fs::rename(&staging, &self.target).map_err(|e| CliError::io(&self.target, e))?;
        }
        Ok(())
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if let Some(staging) = &self.staging {
            let _ = fs::remove_dir_all(staging);
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config: serde_json::Value,
    /// Digests of the files the run consumed.
    pub inputs: BTreeMap<String, String>,
    /// Digests of the files the run produced.
    pub artifacts: BTreeMap<String, String>,
    pub status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorRecord>,
}

impl Manifest {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        Manifest {
            tool: "homog",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            config,
            inputs: BTreeMap::new(),
            artifacts: BTreeMap::new(),
            status: "ok",
            error: None,
        }
    }
}

/// Best-effort manifest for a failed run, written straight into `dir`.
pub fn write_failure(dir: &Path, mut manifest: Manifest, err: &CliError) {
    manifest.status = "error";
    manifest.error = Some(err.record());
    if fs::create_dir_all(dir).is_ok() {
        if let Ok(mut text) = serde_json::to_string_pretty(&manifest) {
            text.push('\n');
            let _ = fs::write(dir.join("manifest.json"), text);
        }
    }
}
