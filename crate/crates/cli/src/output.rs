#[cfg(test)]
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use stockpot_core::tensor_store::{load_checkpoint, save_checkpoint, write_atomic};
use stockpot_core::{Checkpoint, Error};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Clap(#[from] clap::Error),

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] Error),

    /// A check ran to completion and did not hold.
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Clap(_) | CliError::Usage(_) => 1,
            CliError::Failed(_) => 3,
            CliError::Core(e) => match e {
                Error::InvalidArgument(_) => 1,
                // a scorer that fails or returns NaN leaves the search without a number
                Error::Degenerate { .. } | Error::Scorer { .. } => 3,
                Error::Io { .. }
                | Error::Parse { .. }
                | Error::Format(_)
                | Error::Schema(_)
                | Error::Json(_)
                | Error::Csv(_) => 2,
            },
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub fn load(path: &Path) -> Result<Checkpoint, CliError> {
    Ok(load_checkpoint(path)?)
}

pub fn load_all(paths: &[PathBuf]) -> Result<Vec<Checkpoint>, CliError> {
    paths.iter().map(|p| load(p)).collect()
}

pub fn save(ckpt: &Checkpoint, path: &Path) -> Result<(), CliError> {
    Ok(save_checkpoint(ckpt, path)?)
}

/// Writes `bytes` atomically to `out`, or to stdout when `out` is `None`.
pub fn emit(bytes: &[u8], out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(path) => Ok(write_atomic(path, bytes)?),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(bytes)
                .and_then(|_| stdout.flush())
                .map_err(|e| Error::Io {
                    path: PathBuf::from("<stdout>"),
                    source: e,
                })?;
            Ok(())
        }
    }
}

pub fn json_bytes(json: String) -> Vec<u8> {
    let mut b = json.into_bytes();
    b.push(b'\n');
    b
}

/// Appends `suffix` to the full file name: `h.st` becomes `h.st.ratios.json`.
pub fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Parses a JSON argument given inline or as a path to a file. A malformed
/// inline value is a usage error; a malformed file is a format error.
pub fn json_arg<T: serde::de::DeserializeOwned>(raw: &str, what: &str) -> Result<T, CliError> {
    let trimmed = raw.trim_start();
    if trimmed.starts_with('{') || trimmed.starts_with('[') {
        return serde_json::from_str(raw).map_err(|e| usage(format!("{what}: {e}")));
    }
    let text = std::fs::read_to_string(raw).map_err(|e| Error::Io {
        path: PathBuf::from(raw),
        source: e,
    })?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Core(Error::Schema(format!("{what} file {raw}: {e}"))))
}

pub fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|e| {
        CliError::Core(Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })
}
