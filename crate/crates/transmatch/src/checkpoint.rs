//! Checkpoint files: versioned JSON written atomically.
//!
//! Floats are written with shortest round-trip formatting and parsed with the
//! exact algorithm, so a save/load cycle reproduces every parameter bit for bit.

use std::fs;
use std::io::Write;
use std::path::Path;

use transmatch_core::model::Checkpoint;

use crate::error::{AppError, Result};

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    let mut file = fs::File::create(&tmp).map_err(|e| AppError::io(&tmp, e))?;
    file.write_all(bytes).map_err(|e| AppError::io(&tmp, e))?;
    file.sync_all().map_err(|e| AppError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| AppError::io(path, e))
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    let json =
        serde_json::to_vec(checkpoint).map_err(|e| AppError::Runtime(format!("cannot serialize checkpoint: {e}")))?;
    write_atomic(path, &json)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| AppError::io(path, e))?;
    let checkpoint: Checkpoint = serde_json::from_slice(&bytes)
        .map_err(|e| AppError::config(format!("{} is not a valid checkpoint: {e}", path.display())))?;
    checkpoint.check_version()?;
    Ok(checkpoint)
}
