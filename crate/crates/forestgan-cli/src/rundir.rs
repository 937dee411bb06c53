//! Run-directory helpers.  Every command materializes one directory per run
//! holding `config.json`, `log.csv`, optional `checkpoints/` and `plots/`;
//! these helpers keep the serialization conventions (pretty JSON, trailing
//! newline) identical everywhere so reruns byte-match.

use std::fs;
use std::path::Path;

use forestgan::error::Result;
use serde::Serialize;

/// Pretty-printed JSON with a trailing newline, parents created on demand.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, text)?;
    Ok(())
}
