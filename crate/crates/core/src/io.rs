//! Shared on-disk conventions: a JSON header next to a raw little-endian
//! float64 payload with the same stem and a `.bin` extension.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::{Error, Result};

/// Payload path belonging to a header path (`foo.json` -> `foo.bin`).
pub fn payload_path(header: &Path) -> PathBuf {
    header.with_extension("bin")
}

pub fn write_f64_le(path: &Path, data: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_f64_le(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let bytes = fs::read(path)?;
    if bytes.len() != expected * 8 {
        return Err(Error::Format {
            path: path.display().to_string(),
            reason: format!("expected {} float64 values, found {} bytes", expected, bytes.len()),
        });
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

/// Checks a header's `format` tag.
pub fn expect_format(path: &Path, found: &str, expected: &str) -> Result<()> {
    if found != expected {
        return Err(Error::Format {
            path: path.display().to_string(),
            reason: format!("format tag {found:?}, expected {expected:?}"),
        });
    }
    Ok(())
}
