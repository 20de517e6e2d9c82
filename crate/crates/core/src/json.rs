//! Canonical JSON: object keys sorted, shortest round-trip float formatting,
//! two-space indentation, trailing newline.

use std::path::{Path, PathBuf};

use serde::Serialize;

pub fn to_canonical_value<T: Serialize>(value: &T) -> serde_json::Result<serde_json::Value> {
    // `Value` objects are BTreeMap-backed, so converting sorts every key.
    serde_json::to_value(value)
}

pub fn to_canonical_string<T: Serialize>(value: &T) -> serde_json::Result<String> {
    let mut text = serde_json::to_string_pretty(&to_canonical_value(value)?)?;
    text.push('\n');
    Ok(text)
}

/// Writes `value` as canonical JSON to `path.tmp`, then renames it over
/// `path`, so readers never observe a partial file.
pub fn write_atomic<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    let text = to_canonical_string(value).map_err(std::io::Error::other)?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, text)?;
    std::fs::rename(&tmp, path)
}
