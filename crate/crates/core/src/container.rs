//! On-disk container: a directory holding raw row-major little-endian f64
//! arrays (`<name>.f64`) described by a `meta.json` carrying shapes, a
//! format version, per-array SHA-256 digests and caller-defined metadata.
//! Round trips are bit-exact; every integrity failure names the offending
//! array.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::Path;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArrayMeta {
    pub name: String,
    pub shape: Vec<usize>,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContainerMeta {
    pub format_version: u32,
    /// container kind tag, e.g. "dataset", "checkpoint", "response"
    pub kind: String,
    pub arrays: Vec<ArrayMeta>,
    /// caller-defined metadata document
    pub extra: serde_json::Value,
}

impl ContainerMeta {
    pub fn new(kind: &str, extra: serde_json::Value) -> Self {
        ContainerMeta {
            format_version: FORMAT_VERSION,
            kind: kind.to_string(),
            arrays: Vec::new(),
            extra,
        }
    }

    pub fn array(&self, name: &str) -> Result<&ArrayMeta> {
        self.arrays
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| Error::artifact(format!("array `{name}` missing from meta.json")))
    }
}

fn digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let out = hasher.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

fn array_bytes(data: &[f64]) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(data.len() * 8);
    for x in data {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    bytes
}

/// Write one array and return its metadata entry.
pub fn write_array(dir: &Path, name: &str, shape: &[usize], data: &[f64]) -> Result<ArrayMeta> {
    let expect: usize = shape.iter().product();
    if expect != data.len() {
        return Err(Error::artifact(format!(
            "array `{name}`: shape {shape:?} does not match {} values",
            data.len()
        )));
    }
    let bytes = array_bytes(data);
    fs::create_dir_all(dir)?;
    fs::write(dir.join(format!("{name}.f64")), &bytes)?;
    Ok(ArrayMeta {
        name: name.to_string(),
        shape: shape.to_vec(),
        sha256: digest(&bytes),
    })
}

/// Read and verify one array.
pub fn read_array(dir: &Path, meta: &ArrayMeta) -> Result<Vec<f64>> {
    let path = dir.join(format!("{}.f64", meta.name));
    let bytes = fs::read(&path)
        .map_err(|e| Error::artifact(format!("array `{}`: cannot read {path:?}: {e}", meta.name)))?;
    let expect: usize = meta.shape.iter().product::<usize>() * 8;
    if bytes.len() != expect {
        return Err(Error::artifact(format!(
            "array `{}`: truncated ({} bytes, expected {expect})",
            meta.name,
            bytes.len()
        )));
    }
    if digest(&bytes) != meta.sha256 {
        return Err(Error::artifact(format!("array `{}`: checksum mismatch", meta.name)));
    }
    let mut data = Vec::with_capacity(bytes.len() / 8);
    for chunk in bytes.chunks_exact(8) {
        data.push(f64::from_le_bytes(chunk.try_into().unwrap()));
    }
    Ok(data)
}

pub fn write_meta(dir: &Path, meta: &ContainerMeta) -> Result<()> {
    fs::create_dir_all(dir)?;
    let json = serde_json::to_string_pretty(meta)
        .map_err(|e| Error::artifact(format!("meta.json serialization failed: {e}")))?;
    fs::write(dir.join("meta.json"), json)?;
    Ok(())
}

/// Read meta.json alone; array payloads stay on disk.
pub fn read_meta(dir: &Path) -> Result<ContainerMeta> {
    let path = dir.join("meta.json");
    let json = fs::read_to_string(&path)
        .map_err(|e| Error::artifact(format!("cannot read {path:?}: {e}")))?;
    let meta: ContainerMeta = serde_json::from_str(&json)
        .map_err(|e| Error::artifact(format!("malformed meta.json: {e}")))?;
    if meta.format_version != FORMAT_VERSION {
        return Err(Error::artifact(format!(
            "container format version {} unsupported (expected {FORMAT_VERSION})",
            meta.format_version
        )));
    }
    Ok(meta)
}
