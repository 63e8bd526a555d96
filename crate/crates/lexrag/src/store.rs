//! On-disk layout of indexes.
//!
//! An index directory holds `manifest.json` (format version, document
//! count, per-field statistics, size and SHA-256 of the data file) and
//! `index.bin` (the binary snapshot from `lexrag_core::codec`). A dense
//! index is a single file from `lexrag_core::dense::encode_dense`.

use lexrag_core::codec::{self, CodecError};
use lexrag_core::dense::{decode_dense, encode_dense, DenseIndex};
use lexrag_core::index::FORMAT_VERSION;
use lexrag_core::{Field, IndexSnapshot};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const DATA_FILE: &str = "index.bin";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSummary {
    pub field: Field,
    pub total_tokens: u64,
    pub avg_field_length: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub doc_count: u32,
    pub fields: Vec<FieldSummary>,
    pub data_file: String,
    pub data_bytes: u64,
    pub sha256: String,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: invalid manifest: {source}")]
    Manifest { path: PathBuf, source: serde_json::Error },
    #[error("unsupported version {found} (this build reads version {FORMAT_VERSION})")]
    UnsupportedVersion { found: u32 },
    #[error("{path}: expected {expected} bytes, found {found}")]
    SizeMismatch { path: PathBuf, expected: u64, found: u64 },
    #[error("{path}: checksum mismatch")]
    Checksum { path: PathBuf },
    #[error("{path}: manifest disagrees with data: {what}")]
    ManifestMismatch { path: PathBuf, what: &'static str },
    #[error("{path}: {source}")]
    Codec { path: PathBuf, source: CodecError },
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_owned(), source }
}

fn sha256_hex(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

pub fn manifest_for(snapshot: &IndexSnapshot, data: &[u8]) -> Manifest {
    Manifest {
        format_version: snapshot.format_version(),
        doc_count: snapshot.doc_count(),
        fields: Field::ALL
            .iter()
            .map(|&f| FieldSummary {
                field: f,
                total_tokens: snapshot.stats(f).total_tokens(),
                avg_field_length: snapshot.stats(f).avg_field_length(),
            })
            .collect(),
        data_file: DATA_FILE.to_owned(),
        data_bytes: data.len() as u64,
        sha256: sha256_hex(data),
    }
}

/// Writes the index directory, creating it if needed. Files are written
/// under temporary names and renamed, so a reader never sees a half-written
/// data file next to a complete manifest.
pub fn save_index(snapshot: &IndexSnapshot, dir: &Path) -> Result<Manifest, StoreError> {
    fs::create_dir_all(dir).map_err(io(dir))?;
    let data = codec::encode(snapshot);
    let manifest = manifest_for(snapshot, &data);
    let data_path = dir.join(DATA_FILE);
    let manifest_path = dir.join(MANIFEST_FILE);
    write_atomic(&data_path, &data)?;
    let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    write_atomic(&manifest_path, &json)?;
    Ok(manifest)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(io(&tmp))?;
    fs::rename(&tmp, path).map_err(io(path))
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, StoreError> {
    let path = dir.join(MANIFEST_FILE);
    let bytes = fs::read(&path).map_err(io(&path))?;
    let manifest: Manifest = serde_json::from_slice(&bytes).map_err(|source| StoreError::Manifest { path: path.clone(), source })?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(StoreError::UnsupportedVersion { found: manifest.format_version });
    }
    Ok(manifest)
}

/// Loads and fully validates an index directory.
pub fn load_index(dir: &Path) -> Result<IndexSnapshot, StoreError> {
    let manifest = read_manifest(dir)?;
    let path = dir.join(&manifest.data_file);
    let data = fs::read(&path).map_err(io(&path))?;
    if data.len() as u64 != manifest.data_bytes {
        return Err(StoreError::SizeMismatch { path, expected: manifest.data_bytes, found: data.len() as u64 });
    }
    if sha256_hex(&data) != manifest.sha256 {
        return Err(StoreError::Checksum { path });
    }
    let snapshot = codec::decode(&data).map_err(|source| StoreError::Codec { path: path.clone(), source })?;
    if snapshot.doc_count() != manifest.doc_count {
        return Err(StoreError::ManifestMismatch { path, what: "doc_count" });
    }
    Ok(snapshot)
}

pub fn save_dense(index: &DenseIndex, path: &Path) -> Result<(), StoreError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io(parent))?;
    }
    write_atomic(path, &encode_dense(index))
}

pub fn load_dense(path: &Path) -> Result<DenseIndex, StoreError> {
    let data = fs::read(path).map_err(io(path))?;
    decode_dense(&data).map_err(|source| StoreError::Codec { path: path.to_owned(), source })
}

#[cfg(test)]
mod tests {
    use super::*;
    use lexrag_core::{build_index, Document};

    fn snapshot() -> IndexSnapshot {
        build_index(vec![
            Document::new("d1", "Cats", "cat cat dog"),
            Document::new("d2", "", "dog"),
            Document::new("d3", "Birds", "cat bird"),
        ])
        .unwrap()
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = save_index(&snapshot(), dir.path()).unwrap();
        assert_eq!(manifest.doc_count, 3);
        assert_eq!(load_index(dir.path()).unwrap(), snapshot());
    }

    #[test]
    fn detects_tampering() {
        let dir = tempfile::tempdir().unwrap();
        save_index(&snapshot(), dir.path()).unwrap();
        let data = dir.path().join(DATA_FILE);
        let mut bytes = fs::read(&data).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 1;
        fs::write(&data, &bytes).unwrap();
        assert!(matches!(load_index(dir.path()), Err(StoreError::Checksum { .. })));
        bytes.pop();
        fs::write(&data, &bytes).unwrap();
        assert!(matches!(load_index(dir.path()), Err(StoreError::SizeMismatch { .. })));
    }

    #[test]
    fn rejects_newer_manifest() {
        let dir = tempfile::tempdir().unwrap();
        save_index(&snapshot(), dir.path()).unwrap();
        let path = dir.path().join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).unwrap().replace("\"format_version\": 1", "\"format_version\": 2");
        fs::write(&path, text).unwrap();
        let err = load_index(dir.path()).unwrap_err();
        assert!(err.to_string().starts_with("unsupported version 2"), "{err}");
    }
}
