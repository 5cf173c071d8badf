//! Single-file tensor container.
//!
//! Layout: an 8-byte little-endian manifest length, the JSON manifest
//! (format version, caller metadata, tensor names/shapes/offsets/byte
//! lengths, optional opaque RNG-state section, payload SHA-256), then the
//! payload: raw little-endian `f32` arrays, row-major, in manifest order.

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("container io: {0}")]
    Io(#[from] std::io::Error),
    #[error("container manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("unsupported container version {found} (this build reads version {supported})")]
    Version { found: u32, supported: u32 },
    #[error("container integrity: {0}")]
    Integrity(String),
    #[error("container has no tensor named `{0}`")]
    MissingTensor(String),
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorMeta {
    name: String,
    rows: usize,
    cols: usize,
    offset: u64,
    byte_len: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct SectionMeta {
    offset: u64,
    byte_len: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    meta: serde_json::Value,
    tensors: Vec<TensorMeta>,
    rng_state: Option<SectionMeta>,
    payload_sha256: String,
}

/// In-memory form of a container file.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorContainer {
    pub meta: serde_json::Value,
    pub tensors: Vec<(String, Array2<f32>)>,
    pub rng_state: Option<Vec<u8>>,
}

impl TensorContainer {
    pub fn new(meta: serde_json::Value) -> Self {
        Self { meta, tensors: Vec::new(), rng_state: None }
    }

    pub fn push(&mut self, name: &str, tensor: Array2<f32>) {
        self.tensors.push((name.to_string(), tensor));
    }

    pub fn tensor(&self, name: &str) -> Result<&Array2<f32>, ContainerError> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| ContainerError::MissingTensor(name.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<(), ContainerError> {
        let mut payload = Vec::new();
        let mut tensors = Vec::with_capacity(self.tensors.len());
        for (name, tensor) in &self.tensors {
            let offset = payload.len() as u64;
            for &v in tensor.iter() {
                payload.extend_from_slice(&v.to_le_bytes());
            }
            tensors.push(TensorMeta {
                name: name.clone(),
                rows: tensor.nrows(),
                cols: tensor.ncols(),
                offset,
                byte_len: (tensor.len() * 4) as u64,
            });
        }
        let rng_state = self.rng_state.as_ref().map(|bytes| {
            let offset = payload.len() as u64;
            payload.extend_from_slice(bytes);
            SectionMeta { offset, byte_len: bytes.len() as u64 }
        });
        let manifest = Manifest {
            format_version: FORMAT_VERSION,
            meta: self.meta.clone(),
            tensors,
            rng_state,
            payload_sha256: hex(&Sha256::digest(&payload)),
        };
        let manifest_bytes = serde_json::to_vec(&manifest)?;
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        file.write_all(&(manifest_bytes.len() as u64).to_le_bytes())?;
        file.write_all(&manifest_bytes)?;
        file.write_all(&payload)?;
        file.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, ContainerError> {
        let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut len_bytes = [0u8; 8];
        file.read_exact(&mut len_bytes)
            .map_err(|_| ContainerError::Integrity("file shorter than its header".into()))?;
        let manifest_len = u64::from_le_bytes(len_bytes) as usize;
        let mut manifest_bytes = vec![0u8; manifest_len];
        file.read_exact(&mut manifest_bytes)
            .map_err(|_| ContainerError::Integrity("truncated manifest".into()))?;
        let manifest: Manifest = serde_json::from_slice(&manifest_bytes)?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(ContainerError::Version {
                found: manifest.format_version,
                supported: FORMAT_VERSION,
            });
        }

        let expected: u64 = manifest.tensors.iter().map(|t| t.byte_len).sum::<u64>()
            + manifest.rng_state.as_ref().map_or(0, |s| s.byte_len);
        let mut payload = Vec::new();
        file.read_to_end(&mut payload)?;
        if payload.len() as u64 != expected {
            return Err(ContainerError::Integrity(format!(
                "payload length {} does not match manifest total {expected}",
                payload.len()
            )));
        }
        let digest = hex(&Sha256::digest(&payload));
        if digest != manifest.payload_sha256 {
            return Err(ContainerError::Integrity("payload checksum mismatch".into()));
        }

        let mut tensors = Vec::with_capacity(manifest.tensors.len());
        for tm in &manifest.tensors {
            let start = tm.offset as usize;
            let end = start + tm.byte_len as usize;
            let slice = payload.get(start..end).ok_or_else(|| {
                ContainerError::Integrity(format!("tensor `{}` out of payload bounds", tm.name))
            })?;
            if tm.byte_len as usize != tm.rows * tm.cols * 4 {
                return Err(ContainerError::Integrity(format!(
                    "tensor `{}` byte length disagrees with its shape",
                    tm.name
                )));
            }
            let values: Vec<f32> = slice
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            let array = Array2::from_shape_vec((tm.rows, tm.cols), values)
                .map_err(|e| ContainerError::Integrity(e.to_string()))?;
            tensors.push((tm.name.clone(), array));
        }
        let rng_state = manifest.rng_state.as_ref().map(|s| {
            payload[s.offset as usize..(s.offset + s.byte_len) as usize].to_vec()
        });
        Ok(Self { meta: manifest.meta, tensors, rng_state })
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    fn sample() -> TensorContainer {
        let mut c = TensorContainer::new(serde_json::json!({"kind": "test", "n": 3}));
        c.push("a", arr2(&[[1.0f32, 2.0], [3.0, 4.0]]));
        c.push("b", arr2(&[[-0.5f32, 0.25, 7.5]]));
        c.rng_state = Some(vec![9, 8, 7, 6]);
        c
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.tensors");
        let c = sample();
        c.write(&path).unwrap();
        let back = TensorContainer::read(&path).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn tampered_byte_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.tensors");
        sample().write(&path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 0x01;
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(TensorContainer::read(&path), Err(ContainerError::Integrity(_))));
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.tensors");
        sample().write(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(TensorContainer::read(&path), Err(ContainerError::Integrity(_))));
    }

    #[test]
    fn unknown_version_names_both_versions() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.tensors");
        sample().write(&path).unwrap();
        // Rewrite the manifest with a bumped version, keeping payload intact.
        let bytes = std::fs::read(&path).unwrap();
        let mlen = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
        let mut manifest: serde_json::Value = serde_json::from_slice(&bytes[8..8 + mlen]).unwrap();
        manifest["format_version"] = serde_json::json!(99);
        let new_manifest = serde_json::to_vec(&manifest).unwrap();
        let mut out = (new_manifest.len() as u64).to_le_bytes().to_vec();
        out.extend_from_slice(&new_manifest);
        out.extend_from_slice(&bytes[8 + mlen..]);
        std::fs::write(&path, out).unwrap();
        match TensorContainer::read(&path) {
            Err(ContainerError::Version { found, supported }) => {
                assert_eq!(found, 99);
                assert_eq!(supported, FORMAT_VERSION);
            }
            other => panic!("expected version error, got {other:?}"),
        }
    }

    #[test]
    fn missing_tensor_lookup() {
        let c = sample();
        assert!(c.tensor("a").is_ok());
        assert!(matches!(c.tensor("zz"), Err(ContainerError::MissingTensor(_))));
    }
}
