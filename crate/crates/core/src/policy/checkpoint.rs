//! Binary checkpoint: an 8-byte magic, a little-endian `u32` version, a
//! `u64` manifest length, a JSON manifest (network config and tensor
//! table) and then every parameter as a little-endian `f64`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Layout, NetConfig, PolicyParams, TensorSpec};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"WADICKPT";

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("not a checkpoint file")]
    Magic,
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("bad checkpoint manifest: {0}")]
    Manifest(String),
    #[error("checkpoint truncated or oversized: {0}")]
    Size(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    config: NetConfig,
    tensors: Vec<TensorSpec>,
    total: usize,
}

impl PolicyParams {
    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let manifest = Manifest {
            config: self.config.clone(),
            tensors: self.layout.tensors.clone(),
            total: self.layout.total,
        };
        let json = serde_json::to_vec(&manifest).expect("manifest serializes");
        let mut out = Vec::with_capacity(20 + json.len() + 8 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for x in &self.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(CheckpointError::Magic);
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let mlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let body = &bytes[20..];
        if mlen > body.len() {
            return Err(CheckpointError::Size("manifest length exceeds file".into()));
        }
        let manifest: Manifest =
            serde_json::from_slice(&body[..mlen]).map_err(|e| CheckpointError::Manifest(e.to_string()))?;
        let mut params =
            PolicyParams::zeros(manifest.config).map_err(|e| CheckpointError::Manifest(e.to_string()))?;
        let expected = Layout::new(&params.config);
        if manifest.tensors != expected.tensors || manifest.total != expected.total {
            return Err(CheckpointError::Manifest("tensor table does not match the network config".into()));
        }
        let raw = &body[mlen..];
        if raw.len() != 8 * expected.total {
            return Err(CheckpointError::Size(format!(
                "{} data bytes for {} parameters",
                raw.len(),
                expected.total
            )));
        }
        for (x, chunk) in params.data.iter_mut().zip(raw.chunks_exact(8)) {
            *x = f64::from_le_bytes(chunk.try_into().unwrap());
        }
        if !params.is_finite() {
            return Err(CheckpointError::Manifest("checkpoint holds non-finite parameters".into()));
        }
        Ok(params)
    }

    /// Writes to a temporary sibling and renames it into place.
    pub fn save_checkpoint(&self, path: &Path) -> Result<(), CheckpointError> {
        crate::io::write_atomic(path, &self.to_checkpoint_bytes())?;
        Ok(())
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self, CheckpointError> {
        Self::from_checkpoint_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::ObsMode;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params() -> PolicyParams {
        PolicyParams::init(NetConfig::desk_scale(ObsMode::Both, 3), &mut ChaCha8Rng::seed_from_u64(9)).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let p = params();
        let back = PolicyParams::from_checkpoint_bytes(&p.to_checkpoint_bytes()).unwrap();
        assert_eq!(back, p);
        assert!(back.data.iter().zip(&p.data).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn save_and_load_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("policy.ckpt");
        let p = params();
        p.save_checkpoint(&path).unwrap();
        assert_eq!(PolicyParams::load_checkpoint(&path).unwrap(), p);
    }

    #[test]
    fn rejects_bad_headers() {
        let mut bytes = params().to_checkpoint_bytes();
        assert!(matches!(PolicyParams::from_checkpoint_bytes(&bytes[..10]), Err(CheckpointError::Magic)));
        bytes[8] = 2;
        assert!(matches!(
            PolicyParams::from_checkpoint_bytes(&bytes),
            Err(CheckpointError::Version { found: 2, .. })
        ));
    }

    #[test]
    fn rejects_truncated_data() {
        let bytes = params().to_checkpoint_bytes();
        assert!(matches!(
            PolicyParams::from_checkpoint_bytes(&bytes[..bytes.len() - 8]),
            Err(CheckpointError::Size(_))
        ));
    }
}
