//! On-disk model cache.
//!
//! A blob is the 8-byte magic `RSHMODEL`, a little-endian `u32` format
//! version, then the model as UTF-8 JSON. Blobs are addressed by
//! [`cache_key`], a SHA-256 over the canonical spec JSON and the training
//! data digest, so a cached model is only reused for identical inputs.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::{ModelSpec, TrainedModel, ZooError};

const MAGIC: &[u8; 8] = b"RSHMODEL";
pub const FORMAT_VERSION: u32 = 1;

pub fn cache_key(spec: &ModelSpec, data_digest: &str) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(spec).expect("spec serializes"));
    h.update([0u8]);
    h.update(data_digest.as_bytes());
    hex::encode(h.finalize())
}

pub fn encode(model: &TrainedModel) -> Vec<u8> {
    let mut out = MAGIC.to_vec();
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend(serde_json::to_vec(model).expect("model serializes"));
    out
}

pub fn decode(bytes: &[u8]) -> Result<TrainedModel, ZooError> {
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(ZooError::Persist("not a model blob".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(ZooError::Persist(format!("blob version {version}, expected {FORMAT_VERSION}")));
    }
    serde_json::from_slice(&bytes[12..]).map_err(|e| ZooError::Persist(e.to_string()))
}

/// Directory of blobs named by cache key.
pub struct ModelCache {
    dir: PathBuf,
}

impl ModelCache {
    pub fn new(dir: impl AsRef<Path>) -> Self {
        ModelCache { dir: dir.as_ref().to_path_buf() }
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.bin"))
    }

    pub fn load(&self, key: &str) -> Option<TrainedModel> {
        fs::read(self.path(key)).ok().and_then(|b| decode(&b).ok())
    }

    pub fn store(&self, key: &str, model: &TrainedModel) -> Result<(), ZooError> {
        fs::create_dir_all(&self.dir).map_err(|e| ZooError::Persist(e.to_string()))?;
        fs::write(self.path(key), encode(model)).map_err(|e| ZooError::Persist(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zoo::testutil::blobs;
    use crate::zoo::{train, Classifier, Family};

    #[test]
    fn round_trip_preserves_predictions() {
        let (x, y) = blobs(60, 3, 2, 1);
        for f in Family::ALL {
            let m = train(&ModelSpec::new(f, 5).clone(), x.view(), &y).unwrap();
            let back = decode(&encode(&m)).unwrap();
            assert_eq!(m.predict_positive(x.view()).unwrap(), back.predict_positive(x.view()).unwrap(), "{f}");
        }
    }

    #[test]
    fn rejects_foreign_bytes_and_versions() {
        assert!(decode(b"hello").is_err());
        let mut blob = MAGIC.to_vec();
        blob.extend_from_slice(&99u32.to_le_bytes());
        assert!(decode(&blob).is_err());
    }

    #[test]
    fn cache_keys_depend_on_spec_and_data() {
        let a = ModelSpec::new(Family::Lr, 1);
        assert_ne!(cache_key(&a, "d1"), cache_key(&a, "d2"));
        assert_ne!(cache_key(&a, "d1"), cache_key(&a.clone().with("l2", 2.0), "d1"));
        let dir = tempfile::tempdir().unwrap();
        let cache = ModelCache::new(dir.path());
        let (x, y) = blobs(30, 2, 1, 1);
        let m = train(&a, x.view(), &y).unwrap();
        cache.store("k", &m).unwrap();
        assert_eq!(cache.load("k").unwrap(), m);
    }
}
