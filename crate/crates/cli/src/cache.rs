//! On-disk store of certified minimizers.
//!
//! One JSON record per `(model_hash, p, q)` under `<dir>/<model_hash>/`.
//! Records are written to a temporary file and linked into place without
//! clobbering, so concurrent writers leave exactly one record behind.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use staircase_core::variational::{ConfigStore, PeriodicConfiguration, SolverOptions};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use thiserror::Error;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Payloads differing by more than this under one key are a conflict.
pub const CONFLICT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("cache record {path} is corrupt ({reason}); moved aside")]
    CorruptRecord { path: PathBuf, reason: String },
    #[error("cache record for {p}/{q} already holds a different configuration (max difference {diff:e})")]
    VersionConflict { p: i64, q: i64, diff: f64 },
    #[error("cache i/o on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheKey {
    pub model_hash: String,
    pub p: i64,
    pub q: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverMeta {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub starts: usize,
    pub seed: u64,
}

impl From<&SolverOptions> for SolverMeta {
    fn from(o: &SolverOptions) -> Self {
        SolverMeta { tolerance: o.tolerance, max_iterations: o.max_iterations, starts: o.starts, seed: o.seed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CachePayload {
    pub beta: f64,
    pub config: PeriodicConfiguration,
    pub solver: SolverMeta,
    pub tool_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub key: CacheKey,
    pub payload: CachePayload,
    /// Hex SHA-256 over the serialized key and payload.
    pub checksum: String,
}

impl CacheRecord {
    pub fn new(config: PeriodicConfiguration, solver: &SolverOptions) -> Self {
        let key = CacheKey { model_hash: config.model_hash.clone(), p: config.p, q: config.q };
        let payload =
            CachePayload { beta: config.beta(), config, solver: solver.into(), tool_version: TOOL_VERSION.into() };
        let checksum = checksum(&key, &payload);
        CacheRecord { key, payload, checksum }
    }

    pub fn is_valid(&self) -> bool {
        self.checksum == checksum(&self.key, &self.payload)
    }
}

fn checksum(key: &CacheKey, payload: &CachePayload) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(key).expect("key serializes"));
    h.update(serde_json::to_vec(payload).expect("payload serializes"));
    hex::encode(h.finalize())
}

fn max_difference(a: &CachePayload, b: &CachePayload) -> f64 {
    if a.config.positions.len() != b.config.positions.len() {
        return f64::INFINITY;
    }
    a.config
        .positions
        .iter()
        .zip(&b.config.positions)
        .map(|(x, y)| (x - y).abs())
        .fold((a.beta - b.beta).abs(), f64::max)
}

/// Directory-backed [`ConfigStore`].
#[derive(Debug)]
pub struct DiskCache {
    root: PathBuf,
    solver: SolverOptions,
    hits: AtomicUsize,
    corrupt: AtomicUsize,
}

impl DiskCache {
    pub fn new(root: impl Into<PathBuf>, solver: SolverOptions) -> Self {
        DiskCache { root: root.into(), solver, hits: AtomicUsize::new(0), corrupt: AtomicUsize::new(0) }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, key: &CacheKey) -> PathBuf {
        self.root.join(&key.model_hash).join(format!("{}_{}.json", key.p, key.q))
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn corrupt_count(&self) -> usize {
        self.corrupt.load(Ordering::Relaxed)
    }

    /// `Ok(None)` when absent; a bad record is renamed to `*.corrupt` and reported.
    pub fn get(&self, key: &CacheKey) -> Result<Option<CacheRecord>, CacheError> {
        let path = self.path_for(key);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(source) => return Err(CacheError::Io { path, source }),
        };
        let reason = match serde_json::from_slice::<CacheRecord>(&bytes) {
            Ok(r) if r.is_valid() && &r.key == key => return Ok(Some(r)),
            Ok(r) if &r.key != key => "key mismatch".to_string(),
            Ok(_) => "checksum mismatch".to_string(),
            Err(e) => e.to_string(),
        };
        self.corrupt.fetch_add(1, Ordering::Relaxed);
        let aside = path.with_extension("json.corrupt");
        // a concurrent reader may have moved it already
        let _ = fs::rename(&path, &aside);
        Err(CacheError::CorruptRecord { path, reason })
    }

    /// Stores `record` unless an equal one is present; records are never overwritten.
    pub fn put(&self, record: &CacheRecord) -> Result<(), CacheError> {
        let path = self.path_for(&record.key);
        let dir = path.parent().expect("record path has a parent").to_path_buf();
        let io = |source| CacheError::Io { path: dir.clone(), source };
        fs::create_dir_all(&dir).map_err(io)?;
        let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(io)?;
        let bytes = serde_json::to_vec_pretty(record).expect("record serializes");
        tmp.write_all(&bytes).map_err(io)?;
        tmp.as_file().sync_all().map_err(io)?;
        match tmp.persist_noclobber(&path) {
            Ok(_) => Ok(()),
            Err(e) if e.error.kind() == std::io::ErrorKind::AlreadyExists => match self.get(&record.key) {
                Ok(Some(existing)) => {
                    let diff = max_difference(&existing.payload, &record.payload);
                    if diff > CONFLICT_TOLERANCE {
                        Err(CacheError::VersionConflict { p: record.key.p, q: record.key.q, diff })
                    } else {
                        Ok(())
                    }
                }
                // the old record was bad and has been moved aside; retry once
                Ok(None) | Err(CacheError::CorruptRecord { .. }) => {
                    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(io)?;
                    tmp.write_all(&bytes).map_err(io)?;
                    tmp.persist_noclobber(&path).map(|_| ()).or_else(|e| match e.error.kind() {
                        std::io::ErrorKind::AlreadyExists => Ok(()),
                        _ => Err(io(e.error)),
                    })
                }
                Err(other) => Err(other),
            },
            Err(e) => Err(CacheError::Io { path, source: e.error }),
        }
    }
}

impl ConfigStore for DiskCache {
    fn load(&self, model_hash: &str, p: i64, q: i64) -> Option<PeriodicConfiguration> {
        let key = CacheKey { model_hash: model_hash.to_string(), p, q };
        match self.get(&key) {
            Ok(Some(r)) => {
                self.hits.fetch_add(1, Ordering::Relaxed);
                Some(r.payload.config)
            }
            _ => None,
        }
    }

    fn store(&self, config: &PeriodicConfiguration) -> staircase_core::Result<()> {
        self.put(&CacheRecord::new(config.clone(), &self.solver))
            .map_err(|e| staircase_core::Error::Store(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use staircase_core::variational::minimize_periodic;
    use staircase_core::GeneratingModel;

    fn sample() -> PeriodicConfiguration {
        minimize_periodic(&GeneratingModel::frenkel_kontorova(1.0), 2, 5, &SolverOptions::default()).unwrap()
    }

    #[test]
    fn put_then_get_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let cache = DiskCache::new(dir.path(), SolverOptions::default());
        let rec = CacheRecord::new(sample(), &SolverOptions::default());
        cache.put(&rec).unwrap();
        let back = cache.get(&rec.key).unwrap().unwrap();
        assert_eq!(back, rec);
        for (a, b) in back.payload.config.positions.iter().zip(&rec.payload.config.positions) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn truncated_record_is_quarantined_and_recomputed() {
        let dir = tempfile::tempdir().unwrap();
        let cache = DiskCache::new(dir.path(), SolverOptions::default());
        let rec = CacheRecord::new(sample(), &SolverOptions::default());
        cache.put(&rec).unwrap();
        let path = cache.path_for(&rec.key);
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(cache.get(&rec.key), Err(CacheError::CorruptRecord { .. })));
        assert!(path.with_extension("json.corrupt").exists());
        assert!(cache.get(&rec.key).unwrap().is_none());
        assert!(cache.load(&rec.key.model_hash, 2, 5).is_none());
        cache.put(&rec).unwrap();
        assert_eq!(cache.get(&rec.key).unwrap().unwrap(), rec);
    }

    #[test]
    fn tampered_payload_fails_the_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let cache = DiskCache::new(dir.path(), SolverOptions::default());
        let mut rec = CacheRecord::new(sample(), &SolverOptions::default());
        cache.put(&rec).unwrap();
        rec.payload.beta += 1.0;
        fs::write(cache.path_for(&rec.key), serde_json::to_vec(&rec).unwrap()).unwrap();
        assert!(matches!(cache.get(&rec.key), Err(CacheError::CorruptRecord { .. })));
    }

    #[test]
    fn differing_payload_is_a_conflict() {
        let dir = tempfile::tempdir().unwrap();
        let cache = DiskCache::new(dir.path(), SolverOptions::default());
        let rec = CacheRecord::new(sample(), &SolverOptions::default());
        cache.put(&rec).unwrap();
        cache.put(&rec).unwrap();
        let mut other = sample();
        other.positions[0] += 1e-9;
        let other = CacheRecord::new(other, &SolverOptions::default());
        assert!(matches!(cache.put(&other), Err(CacheError::VersionConflict { .. })));
        let mut close = sample();
        close.positions[0] += 1e-14;
        cache.put(&CacheRecord::new(close, &SolverOptions::default())).unwrap();
        assert_eq!(cache.get(&rec.key).unwrap().unwrap(), rec);
    }
}
