//! On-disk volume catalogue: an `<id>.raw` payload (i16 little-endian)
//! next to an `<id>.json` manifest, with an LRU of decoded volumes.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use lru::LruCache;
use sha2::{Digest, Sha256};
use thiserror::Error;
use voxcast_core::ingest::{load_raw, save_raw, SampleFormat};
use voxcast_core::{IngestError, ScalarVolume, VolumeManifest, VolumeSource};

pub const DEFAULT_CACHE_SIZE: usize = 4;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("unknown volume {0:?}")]
    NotFound(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("store io: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt manifest {path}: {message}")]
    Corrupt { path: String, message: String },
}

impl StoreError {
    pub fn code(&self) -> &'static str {
        match self {
            StoreError::NotFound(_) => "VolumeNotFound",
            StoreError::Ingest(e) => e.code(),
            StoreError::Io(_) => "StoreIo",
            StoreError::Corrupt { .. } => "CorruptManifest",
        }
    }
}

pub struct VolumeStore {
    dir: PathBuf,
    index: RwLock<BTreeMap<String, VolumeManifest>>,
    cache: Mutex<LruCache<String, Arc<ScalarVolume>>>,
}

/// Content hash of a volume: identical voxels and geometry share an id.
pub fn content_id(vol: &ScalarVolume) -> String {
    let mut h = Sha256::new();
    h.update(b"voxcast-volume-v1");
    for d in vol.dims() {
        h.update((d as u64).to_le_bytes());
    }
    for s in vol.spacing() {
        h.update(s.to_bits().to_le_bytes());
    }
    h.update(save_raw(vol));
    hex::encode(&h.finalize()[..8])
}

/// RFC 3339 creation stamp. `SOURCE_DATE_EPOCH` pins it for reproducible output.
pub fn timestamp_now() -> String {
    let now = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<i64>().ok())
        .and_then(|secs| time::OffsetDateTime::from_unix_timestamp(secs).ok())
        .unwrap_or_else(time::OffsetDateTime::now_utc);
    now.replace_nanosecond(0)
        .unwrap_or(now)
        .format(&time::format_description::well_known::Rfc3339)
        .unwrap_or_default()
}

fn is_valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.bytes().all(|b| b.is_ascii_hexdigit())
}

/// Writes through a temporary sibling and renames, so readers never see a
/// partial file.
fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    let n = COUNTER.fetch_add(1, Ordering::Relaxed);
    let tmp = path.with_extension(format!("tmp-{}-{n}", std::process::id()));
    let mut f = fs::File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    drop(f);
    fs::rename(&tmp, path)
}

impl VolumeStore {
    /// Opens (creating if needed) a store directory and indexes its manifests.
    pub fn open(dir: impl Into<PathBuf>, cache_size: usize) -> Result<Self, StoreError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        let mut index = BTreeMap::new();
        for entry in fs::read_dir(&dir)? {
            let path = entry?.path();
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
            if path.extension().and_then(|e| e.to_str()) != Some("json") || !is_valid_id(stem) {
                continue;
            }
            let corrupt = |message: String| StoreError::Corrupt {
                path: path.display().to_string(),
                message,
            };
            let manifest: VolumeManifest =
                serde_json::from_slice(&fs::read(&path)?).map_err(|e| corrupt(e.to_string()))?;
            if manifest.id != stem {
                return Err(corrupt(format!("id {:?} does not match file name", manifest.id)));
            }
            if !dir.join(format!("{stem}.raw")).is_file() {
                return Err(corrupt("payload missing".into()));
            }
            index.insert(manifest.id.clone(), manifest);
        }
        let cap = NonZeroUsize::new(cache_size.max(1)).expect("nonzero");
        Ok(Self {
            dir,
            index: RwLock::new(index),
            cache: Mutex::new(LruCache::new(cap)),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn raw_path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.raw"))
    }

    /// Persists a volume. Re-inserting identical content returns the
    /// existing manifest unchanged.
    pub fn insert(&self, vol: ScalarVolume, source: VolumeSource) -> Result<VolumeManifest, StoreError> {
        let id = content_id(&vol);
        let mut index = self.index.write().expect("store index poisoned");
        if let Some(existing) = index.get(&id) {
            return Ok(existing.clone());
        }
        let manifest = VolumeManifest::describe(id.clone(), &vol, source, timestamp_now());
        write_atomic(&self.raw_path(&id), &save_raw(&vol))?;
        let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        // The manifest is the commit point: a payload without one is ignored.
        write_atomic(&self.dir.join(format!("{id}.json")), &json)?;
        index.insert(id.clone(), manifest.clone());
        self.cache.lock().expect("cache poisoned").put(id, Arc::new(vol));
        Ok(manifest)
    }

    pub fn list(&self) -> Vec<VolumeManifest> {
        self.index
            .read()
            .expect("store index poisoned")
            .values()
            .cloned()
            .collect()
    }

    pub fn manifest(&self, id: &str) -> Result<VolumeManifest, StoreError> {
        self.index
            .read()
            .expect("store index poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| StoreError::NotFound(id.to_string()))
    }

    /// Decoded volume, from the cache or from disk.
    pub fn get(&self, id: &str) -> Result<Arc<ScalarVolume>, StoreError> {
        if !is_valid_id(id) {
            return Err(StoreError::NotFound(id.to_string()));
        }
        if let Some(v) = self.cache.lock().expect("cache poisoned").get(id) {
            return Ok(v.clone());
        }
        let m = self.manifest(id)?;
        let bytes = fs::read(self.raw_path(id))?;
        let vol = Arc::new(load_raw(&bytes, m.dims, m.spacing, SampleFormat::I16)?);
        self.cache
            .lock()
            .expect("cache poisoned")
            .put(id.to_string(), vol.clone());
        Ok(vol)
    }

    /// Number of decoded volumes currently held in memory.
    pub fn cached(&self) -> usize {
        self.cache.lock().expect("cache poisoned").len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use voxcast_core::ingest::{generate_phantom, PhantomKind};

    #[test]
    fn insert_reopen_and_lru() {
        let dir = tempfile::tempdir().unwrap();
        let store = VolumeStore::open(dir.path(), 2).unwrap();
        assert!(store.list().is_empty());
        let mut ids = Vec::new();
        for n in [8, 9, 10] {
            let vol = generate_phantom(PhantomKind::Sphere, [n; 3]);
            let m = store.insert(vol.clone(), VolumeSource::Phantom).unwrap();
            assert_eq!(m.dims, [n; 3]);
            assert_eq!(store.insert(vol, VolumeSource::Phantom).unwrap(), m);
            ids.push(m.id);
        }
        assert_eq!(store.cached(), 2);
        assert_eq!(store.list().len(), 3);

        let reopened = VolumeStore::open(dir.path(), 2).unwrap();
        assert_eq!(reopened.list(), store.list());
        let a = reopened.get(&ids[0]).unwrap();
        assert_eq!(a.values(), generate_phantom(PhantomKind::Sphere, [8; 3]).values());
        assert!(matches!(reopened.get("ffff"), Err(StoreError::NotFound(_))));
        assert!(matches!(reopened.get("../etc"), Err(StoreError::NotFound(_))));
    }

    #[test]
    fn orphan_payload_is_ignored() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("abcd.raw"), [0u8; 16]).unwrap();
        fs::write(dir.path().join("abcd.json.tmp-1-0"), b"{").unwrap();
        fs::write(dir.path().join("notes.json"), b"{}").unwrap();
        assert!(VolumeStore::open(dir.path(), 4).unwrap().list().is_empty());
    }

    #[test]
    fn content_ids_differ_with_spacing() {
        let vol = generate_phantom(PhantomKind::Sphere, [6; 3]);
        let stretched = ScalarVolume::new(vol.dims(), [1.0, 1.0, 2.0], vol.values().to_vec()).unwrap();
        assert_ne!(content_id(&vol), content_id(&stretched));
        assert_eq!(content_id(&vol).len(), 16);
    }
}
