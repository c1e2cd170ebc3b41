//! Durable enrollment store: a directory holding one JSON `manifest`.
//!
//! The manifest starts with `format_version`; loads reject unknown versions
//! and any record set that breaks the registry invariants. Every mutation is
//! applied to a copy of the registry, written to `manifest.tmp`, renamed over
//! `manifest`, and only then published to readers. Mutations are serialized
//! by an internal write lock; reads proceed concurrently. No cross-process
//! locking is done.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::RwLock;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use opfactor_core::enrollment::{EnrollmentError, EnrollmentRecord, Reference, Registry};
use opfactor_core::{AudioSignature, ColorHistogram, RecordLookup};

pub const MANIFEST_FILE: &str = "manifest";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("store io at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("manifest is not valid: {0}")]
    Format(#[from] serde_json::Error),
    #[error("manifest format version {0} is not supported (expected {FORMAT_VERSION})")]
    UnsupportedVersion(u32),
    #[error("no store manifest at {0}")]
    Missing(PathBuf),
    #[error(transparent)]
    Enrollment(#[from] EnrollmentError),
}

impl StoreError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        StoreError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Serialize)]
struct ManifestOut<'a> {
    format_version: u32,
    max_refs: usize,
    records: Vec<&'a EnrollmentRecord>,
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: u32,
}

#[derive(Deserialize)]
struct ManifestIn {
    #[allow(dead_code)]
    format_version: u32,
    max_refs: usize,
    records: Vec<EnrollmentRecord>,
}

fn now_secs() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

#[derive(Debug)]
pub struct EnrollmentStore {
    root: PathBuf,
    registry: RwLock<Registry>,
}

impl EnrollmentStore {
    /// Creates an empty store, writing its manifest. Fails if one exists.
    pub fn create(root: &Path, max_refs: usize) -> Result<Self, StoreError> {
        if max_refs == 0 {
            return Err(EnrollmentError::ZeroCap.into());
        }
        fs::create_dir_all(root).map_err(|e| StoreError::io(root, e))?;
        let manifest = root.join(MANIFEST_FILE);
        if manifest.exists() {
            return Err(StoreError::io(
                &manifest,
                std::io::Error::new(std::io::ErrorKind::AlreadyExists, "manifest already exists"),
            ));
        }
        let registry = Registry::new(max_refs);
        write_manifest(root, &registry)?;
        Ok(EnrollmentStore {
            root: root.to_path_buf(),
            registry: RwLock::new(registry),
        })
    }

    /// Loads an existing store.
    pub fn load(root: &Path) -> Result<Self, StoreError> {
        let manifest = root.join(MANIFEST_FILE);
        if !manifest.is_file() {
            return Err(StoreError::Missing(manifest));
        }
        let text = fs::read_to_string(&manifest).map_err(|e| StoreError::io(&manifest, e))?;
        let registry = parse_manifest(&text)?;
        Ok(EnrollmentStore {
            root: root.to_path_buf(),
            registry: RwLock::new(registry),
        })
    }

    /// Loads the store at `root`, creating an empty one if there is none.
    pub fn open_or_create(root: &Path, max_refs: usize) -> Result<Self, StoreError> {
        if root.join(MANIFEST_FILE).is_file() {
            Self::load(root)
        } else {
            Self::create(root, max_refs)
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn max_refs(&self) -> usize {
        self.read().max_refs()
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, Registry> {
        self.registry.read().unwrap_or_else(|p| p.into_inner())
    }

    /// Applies `f` to a copy of the registry, persists it, then publishes it.
    fn mutate<T>(&self, f: impl FnOnce(&mut Registry) -> Result<T, EnrollmentError>) -> Result<T, StoreError> {
        let mut guard = self.registry.write().unwrap_or_else(|p| p.into_inner());
        let mut next = guard.clone();
        let out = f(&mut next)?;
        write_manifest(&self.root, &next)?;
        *guard = next;
        Ok(out)
    }

    pub fn enroll(
        &self,
        identity_id: &str,
        rfid_tag: &str,
        audio_refs: Vec<AudioSignature>,
        visual_refs: Vec<ColorHistogram>,
    ) -> Result<EnrollmentRecord, StoreError> {
        let now = now_secs();
        self.mutate(|reg| {
            reg.enroll(identity_id, rfid_tag, audio_refs, visual_refs, now)
                .cloned()
        })
    }

    pub fn add_reference(&self, identity_id: &str, reference: Reference) -> Result<EnrollmentRecord, StoreError> {
        let now = now_secs();
        self.mutate(|reg| reg.add_reference(identity_id, reference, now).cloned())
    }

    /// Appends several references to one identity in a single write.
    pub fn add_references(
        &self,
        identity_id: &str,
        references: Vec<Reference>,
    ) -> Result<EnrollmentRecord, StoreError> {
        let now = now_secs();
        self.mutate(|reg| {
            for r in references {
                reg.add_reference(identity_id, r, now)?;
            }
            reg.get(identity_id)
                .cloned()
                .ok_or_else(|| EnrollmentError::NotFound(identity_id.into()))
        })
    }

    pub fn delete(&self, identity_id: &str) -> Result<EnrollmentRecord, StoreError> {
        self.mutate(|reg| reg.delete(identity_id))
    }

    pub fn get(&self, identity_id: &str) -> Result<EnrollmentRecord, StoreError> {
        self.read()
            .get(identity_id)
            .cloned()
            .ok_or_else(|| EnrollmentError::NotFound(identity_id.into()).into())
    }

    pub fn find_by_rfid(&self, tag: &str) -> Option<EnrollmentRecord> {
        self.read().find_by_rfid(tag).cloned()
    }

    pub fn list(&self) -> Vec<EnrollmentRecord> {
        self.read().records().cloned().collect()
    }

    /// Snapshot of the in-memory index.
    pub fn registry(&self) -> Registry {
        self.read().clone()
    }
}

impl RecordLookup for EnrollmentStore {
    fn lookup_rfid(&self, tag: &str) -> Option<EnrollmentRecord> {
        self.find_by_rfid(tag)
    }
}

pub fn render_manifest(registry: &Registry) -> Result<String, serde_json::Error> {
    serde_json::to_string_pretty(&ManifestOut {
        format_version: FORMAT_VERSION,
        max_refs: registry.max_refs(),
        records: registry.records().collect(),
    })
}

pub fn parse_manifest(text: &str) -> Result<Registry, StoreError> {
    let probe: VersionProbe = serde_json::from_str(text)?;
    if probe.format_version != FORMAT_VERSION {
        return Err(StoreError::UnsupportedVersion(probe.format_version));
    }
    let m: ManifestIn = serde_json::from_str(text)?;
    Ok(Registry::from_records(m.max_refs, m.records)?)
}

fn write_manifest(root: &Path, registry: &Registry) -> Result<(), StoreError> {
    let text = render_manifest(registry)?;
    let tmp = root.join(format!("{MANIFEST_FILE}.tmp"));
    let dest = root.join(MANIFEST_FILE);
    let mut f = fs::File::create(&tmp).map_err(|e| StoreError::io(&tmp, e))?;
    f.write_all(text.as_bytes())
        .and_then(|_| f.write_all(b"\n"))
        .and_then(|_| f.sync_all())
        .map_err(|e| StoreError::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, &dest).map_err(|e| StoreError::io(&dest, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use opfactor_core::FrameParams;

    fn sig(mean: f64) -> AudioSignature {
        AudioSignature::from_centroids(vec![mean, mean + 0.1], FrameParams::default()).unwrap()
    }

    fn hist(hot: usize) -> ColorHistogram {
        let mut v = vec![0.0; 512];
        v[hot] = 0.25;
        v[hot + 1] = 0.75;
        ColorHistogram::from_values(8, v).unwrap()
    }

    #[test]
    fn persist_and_reload() {
        let dir = tempfile::tempdir().unwrap();
        let store = EnrollmentStore::create(dir.path(), 10).unwrap();
        store.enroll("car-1", "TAG-0001", vec![sig(512.25)], vec![hist(3)]).unwrap();
        store.enroll("car-2", "TAG-0002", vec![], vec![hist(40)]).unwrap();
        store.add_reference("car-1", Reference::Audio(sig(1.0 / 3.0))).unwrap();

        let reloaded = EnrollmentStore::load(dir.path()).unwrap();
        assert_eq!(reloaded.list(), store.list());
        assert_eq!(reloaded.registry(), store.registry());
        assert!(!dir.path().join("manifest.tmp").exists());
    }

    #[test]
    fn failed_mutation_leaves_store_untouched() {
        let dir = tempfile::tempdir().unwrap();
        let store = EnrollmentStore::create(dir.path(), 10).unwrap();
        store.enroll("car-1", "TAG-0001", vec![sig(500.0)], vec![]).unwrap();
        let before = fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap();
        assert!(matches!(
            store.enroll("car-2", "TAG-0001", vec![sig(1.0)], vec![]),
            Err(StoreError::Enrollment(EnrollmentError::DuplicateTag(_)))
        ));
        assert_eq!(fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap(), before);
        assert_eq!(store.list().len(), 1);
    }

    #[test]
    fn lookups() {
        let dir = tempfile::tempdir().unwrap();
        let store = EnrollmentStore::create(dir.path(), 10).unwrap();
        store.enroll("car-1", "TAG-0001", vec![sig(500.0)], vec![]).unwrap();
        assert_eq!(store.find_by_rfid("TAG-0001").unwrap().identity_id, "car-1");
        assert!(store.find_by_rfid("nope").is_none());
        store.delete("car-1").unwrap();
        assert!(store.find_by_rfid("TAG-0001").is_none());
        assert!(matches!(
            store.get("car-1"),
            Err(StoreError::Enrollment(EnrollmentError::NotFound(_)))
        ));
        assert!(EnrollmentStore::load(dir.path()).unwrap().list().is_empty());
    }

    #[test]
    fn rejects_unknown_version() {
        let text = r#"{"format_version": 2, "max_refs": 10, "records": []}"#;
        assert!(matches!(parse_manifest(text), Err(StoreError::UnsupportedVersion(2))));
        assert!(matches!(parse_manifest("{}"), Err(StoreError::Format(_))));
    }

    #[test]
    fn rejects_manifest_with_duplicate_tags() {
        let mut reg = Registry::new(10);
        reg.enroll("a", "T1", vec![sig(1.0)], vec![], 0).unwrap();
        reg.enroll("b", "T2", vec![sig(2.0)], vec![], 0).unwrap();
        let text = render_manifest(&reg).unwrap().replace("\"T2\"", "\"T1\"");
        assert!(matches!(
            parse_manifest(&text),
            Err(StoreError::Enrollment(EnrollmentError::DuplicateTag(_)))
        ));
    }

    #[test]
    fn rejects_tampered_histogram() {
        let mut reg = Registry::new(10);
        reg.enroll("a", "T1", vec![], vec![hist(0)], 0).unwrap();
        let text = render_manifest(&reg).unwrap().replacen("0.75", "0.5", 1);
        assert!(matches!(parse_manifest(&text), Err(StoreError::Format(_))));
    }

    #[test]
    fn missing_and_existing() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(EnrollmentStore::load(dir.path()), Err(StoreError::Missing(_))));
        EnrollmentStore::create(dir.path(), 10).unwrap();
        assert!(EnrollmentStore::create(dir.path(), 10).is_err());
        assert!(EnrollmentStore::open_or_create(dir.path(), 10).is_ok());
    }

    #[test]
    fn concurrent_writers_are_serialized() {
        let dir = tempfile::tempdir().unwrap();
        let store = std::sync::Arc::new(EnrollmentStore::create(dir.path(), 100).unwrap());
        store.enroll("car-1", "T", vec![sig(0.0)], vec![]).unwrap();
        let handles: Vec<_> = (0..8)
            .map(|i| {
                let s = store.clone();
                std::thread::spawn(move || {
                    for j in 0..5 {
                        s.add_reference("car-1", Reference::Audio(sig((i * 10 + j) as f64))).unwrap();
                    }
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        assert_eq!(store.get("car-1").unwrap().audio_refs.len(), 41);
        assert_eq!(EnrollmentStore::load(dir.path()).unwrap().get("car-1").unwrap().audio_refs.len(), 41);
    }
}
