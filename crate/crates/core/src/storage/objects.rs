//! Retinal image storage.
//!
//! Images are stored under keys built only from the visit id, the eye and a
//! per-eye index (`AAA001001-L-1`), so no identifying detail ever reaches the
//! backend. Keys are namespaced per organization.

use std::collections::HashMap;
use std::fmt;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use crate::domain::{Eye, OrganizationId};
use crate::error::{Error, Result};
use crate::ids::VisitId;

/// A key matching `^[A-Z]{3}[0-9]{6}-(L|R)-[0-9]+$`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StorageKey(String);

impl StorageKey {
    pub fn new(visit_id: VisitId, eye: Eye, index: u32) -> Self {
        Self(format!("{visit_id}-{}-{index}", eye.key_code()))
    }

    pub fn parse(key: &str) -> Result<Self> {
        let violation = || Error::KeyPolicyViolation(format!("`{key}` is not of the form AAA000000-L-1"));
        let b = key.as_bytes();
        if b.len() < 13 {
            return Err(violation());
        }
        let ok = b[..3].iter().all(u8::is_ascii_uppercase)
            && b[3..9].iter().all(u8::is_ascii_digit)
            && b[9] == b'-'
            && matches!(b[10], b'L' | b'R')
            && b[11] == b'-'
            && b[12..].iter().all(u8::is_ascii_digit);
        if ok {
            Ok(Self(key.to_string()))
        } else {
            Err(violation())
        }
    }

    pub fn visit_id(&self) -> VisitId {
        self.0[..9].parse().expect("checked by the key grammar")
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for StorageKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for StorageKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "StorageKey({})", self.0)
    }
}

/// Blob storage for images. `BackendUnavailable` errors are transient and
/// may be retried.
pub trait ObjectStore: Send + Sync {
    fn put(&self, org: &OrganizationId, key: &StorageKey, bytes: &[u8]) -> Result<()>;
    fn get(&self, org: &OrganizationId, key: &StorageKey) -> Result<Vec<u8>>;
    fn exists(&self, org: &OrganizationId, key: &StorageKey) -> Result<bool>;
}

/// Files under `root/<organization>/<key>`.
#[derive(Debug)]
pub struct FsObjectStore {
    root: PathBuf,
}

impl FsObjectStore {
    /// Creates the root if needed and checks that it is writable.
    pub fn open(root: &Path) -> Result<Self> {
        let unavailable = |e: std::io::Error| Error::BackendUnavailable(format!("{}: {e}", root.display()));
        std::fs::create_dir_all(root).map_err(unavailable)?;
        let probe = root.join(".probe");
        std::fs::write(&probe, b"").map_err(unavailable)?;
        std::fs::remove_file(&probe).map_err(unavailable)?;
        Ok(Self {
            root: root.to_path_buf(),
        })
    }

    fn path(&self, org: &OrganizationId, key: &StorageKey) -> PathBuf {
        self.root.join(org.as_str()).join(key.as_str())
    }
}

fn backend(e: std::io::Error) -> Error {
    Error::BackendUnavailable(e.to_string())
}

impl ObjectStore for FsObjectStore {
    fn put(&self, org: &OrganizationId, key: &StorageKey, bytes: &[u8]) -> Result<()> {
        let path = self.path(org, key);
        std::fs::create_dir_all(path.parent().expect("keys live in an organization folder")).map_err(backend)?;
        let tmp = path.with_extension("part");
        std::fs::write(&tmp, bytes).map_err(backend)?;
        std::fs::rename(&tmp, &path).map_err(backend)
    }

    fn get(&self, org: &OrganizationId, key: &StorageKey) -> Result<Vec<u8>> {
        std::fs::read(self.path(org, key)).map_err(|e| match e.kind() {
            ErrorKind::NotFound => Error::NotFound(format!("image {key}")),
            _ => backend(e),
        })
    }

    fn exists(&self, org: &OrganizationId, key: &StorageKey) -> Result<bool> {
        self.path(org, key).try_exists().map_err(backend)
    }
}

#[derive(Debug, Default)]
pub struct MemoryObjectStore {
    objects: Mutex<HashMap<(OrganizationId, StorageKey), Vec<u8>>>,
}

impl ObjectStore for MemoryObjectStore {
    fn put(&self, org: &OrganizationId, key: &StorageKey, bytes: &[u8]) -> Result<()> {
        self.objects
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .insert((org.clone(), key.clone()), bytes.to_vec());
        Ok(())
    }

    fn get(&self, org: &OrganizationId, key: &StorageKey) -> Result<Vec<u8>> {
        self.objects
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .get(&(org.clone(), key.clone()))
            .cloned()
            .ok_or_else(|| Error::NotFound(format!("image {key}")))
    }

    fn exists(&self, org: &OrganizationId, key: &StorageKey) -> Result<bool> {
        Ok(self
            .objects
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .contains_key(&(org.clone(), key.clone())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn contract(store: &dyn ObjectStore) {
        let org = OrganizationId::new("ucc").unwrap();
        let other = OrganizationId::new("mhd").unwrap();
        let key = StorageKey::new("AAA001001".parse().unwrap(), Eye::Left, 1);
        assert!(!store.exists(&org, &key).unwrap());
        assert!(matches!(store.get(&org, &key), Err(Error::NotFound(_))));
        store.put(&org, &key, b"fundus").unwrap();
        assert_eq!(store.get(&org, &key).unwrap(), b"fundus");
        assert!(store.exists(&org, &key).unwrap());
        assert!(!store.exists(&other, &key).unwrap());
        store.put(&org, &key, b"retake").unwrap();
        assert_eq!(store.get(&org, &key).unwrap(), b"retake");
    }

    #[test]
    fn filesystem_contract() {
        let dir = tempfile::tempdir().unwrap();
        contract(&FsObjectStore::open(dir.path()).unwrap());
    }

    #[test]
    fn memory_contract() {
        contract(&MemoryObjectStore::default());
    }

    #[test]
    fn key_grammar() {
        assert_eq!(
            StorageKey::new("AAA001002".parse().unwrap(), Eye::Right, 3).as_str(),
            "AAA001002-R-3"
        );
        assert!(StorageKey::parse("AAA001001-L-12").is_ok());
        for bad in [
            "Ana-Garcia-L-1",
            "AAA001001-X-1",
            "AAA001001-L-",
            "aaa001001-L-1",
            "AAA001001-L-1/..",
            "AAA00100-L-1",
        ] {
            assert!(
                matches!(StorageKey::parse(bad), Err(Error::KeyPolicyViolation(_))),
                "{bad}"
            );
        }
    }

    proptest! {
        #[test]
        fn parse_accepts_exactly_the_grammar(s in "[A-Za-z0-9-]{0,16}") {
            let b = s.as_bytes();
            let expected = b.len() >= 13
                && b[..3].iter().all(|c| c.is_ascii_uppercase())
                && b[3..9].iter().all(|c| c.is_ascii_digit())
                && &s[9..10] == "-"
                && (&s[10..11] == "L" || &s[10..11] == "R")
                && &s[11..12] == "-"
                && b[12..].iter().all(|c| c.is_ascii_digit());
            prop_assert_eq!(StorageKey::parse(&s).is_ok(), expected);
        }

        #[test]
        fn generated_keys_parse(letters in "[A-Z]{3}", digits in 0u32..1000, seq in 1u32..1000, left in any::<bool>(), index in 1u32..100) {
            let vid: VisitId = format!("{letters}{digits:03}{seq:03}").parse().unwrap();
            let eye = if left { Eye::Left } else { Eye::Right };
            let key = StorageKey::new(vid, eye, index);
            prop_assert_eq!(StorageKey::parse(key.as_str()).unwrap().visit_id(), vid);
        }
    }
}
