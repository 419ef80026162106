//! Service configuration: a TOML file, overridden by environment variables.
//!
//! ```toml
//! addr = "0.0.0.0:8443"
//! tls_cert = "/etc/mtocs/cert.pem"
//! tls_key = "/etc/mtocs/key.pem"
//! templates_dir = "/etc/mtocs/templates"   # optional, built-in letters otherwise
//! schema_path = "/etc/mtocs/screening.json" # optional, built-in questionnaire otherwise
//! session_ttl_hours = 12
//!
//! [storage]
//! backend = "filesystem"                   # or "memory"
//! root = "/var/lib/mtocs/images"
//! data_file = "/var/lib/mtocs/records.json"
//!
//! [[accounts]]
//! account_id = "u1"
//! username = "maria"
//! password_hash = "$argon2id$..."          # from `mtocs hash-password`
//! role = "screener"
//! organization_id = "ucc"
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use crate::access::{AccessControl, Account, DEFAULT_SESSION_TTL_HOURS};
use crate::error::{Error, Result};
use crate::reporting::LetterTemplates;
use crate::service::ScreeningService;
use crate::storage::objects::{FsObjectStore, MemoryObjectStore, ObjectStore};
use crate::storage::Store;
use crate::survey::QuestionnaireSchema;

pub const DEFAULT_ADDR: &str = "127.0.0.1:8443";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StorageBackend {
    #[default]
    Memory,
    Filesystem,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StorageConfig {
    #[serde(default)]
    pub backend: StorageBackend,
    /// Image folder for the filesystem backend.
    pub root: Option<PathBuf>,
    /// Record file; records are kept in memory only when absent.
    pub data_file: Option<PathBuf>,
    /// Name of a credential for backends that need one. The filesystem
    /// backend relies on file permissions and ignores it.
    pub credentials: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default = "default_addr")]
    pub addr: String,
    pub tls_cert: Option<PathBuf>,
    pub tls_key: Option<PathBuf>,
    pub templates_dir: Option<PathBuf>,
    pub schema_path: Option<PathBuf>,
    #[serde(default = "default_ttl")]
    pub session_ttl_hours: i64,
    #[serde(default)]
    pub storage: StorageConfig,
    #[serde(default)]
    pub accounts: Vec<Account>,
}

fn default_addr() -> String {
    DEFAULT_ADDR.to_string()
}

fn default_ttl() -> i64 {
    DEFAULT_SESSION_TTL_HOURS
}

impl Default for Config {
    fn default() -> Self {
        Self {
            addr: default_addr(),
            tls_cert: None,
            tls_key: None,
            templates_dir: None,
            schema_path: None,
            session_ttl_hours: default_ttl(),
            storage: StorageConfig::default(),
            accounts: Vec::new(),
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads `path` (if given) and applies environment overrides.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut config = match path {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
                Self::from_toml(&text)?
            }
            None => Self::default(),
        };
        config.apply_env(|name| std::env::var(name).ok())?;
        Ok(config)
    }

    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) -> Result<()> {
        if let Some(v) = var("ADDR") {
            self.addr = v;
        }
        let path = |name: &str| var(name).map(PathBuf::from);
        self.tls_cert = path("TLS_CERT").or(self.tls_cert.take());
        self.tls_key = path("TLS_KEY").or(self.tls_key.take());
        self.templates_dir = path("TEMPLATES_DIR").or(self.templates_dir.take());
        self.schema_path = path("SCHEMA_PATH").or(self.schema_path.take());
        self.storage.root = path("STORAGE_ROOT").or(self.storage.root.take());
        self.storage.data_file = path("STORAGE_DATA_FILE").or(self.storage.data_file.take());
        self.storage.credentials = var("STORAGE_CREDENTIALS").or(self.storage.credentials.take());
        if let Some(v) = var("STORAGE_BACKEND") {
            self.storage.backend = match v.as_str() {
                "memory" => StorageBackend::Memory,
                "filesystem" => StorageBackend::Filesystem,
                other => return Err(Error::Config(format!("unknown STORAGE_BACKEND `{other}`"))),
            };
        }
        if let Some(v) = var("SESSION_TTL_HOURS") {
            self.session_ttl_hours = v
                .parse()
                .map_err(|_| Error::Config(format!("SESSION_TTL_HOURS `{v}` is not a whole number")))?;
        }
        Ok(())
    }

    /// Loads templates, questionnaire and storage and registers accounts.
    /// Any missing template, bad schema or unusable storage location fails
    /// here rather than on first use.
    pub fn build_service(&self) -> Result<ScreeningService> {
        if self.session_ttl_hours <= 0 {
            return Err(Error::Config("session_ttl_hours must be positive".into()));
        }
        let templates = match &self.templates_dir {
            Some(dir) => LetterTemplates::load_dir(dir)?,
            None => LetterTemplates::builtin(),
        };
        let schema = match &self.schema_path {
            Some(path) => QuestionnaireSchema::load(path)?,
            None => QuestionnaireSchema::builtin(),
        };
        let store = match &self.storage.data_file {
            Some(path) => Store::open(path)?,
            None => Store::in_memory(),
        };
        let objects: Arc<dyn ObjectStore> = match self.storage.backend {
            StorageBackend::Memory => Arc::new(MemoryObjectStore::default()),
            StorageBackend::Filesystem => {
                let root = self
                    .storage
                    .root
                    .as_deref()
                    .ok_or_else(|| Error::Config("storage.root is required for the filesystem backend".into()))?;
                if self.storage.credentials.is_some() {
                    tracing::warn!("storage credentials are not used by the filesystem backend");
                }
                Arc::new(FsObjectStore::open(root)?)
            }
        };
        let access = AccessControl::new(chrono::Duration::hours(self.session_ttl_hours));
        for account in &self.accounts {
            access.add_account(account.clone())?;
        }
        Ok(ScreeningService::new(store, objects, schema, templates, access))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn file_then_environment() {
        let mut config = Config::from_toml(
            r#"
            addr = "0.0.0.0:9000"
            [storage]
            backend = "filesystem"
            root = "/srv/images"
            "#,
        )
        .unwrap();
        let env: HashMap<&str, &str> = [
            ("ADDR", "127.0.0.1:1"),
            ("STORAGE_BACKEND", "memory"),
            ("SESSION_TTL_HOURS", "2"),
        ]
        .into_iter()
        .collect();
        config.apply_env(|k| env.get(k).map(|v| v.to_string())).unwrap();
        assert_eq!(config.addr, "127.0.0.1:1");
        assert_eq!(config.storage.backend, StorageBackend::Memory);
        assert_eq!(config.storage.root.as_deref(), Some(Path::new("/srv/images")));
        assert_eq!(config.session_ttl_hours, 2);
        assert!(config
            .apply_env(|k| (k == "SESSION_TTL_HOURS").then(|| "soon".to_string()))
            .is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(Config::from_toml("adress = \"x\""), Err(Error::Config(_))));
    }

    #[test]
    fn startup_fails_on_bad_material() {
        let dir = tempfile::tempdir().unwrap();
        let config = Config {
            templates_dir: Some(dir.path().to_path_buf()),
            ..Config::default()
        };
        assert!(
            config.build_service().is_err(),
            "an empty template folder has no manifest"
        );

        let config = Config {
            storage: StorageConfig {
                backend: StorageBackend::Filesystem,
                root: None,
                ..Default::default()
            },
            ..Config::default()
        };
        assert!(matches!(config.build_service(), Err(Error::Config(_))));

        let file = dir.path().join("not-a-dir");
        std::fs::write(&file, b"").unwrap();
        let config = Config {
            storage: StorageConfig {
                backend: StorageBackend::Filesystem,
                root: Some(file.join("images")),
                ..Default::default()
            },
            ..Config::default()
        };
        assert!(matches!(config.build_service(), Err(Error::BackendUnavailable(_))));
    }
}
