//! Shared-volume stand-in, secret store, and the per-task view of both.

use std::cell::Cell;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::diag::Diagnostics;
use crate::workflow::{VolumeMount, VolumeSource, WorkflowSpec};
use crate::yaml::parse_documents;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FsError {
    #[error("{0}: not under any mounted volume")]
    NotMounted(String),
    #[error("{0}: mount is read-only")]
    ReadOnly(String),
    #[error("{0}: no such file")]
    NotFound(String),
    #[error("{0}: invalid path")]
    InvalidPath(String),
    #[error("secret {0} is not in the secret store")]
    UnknownSecret(String),
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Blob {
    bytes: Arc<Vec<u8>>,
    writer: String,
}

/// One committed file, as listed in the run's artifact index.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ArtifactEntry {
    pub volume: String,
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
    pub writer: String,
}

/// Committed files keyed by (claim name, relative path).
#[derive(Debug, Clone, Default)]
pub struct ArtifactStore {
    blobs: BTreeMap<(String, String), Blob>,
}

impl ArtifactStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, volume: &str, path: &str) -> Option<&[u8]> {
        self.blobs
            .get(&(volume.to_string(), path.to_string()))
            .map(|b| b.bytes.as_slice())
    }

    pub fn len(&self) -> usize {
        self.blobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blobs.is_empty()
    }

    /// Applies a finished task's buffered writes in path order.
    pub fn commit(&mut self, writer: &str, writes: BTreeMap<(String, String), Vec<u8>>) -> Vec<ArtifactEntry> {
        let mut out = Vec::new();
        for ((volume, path), bytes) in writes {
            out.push(ArtifactEntry {
                volume: volume.clone(),
                path: path.clone(),
                bytes: bytes.len() as u64,
                sha256: sha256_hex(&bytes),
                writer: writer.to_string(),
            });
            self.blobs.insert(
                (volume, path),
                Blob {
                    bytes: Arc::new(bytes),
                    writer: writer.to_string(),
                },
            );
        }
        out
    }

    pub fn index(&self) -> Vec<ArtifactEntry> {
        self.blobs
            .iter()
            .map(|((volume, path), b)| ArtifactEntry {
                volume: volume.clone(),
                path: path.clone(),
                bytes: b.bytes.len() as u64,
                sha256: sha256_hex(&b.bytes),
                writer: b.writer.clone(),
            })
            .collect()
    }
}

/// Secret material by secret name and key. `Debug` never shows values.
#[derive(Clone, Default, PartialEq, Eq)]
pub struct SecretStore {
    secrets: BTreeMap<String, BTreeMap<String, Vec<u8>>>,
}

impl fmt::Debug for SecretStore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut m = f.debug_map();
        for (name, keys) in &self.secrets {
            m.entry(
                name,
                &keys.keys().map(|k| format!("{k}: <redacted>")).collect::<Vec<_>>(),
            );
        }
        m.finish()
    }
}

impl SecretStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, secret: &str, key: &str, value: impl Into<Vec<u8>>) {
        self.secrets
            .entry(secret.to_string())
            .or_default()
            .insert(key.to_string(), value.into());
    }

    pub fn contains(&self, secret: &str) -> bool {
        self.secrets.contains_key(secret)
    }

    fn get(&self, secret: &str, key: &str) -> Option<&[u8]> {
        self.secrets.get(secret)?.get(key).map(Vec::as_slice)
    }

    /// Parses `kind: Secret` documents with `stringData`.
    pub fn parse(bytes: &[u8]) -> Result<SecretStore, Diagnostics> {
        let text = std::str::from_utf8(bytes).map_err(|e| {
            let mut d = Diagnostics::default();
            d.push(Default::default(), crate::diag::code::SYNTAX, format!("not UTF-8: {e}"));
            d
        })?;
        let mut d = Diagnostics::default();
        let mut store = SecretStore::new();
        for doc in parse_documents(text)? {
            if doc.is_null() {
                continue;
            }
            let Some(f) = doc.fields(&mut d, "secret", &["apiVersion", "kind", "metadata", "stringData"]) else {
                continue;
            };
            f.expect_str("apiVersion", &["v1"], &mut d);
            f.expect_str("kind", &["Secret"], &mut d);
            let name = f
                .require("metadata", &mut d)
                .and_then(|m| m.fields(&mut d, "metadata", &["name"]))
                .and_then(|m| m.req_str("name", &mut d));
            let data = f
                .get("stringData")
                .and_then(|s| s.string_map(&mut d, "stringData"))
                .unwrap_or_default();
            if let Some(name) = name {
                store.secrets.entry(name.clone()).or_default();
                for (k, v) in data {
                    store.insert(&name, &k, v.into_bytes());
                }
            }
        }
        d.into_result(store)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum MountKind {
    Artifact { volume: String },
    Secret { name: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct ResolvedMount {
    /// Absolute path without a trailing slash.
    root: String,
    kind: MountKind,
    read_only: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MountTarget {
    /// Artifact namespace, i.e. the claim name.
    Volume(String),
    Secret(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MountSpec {
    pub path: String,
    pub read_only: bool,
    pub target: MountTarget,
}

/// Resolves a task's volume mounts against the workflow's declarations.
pub fn resolve_mounts(spec: &WorkflowSpec, mounts: &[VolumeMount]) -> Result<Vec<MountSpec>, FsError> {
    mounts
        .iter()
        .map(|m| {
            let decl = spec
                .volume(&m.name)
                .ok_or_else(|| FsError::NotMounted(m.mount_path.clone()))?;
            let target = match &decl.source {
                VolumeSource::PersistentVolumeClaim { claim_name } => MountTarget::Volume(claim_name.clone()),
                VolumeSource::Secret(s) => MountTarget::Secret(s.secret_name.clone()),
            };
            Ok(MountSpec {
                path: m.mount_path.clone(),
                read_only: m.read_only,
                target,
            })
        })
        .collect()
}

fn normalize(path: &str) -> Result<String, FsError> {
    if !path.starts_with('/') {
        return Err(FsError::InvalidPath(path.to_string()));
    }
    let mut parts = Vec::new();
    for p in path.split('/') {
        match p {
            "" | "." => {}
            ".." => return Err(FsError::InvalidPath(path.to_string())),
            other => parts.push(other),
        }
    }
    Ok(format!("/{}", parts.join("/")))
}

/// A task's view: committed artifacts plus its own buffered writes, and
/// read-only secret files. Writes reach the store only via `commit`.
pub struct TaskFs<'a> {
    mounts: Vec<ResolvedMount>,
    store: &'a ArtifactStore,
    secrets: &'a SecretStore,
    writes: BTreeMap<(String, String), Vec<u8>>,
    bytes_read: Cell<u64>,
}

impl<'a> TaskFs<'a> {
    /// `mounts` as produced by [`resolve_mounts`]; secret mounts are always
    /// read-only.
    pub fn new(mounts: &[MountSpec], store: &'a ArtifactStore, secrets: &'a SecretStore) -> Result<Self, FsError> {
        let mut resolved = Vec::new();
        for MountSpec {
            path,
            read_only,
            target,
        } in mounts
        {
            let kind = match target {
                MountTarget::Volume(volume) => MountKind::Artifact { volume: volume.clone() },
                MountTarget::Secret(name) => {
                    if !secrets.contains(name) {
                        return Err(FsError::UnknownSecret(name.clone()));
                    }
                    MountKind::Secret { name: name.clone() }
                }
            };
            resolved.push(ResolvedMount {
                root: normalize(path)?,
                read_only: *read_only || matches!(kind, MountKind::Secret { .. }),
                kind,
            });
        }
        Ok(TaskFs {
            mounts: resolved,
            store,
            secrets,
            writes: BTreeMap::new(),
            bytes_read: Cell::new(0),
        })
    }

    /// Longest mount prefix wins, so `/mnt/shared/iqm` shadows `/mnt/shared`.
    fn locate(&self, path: &str) -> Result<(&ResolvedMount, String), FsError> {
        let norm = normalize(path)?;
        self.mounts
            .iter()
            .filter_map(|m| {
                let rest = if m.root == "/" {
                    Some(norm.trim_start_matches('/'))
                } else {
                    norm.strip_prefix(&m.root)
                        .and_then(|r| if r.is_empty() { Some("") } else { r.strip_prefix('/') })
                };
                rest.map(|r| (m, r.to_string()))
            })
            .max_by_key(|(m, _)| m.root.len())
            .ok_or(FsError::NotMounted(path.to_string()))
    }

    pub fn read(&self, path: &str) -> Result<Vec<u8>, FsError> {
        let (m, rel) = self.locate(path)?;
        let bytes = match &m.kind {
            MountKind::Secret { name } => {
                // Secret reads are not counted as artifact traffic.
                return self
                    .secrets
                    .get(name, &rel)
                    .map(<[u8]>::to_vec)
                    .ok_or_else(|| FsError::NotFound(path.to_string()));
            }
            MountKind::Artifact { volume } => match self.writes.get(&(volume.clone(), rel.clone())) {
                Some(b) => b.clone(),
                None => self
                    .store
                    .get(volume, &rel)
                    .map(<[u8]>::to_vec)
                    .ok_or_else(|| FsError::NotFound(path.to_string()))?,
            },
        };
        self.bytes_read.set(self.bytes_read.get() + bytes.len() as u64);
        Ok(bytes)
    }

    pub fn read_string(&self, path: &str) -> Result<String, FsError> {
        String::from_utf8(self.read(path)?).map_err(|_| FsError::InvalidPath(path.to_string()))
    }

    pub fn exists(&self, path: &str) -> bool {
        match self.locate(path) {
            Ok((m, rel)) => match &m.kind {
                MountKind::Secret { name } => self.secrets.get(name, &rel).is_some(),
                MountKind::Artifact { volume } => {
                    self.writes.contains_key(&(volume.clone(), rel.clone())) || self.store.get(volume, &rel).is_some()
                }
            },
            Err(_) => false,
        }
    }

    pub fn write(&mut self, path: &str, bytes: impl Into<Vec<u8>>) -> Result<(), FsError> {
        let (m, rel) = self.locate(path)?;
        if m.read_only {
            return Err(FsError::ReadOnly(path.to_string()));
        }
        if rel.is_empty() {
            return Err(FsError::InvalidPath(path.to_string()));
        }
        let MountKind::Artifact { volume } = &m.kind else {
            return Err(FsError::ReadOnly(path.to_string()));
        };
        let key = (volume.clone(), rel);
        self.writes.insert(key, bytes.into());
        Ok(())
    }

    pub fn bytes_read(&self) -> u64 {
        self.bytes_read.get()
    }

    pub fn bytes_pending(&self) -> u64 {
        self.writes.values().map(|b| b.len() as u64).sum()
    }

    /// The buffered writes, for committing on success.
    pub fn into_writes(self) -> BTreeMap<(String, String), Vec<u8>> {
        self.writes
    }
}
