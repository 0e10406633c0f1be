//! The learnware pool: (model, specification) pairs on disk.
//!
//! Layout:
//!
//! ```text
//! <root>/manifest.json        {"kernel": {...}, "entries": [{"id", "hash"}, ...]}
//! <root>/<id>/spec.json       reduced embedding
//! <root>/<id>/model.json      model reference
//! <root>/<id>/meta.json       provider metadata
//! ```
//!
//! `hash` is the SHA-256 of the three entry files and is checked on load.
//! Writers hold `<root>/.lock` for the duration of an upload.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{Dataset, Points};
use crate::error::{Error, Result};
use crate::kernel::KernelConfig;
use crate::models::ModelRef;
use crate::rkme::{reduce, ReduceOptions, Rkme};

const MANIFEST: &str = "manifest.json";
const LOCK: &str = ".lock";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryMeta {
    pub provider: String,
    pub task: String,
    pub created: DateTime<Utc>,
}

impl EntryMeta {
    pub fn new(provider: impl Into<String>, task: impl Into<String>) -> Self {
        EntryMeta { provider: provider.into(), task: task.into(), created: Utc::now() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnwareEntry {
    pub id: String,
    pub spec: Rkme,
    pub model: ModelRef,
    pub meta: EntryMeta,
}

/// Id and metadata of an entry, without its specification or model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntrySummary {
    pub id: String,
    #[serde(flatten)]
    pub meta: EntryMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ManifestEntry {
    id: String,
    hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    kernel: KernelConfig,
    entries: Vec<ManifestEntry>,
}

#[derive(Debug, Clone)]
pub struct Pool {
    root: Option<PathBuf>,
    kernel: KernelConfig,
    entries: Vec<LearnwareEntry>,
    hashes: Vec<String>,
}

struct EntryFiles {
    spec: String,
    model: String,
    meta: String,
}

impl EntryFiles {
    fn of(entry: &LearnwareEntry) -> Result<Self> {
        Ok(EntryFiles {
            spec: entry.spec.to_json()? + "\n",
            model: entry.model.to_json()? + "\n",
            meta: serde_json::to_string_pretty(&entry.meta)? + "\n",
        })
    }

    fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (name, body) in [("spec.json", &self.spec), ("model.json", &self.model), ("meta.json", &self.meta)] {
            h.update(name.as_bytes());
            h.update([0u8]);
            h.update(body.as_bytes());
            h.update([0u8]);
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

struct LockGuard(PathBuf);

impl LockGuard {
    fn acquire(root: &Path) -> Result<Self> {
        let path = root.join(LOCK);
        fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .map_err(|e| match e.kind() {
                std::io::ErrorKind::AlreadyExists => Error::Locked(path.clone()),
                _ => Error::io(&path, e),
            })?;
        Ok(LockGuard(path))
    }
}

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn read_manifest(root: &Path) -> Result<Manifest> {
    let text = read(&root.join(MANIFEST))?;
    serde_json::from_str(&text).map_err(|e| Error::Integrity {
        entry: MANIFEST.into(),
        reason: e.to_string(),
    })
}

/// Entry ids and metadata of the pool at `root`, read from the manifest and
/// each `meta.json` only.
pub fn list_dir(root: impl AsRef<Path>) -> Result<Vec<EntrySummary>> {
    let root = root.as_ref();
    read_manifest(root)?
        .entries
        .into_iter()
        .map(|e| {
            let meta = read(&root.join(&e.id).join("meta.json"))?;
            let meta = serde_json::from_str(&meta).map_err(|err| Error::Integrity {
                entry: e.id.clone(),
                reason: format!("meta.json: {err}"),
            })?;
            Ok(EntrySummary { id: e.id, meta })
        })
        .collect()
}

impl Pool {
    pub fn in_memory(kernel: KernelConfig) -> Result<Self> {
        kernel.validate()?;
        Ok(Pool { root: None, kernel, entries: Vec::new(), hashes: Vec::new() })
    }

    /// Creates an empty pool directory. Fails if a pool already lives there.
    pub fn create(root: impl AsRef<Path>, kernel: KernelConfig) -> Result<Self> {
        let root = root.as_ref();
        kernel.validate()?;
        if root.join(MANIFEST).exists() {
            return Err(Error::Conflict(root.display().to_string()));
        }
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        let pool = Pool { root: Some(root.to_path_buf()), kernel, entries: Vec::new(), hashes: Vec::new() };
        write(&root.join(MANIFEST), &pool.manifest_json()?)?;
        Ok(pool)
    }

    /// Loads the pool at `root`, or creates it with `kernel` if absent. An
    /// existing pool must use the same kernel.
    pub fn open_or_create(root: impl AsRef<Path>, kernel: KernelConfig) -> Result<Self> {
        let root = root.as_ref();
        if root.join(MANIFEST).exists() {
            let pool = Pool::load(root)?;
            if pool.kernel != kernel {
                return Err(Error::Config(format!(
                    "pool kernel is {:?}, requested {kernel:?}",
                    pool.kernel
                )));
            }
            Ok(pool)
        } else {
            Pool::create(root, kernel)
        }
    }

    pub fn load(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref();
        let manifest = read_manifest(root)?;
        let mut entries = Vec::with_capacity(manifest.entries.len());
        let mut hashes = Vec::with_capacity(manifest.entries.len());
        for me in &manifest.entries {
            let integrity = |reason: String| Error::Integrity { entry: me.id.clone(), reason };
            if !valid_id(&me.id) {
                return Err(integrity("invalid id".into()));
            }
            let dir = root.join(&me.id);
            let files = EntryFiles {
                spec: read(&dir.join("spec.json"))?,
                model: read(&dir.join("model.json"))?,
                meta: read(&dir.join("meta.json"))?,
            };
            if files.hash() != me.hash {
                return Err(integrity("content hash does not match manifest".into()));
            }
            let spec = Rkme::from_json(&files.spec).map_err(|e| integrity(format!("spec.json: {e}")))?;
            let model = ModelRef::from_json(&files.model).map_err(|e| integrity(format!("model.json: {e}")))?;
            let meta = serde_json::from_str(&files.meta).map_err(|e| integrity(format!("meta.json: {e}")))?;
            if spec.kernel != manifest.kernel {
                return Err(integrity("specification kernel differs from the pool kernel".into()));
            }
            if spec.dim() != model.dim {
                return Err(integrity("specification and model dimensions differ".into()));
            }
            entries.push(LearnwareEntry { id: me.id.clone(), spec, model, meta });
            hashes.push(me.hash.clone());
        }
        Ok(Pool { root: Some(root.to_path_buf()), kernel: manifest.kernel, entries, hashes })
    }

    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    pub fn kernel(&self) -> &KernelConfig {
        &self.kernel
    }

    pub fn entries(&self) -> &[LearnwareEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn list(&self) -> Vec<EntrySummary> {
        self.entries
            .iter()
            .map(|e| EntrySummary { id: e.id.clone(), meta: e.meta.clone() })
            .collect()
    }

    pub fn get(&self, id: &str) -> Result<&LearnwareEntry> {
        self.entries
            .iter()
            .find(|e| e.id == id)
            .ok_or_else(|| Error::NotFound(id.to_string()))
    }

    pub fn manifest_json(&self) -> Result<String> {
        let manifest = Manifest {
            kernel: self.kernel,
            entries: self
                .entries
                .iter()
                .zip(&self.hashes)
                .map(|(e, h)| ManifestEntry { id: e.id.clone(), hash: h.clone() })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&manifest)? + "\n")
    }

    /// Adds a ready-made entry. The specification must use the pool kernel
    /// and match the model's input dimension.
    pub fn insert(&mut self, entry: LearnwareEntry) -> Result<&LearnwareEntry> {
        if !valid_id(&entry.id) {
            return Err(Error::input(format!(
                "invalid learnware id `{}` (use letters, digits, '-', '_', '.')",
                entry.id
            )));
        }
        if self.entries.iter().any(|e| e.id == entry.id) {
            return Err(Error::Conflict(entry.id));
        }
        if entry.spec.kernel != self.kernel {
            return Err(Error::Config(format!(
                "specification kernel {:?} differs from pool kernel {:?}",
                entry.spec.kernel, self.kernel
            )));
        }
        if entry.spec.dim() != entry.model.dim {
            return Err(Error::Dimension { expected: entry.model.dim, got: entry.spec.dim() });
        }
        let files = EntryFiles::of(&entry)?;
        let hash = files.hash();
        if let Some(root) = self.root.clone() {
            let _lock = LockGuard::acquire(&root)?;
            let dir = root.join(&entry.id);
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            write(&dir.join("spec.json"), &files.spec)?;
            write(&dir.join("model.json"), &files.model)?;
            write(&dir.join("meta.json"), &files.meta)?;
            self.entries.push(entry);
            self.hashes.push(hash);
            if let Err(e) = write(&root.join(MANIFEST), &self.manifest_json()?) {
                self.entries.pop();
                self.hashes.pop();
                return Err(e);
            }
        } else {
            self.entries.push(entry);
            self.hashes.push(hash);
        }
        Ok(self.entries.last().expect("just pushed"))
    }

    /// Upload phase: builds the reduced specification of `data`, checks that
    /// no raw row leaks into the stored entry, and adds it to the pool. Only
    /// the specification, model reference and metadata are kept.
    pub fn upload(
        &mut self,
        id: &str,
        data: &Dataset,
        model: ModelRef,
        m: usize,
        meta: EntryMeta,
        opts: &ReduceOptions,
    ) -> Result<&LearnwareEntry> {
        if self.entries.iter().any(|e| e.id == id) {
            return Err(Error::Conflict(id.to_string()));
        }
        if data.dim() != model.dim {
            return Err(Error::Dimension { expected: model.dim, got: data.dim() });
        }
        let spec = reduce(&self.kernel, &data.x, m, opts)?;
        check_no_raw_rows(&spec.z, &data.x, "specification")?;
        if let Some(centers) = model.centers()? {
            check_no_raw_rows(&centers, &data.x, "model")?;
        }
        self.insert(LearnwareEntry { id: id.to_string(), spec, model, meta })
    }
}

/// Smoke check that no row of `stored` is an exact copy of a row of `raw`.
pub fn check_no_raw_rows(stored: &Points, raw: &Points, what: &str) -> Result<()> {
    for (i, s) in stored.rows().enumerate() {
        if let Some(j) = raw.rows().position(|r| r == s) {
            return Err(Error::Inaccessible(format!(
                "{what} row {i} is a copy of training row {j}"
            )));
        }
    }
    Ok(())
}
