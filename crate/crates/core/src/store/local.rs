//! Filesystem backend.
//!
//! Layout under the data directory:
//!
//! ```text
//! docs/{collection}/{id}.json      one document per file
//! docs/{collection}/.lock          cross-process collection lock
//! blobs/objects/{key}              finalized blob bytes
//! blobs/refs/{key}.json            BlobRef for each finalized blob
//! blobs/staging/{key}/{index}.chunk
//! ```
//!
//! Every file is written to a temporary sibling, synced, then renamed into
//! place, so readers see either the old or the new contents.

use std::collections::{BTreeSet, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use super::{check_key, digest, Backend, BlobRef, Result, StoreError};

#[derive(Debug)]
pub struct LocalBackend {
    root: PathBuf,
    blob_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

fn check_segment(kind: &str, s: &str) -> Result<()> {
    if s.contains('/') {
        return Err(StoreError::BadKey(format!("{kind} {s}")));
    }
    check_key(s)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().expect("file paths have parents");
    fs::create_dir_all(dir).map_err(StoreError::io(format!("create {}", dir.display())))?;
    let tmp = dir.join(format!(
        ".tmp-{}-{}",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("doc"),
        uuid::Uuid::new_v4().simple()
    ));
    let write = || -> std::io::Result<()> {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)?;
        // Persist the rename itself.
        File::open(dir)?.sync_all()
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        StoreError::Io {
            context: format!("write {}", path.display()),
            source: e,
        }
    })
}

fn read_opt(path: &Path) -> Result<Option<Vec<u8>>> {
    match fs::read(path) {
        Ok(b) => Ok(Some(b)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(StoreError::Io {
            context: format!("read {}", path.display()),
            source: e,
        }),
    }
}

impl LocalBackend {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        for sub in ["docs", "blobs/objects", "blobs/refs", "blobs/staging"] {
            let dir = root.join(sub);
            fs::create_dir_all(&dir)
                .map_err(StoreError::io(format!("create {}", dir.display())))?;
        }
        Ok(LocalBackend {
            root,
            blob_locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn doc_path(&self, collection: &str, id: &str) -> Result<PathBuf> {
        check_segment("collection", collection)?;
        check_segment("id", id)?;
        Ok(self
            .root
            .join("docs")
            .join(collection)
            .join(format!("{id}.json")))
    }

    fn object_path(&self, key: &str) -> PathBuf {
        self.root.join("blobs/objects").join(key)
    }

    fn ref_path(&self, key: &str) -> PathBuf {
        self.root.join("blobs/refs").join(format!("{key}.json"))
    }

    fn staging_dir(&self, key: &str) -> PathBuf {
        self.root.join("blobs/staging").join(key)
    }

    fn blob_lock(&self, key: &str) -> Arc<Mutex<()>> {
        self.blob_locks
            .lock()
            .expect("blob lock map")
            .entry(key.to_owned())
            .or_default()
            .clone()
    }

    fn staged_indices(&self, key: &str) -> Result<BTreeSet<u32>> {
        let dir = self.staging_dir(key);
        let entries = match fs::read_dir(&dir) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(BTreeSet::new()),
            Err(e) => {
                return Err(StoreError::Io {
                    context: format!("list {}", dir.display()),
                    source: e,
                })
            }
        };
        let mut out = BTreeSet::new();
        for entry in entries {
            let entry = entry.map_err(StoreError::io(format!("list {}", dir.display())))?;
            let name = entry.file_name();
            if let Some(idx) = name
                .to_str()
                .and_then(|n| n.strip_suffix(".chunk"))
                .and_then(|n| n.parse().ok())
            {
                out.insert(idx);
            }
        }
        Ok(out)
    }

    fn read_ref(&self, key: &str) -> Result<Option<BlobRef>> {
        read_opt(&self.ref_path(key))?
            .map(|b| serde_json::from_slice(&b).map_err(|e| StoreError::Corrupt(key.to_owned(), e)))
            .transpose()
    }

    fn write_blob(&self, key: &str, bytes: &[u8]) -> Result<BlobRef> {
        let blob = BlobRef {
            key: key.to_owned(),
            size_bytes: bytes.len() as u64,
            content_hash: digest(bytes),
        };
        write_atomic(&self.object_path(key), bytes)?;
        write_atomic(
            &self.ref_path(key),
            &serde_json::to_vec_pretty(&blob).expect("serializable"),
        )?;
        Ok(blob)
    }
}

impl Backend for LocalBackend {
    fn put_raw(&self, collection: &str, id: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.doc_path(collection, id)?, bytes)
    }

    fn get_raw(&self, collection: &str, id: &str) -> Result<Vec<u8>> {
        read_opt(&self.doc_path(collection, id)?)?.ok_or_else(|| StoreError::NotFound {
            collection: collection.to_owned(),
            id: id.to_owned(),
        })
    }

    fn list_raw(&self, collection: &str) -> Result<Vec<(String, Vec<u8>)>> {
        check_segment("collection", collection)?;
        let dir = self.root.join("docs").join(collection);
        let entries = match fs::read_dir(&dir) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => {
                return Err(StoreError::Io {
                    context: format!("list {}", dir.display()),
                    source: e,
                })
            }
        };
        let mut ids = Vec::new();
        for entry in entries {
            let entry = entry.map_err(StoreError::io(format!("list {}", dir.display())))?;
            if let Some(id) = entry
                .file_name()
                .to_str()
                .filter(|n| !n.starts_with('.'))
                .and_then(|n| n.strip_suffix(".json"))
            {
                ids.push(id.to_owned());
            }
        }
        ids.sort();
        let mut out = Vec::with_capacity(ids.len());
        for id in ids {
            // A concurrent writer only ever renames, so a listed doc stays readable.
            if let Some(bytes) = read_opt(&dir.join(format!("{id}.json")))? {
                out.push((id, bytes));
            }
        }
        Ok(out)
    }

    fn locked(&self, collection: &str, f: &mut dyn FnMut() -> Result<()>) -> Result<()> {
        check_segment("collection", collection)?;
        let dir = self.root.join("docs").join(collection);
        fs::create_dir_all(&dir).map_err(StoreError::io(format!("create {}", dir.display())))?;
        let lock_path = dir.join(".lock");
        let file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&lock_path)
            .map_err(StoreError::io(format!("open {}", lock_path.display())))?;
        // flock(2): exclusive across processes and across separate opens in
        // this process.
        file.lock()
            .map_err(StoreError::io(format!("lock {}", lock_path.display())))?;
        let result = f();
        let _ = file.unlock();
        result
    }

    fn put_chunk(&self, key: &str, index: u32, bytes: &[u8]) -> Result<()> {
        let lock = self.blob_lock(key);
        let _guard = lock.lock().expect("blob lock");
        if self.read_ref(key)?.is_some() {
            return Err(StoreError::AlreadyFinalized(key.to_owned()));
        }
        let path = self.staging_dir(key).join(format!("{index}.chunk"));
        match read_opt(&path)? {
            Some(existing) if existing == bytes => Ok(()),
            Some(_) => Err(StoreError::DuplicateChunk {
                key: key.to_owned(),
                index,
            }),
            None => write_atomic(&path, bytes),
        }
    }

    fn finalize_blob(&self, key: &str, total: u32) -> Result<BlobRef> {
        let lock = self.blob_lock(key);
        let _guard = lock.lock().expect("blob lock");
        if let Some(existing) = self.read_ref(key)? {
            return Ok(existing);
        }
        let staged = self.staged_indices(key)?;
        if let Some(missing) = (0..total).find(|i| !staged.contains(i)) {
            return Err(StoreError::MissingChunk {
                key: key.to_owned(),
                index: missing,
            });
        }
        if let Some(&extra) = staged.range(total..).next() {
            return Err(StoreError::ExtraChunk {
                key: key.to_owned(),
                index: extra,
                total,
            });
        }
        let dir = self.staging_dir(key);
        let mut bytes = Vec::new();
        for i in 0..total {
            let path = dir.join(format!("{i}.chunk"));
            bytes.extend(
                fs::read(&path).map_err(StoreError::io(format!("read {}", path.display())))?,
            );
        }
        let blob = self.write_blob(key, &bytes)?;
        let _ = fs::remove_dir_all(&dir);
        Ok(blob)
    }

    fn put_blob(&self, key: &str, bytes: &[u8]) -> Result<BlobRef> {
        let lock = self.blob_lock(key);
        let _guard = lock.lock().expect("blob lock");
        self.write_blob(key, bytes)
    }

    fn get_blob(&self, key: &str) -> Result<Vec<u8>> {
        if self.read_ref(key)?.is_none() {
            if self.staging_dir(key).exists() {
                return Err(StoreError::NotFinalized(key.to_owned()));
            }
            return Err(StoreError::NotFound {
                collection: "blobs".into(),
                id: key.to_owned(),
            });
        }
        let path = self.object_path(key);
        fs::read(&path).map_err(StoreError::io(format!("read {}", path.display())))
    }

    fn blob_ref(&self, key: &str) -> Result<Option<BlobRef>> {
        self.read_ref(key)
    }
}
