//! In-process backend. Nothing survives the process.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use super::{digest, Backend, BlobRef, Result, StoreError};

#[derive(Debug, Default)]
pub struct MemoryBackend {
    docs: Mutex<BTreeMap<(String, String), Vec<u8>>>,
    collection_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    blobs: Mutex<Blobs>,
}

#[derive(Debug, Default)]
struct Blobs {
    staged: HashMap<String, BTreeMap<u32, Vec<u8>>>,
    finalized: HashMap<String, (BlobRef, Vec<u8>)>,
}

impl Blobs {
    fn finish(&mut self, key: &str, bytes: Vec<u8>) -> BlobRef {
        let blob = BlobRef {
            key: key.to_owned(),
            size_bytes: bytes.len() as u64,
            content_hash: digest(&bytes),
        };
        self.staged.remove(key);
        self.finalized.insert(key.to_owned(), (blob.clone(), bytes));
        blob
    }
}

impl Backend for MemoryBackend {
    fn put_raw(&self, collection: &str, id: &str, bytes: &[u8]) -> Result<()> {
        self.docs
            .lock()
            .unwrap()
            .insert((collection.to_owned(), id.to_owned()), bytes.to_vec());
        Ok(())
    }

    fn get_raw(&self, collection: &str, id: &str) -> Result<Vec<u8>> {
        self.docs
            .lock()
            .unwrap()
            .get(&(collection.to_owned(), id.to_owned()))
            .cloned()
            .ok_or_else(|| StoreError::NotFound {
                collection: collection.to_owned(),
                id: id.to_owned(),
            })
    }

    fn list_raw(&self, collection: &str) -> Result<Vec<(String, Vec<u8>)>> {
        Ok(self
            .docs
            .lock()
            .unwrap()
            .iter()
            .filter(|((c, _), _)| c == collection)
            .map(|((_, id), b)| (id.clone(), b.clone()))
            .collect())
    }

    fn locked(&self, collection: &str, f: &mut dyn FnMut() -> Result<()>) -> Result<()> {
        let lock = self
            .collection_locks
            .lock()
            .unwrap()
            .entry(collection.to_owned())
            .or_default()
            .clone();
        let _guard = lock.lock().unwrap();
        f()
    }

    fn put_chunk(&self, key: &str, index: u32, bytes: &[u8]) -> Result<()> {
        let mut blobs = self.blobs.lock().unwrap();
        if blobs.finalized.contains_key(key) {
            return Err(StoreError::AlreadyFinalized(key.to_owned()));
        }
        let chunks = blobs.staged.entry(key.to_owned()).or_default();
        match chunks.get(&index) {
            Some(existing) if existing == bytes => Ok(()),
            Some(_) => Err(StoreError::DuplicateChunk {
                key: key.to_owned(),
                index,
            }),
            None => {
                chunks.insert(index, bytes.to_vec());
                Ok(())
            }
        }
    }

    fn finalize_blob(&self, key: &str, total: u32) -> Result<BlobRef> {
        let mut blobs = self.blobs.lock().unwrap();
        if let Some((blob, _)) = blobs.finalized.get(key) {
            return Ok(blob.clone());
        }
        let empty = BTreeMap::new();
        let chunks = blobs.staged.get(key).unwrap_or(&empty);
        if let Some(missing) = (0..total).find(|i| !chunks.contains_key(i)) {
            return Err(StoreError::MissingChunk {
                key: key.to_owned(),
                index: missing,
            });
        }
        if let Some((&extra, _)) = chunks.range(total..).next() {
            return Err(StoreError::ExtraChunk {
                key: key.to_owned(),
                index: extra,
                total,
            });
        }
        let bytes: Vec<u8> = chunks.values().flatten().copied().collect();
        Ok(blobs.finish(key, bytes))
    }

    fn put_blob(&self, key: &str, bytes: &[u8]) -> Result<BlobRef> {
        Ok(self.blobs.lock().unwrap().finish(key, bytes.to_vec()))
    }

    fn get_blob(&self, key: &str) -> Result<Vec<u8>> {
        let blobs = self.blobs.lock().unwrap();
        if let Some((_, bytes)) = blobs.finalized.get(key) {
            return Ok(bytes.clone());
        }
        if blobs.staged.contains_key(key) {
            return Err(StoreError::NotFinalized(key.to_owned()));
        }
        Err(StoreError::NotFound {
            collection: "blobs".into(),
            id: key.to_owned(),
        })
    }

    fn blob_ref(&self, key: &str) -> Result<Option<BlobRef>> {
        Ok(self
            .blobs
            .lock()
            .unwrap()
            .finalized
            .get(key)
            .map(|(b, _)| b.clone()))
    }
}
