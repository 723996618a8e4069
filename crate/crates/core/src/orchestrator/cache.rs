use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::facts::FactsArchive;
use crate::godel::library_hash;
use crate::query::{PreparedQuery, QueryOutput};
use crate::ENGINE_VERSION;

/// Content address of a query result: engine version, library, script and
/// the digests of exactly the relations the pruned plan reads.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CacheKey(String);

impl CacheKey {
    pub fn compute(query: &PreparedQuery, archive: &FactsArchive) -> CacheKey {
        let mut h = Sha256::new();
        let mut field = |s: &str| {
            h.update(s.as_bytes());
            h.update([0]);
        };
        field(ENGINE_VERSION);
        field(query.compiled.language.name());
        field(&library_hash(query.compiled.language));
        field(&query.compiled.source_hash);
        for name in query.inputs() {
            field(&name);
            field(archive.relation_digest(&name).as_deref().unwrap_or("-"));
        }
        CacheKey(hex::encode(h.finalize()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    fn valid(&self) -> bool {
        self.0.len() == 64 && self.0.bytes().all(|b| b.is_ascii_hexdigit())
    }
}

impl fmt::Display for CacheKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Serialize, Deserialize)]
struct Entry {
    key: CacheKey,
    output: QueryOutput,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct IndexEntry {
    bytes: u64,
    last_used: u64,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct Index {
    tick: u64,
    entries: BTreeMap<CacheKey, IndexEntry>,
}

/// On-disk result cache, one JSON file per key, evicted least recently
/// used first once the byte budget is exceeded.
#[derive(Debug)]
pub struct ResultCache {
    dir: PathBuf,
    budget: u64,
    index: Index,
}

impl ResultCache {
    pub fn open(dir: impl Into<PathBuf>, budget: u64) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        let index = match fs::read(dir.join("index.json")) {
            Ok(bytes) => serde_json::from_slice(&bytes).unwrap_or_else(|e| {
                log::warn!("result cache index unreadable ({e}); rebuilding");
                Index::default()
            }),
            Err(_) => Index::default(),
        };
        let mut cache = ResultCache { dir, budget, index };
        cache.index.entries.retain(|k, _| k.valid());
        Ok(cache)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn entry_path(&self, key: &CacheKey) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn len(&self) -> usize {
        self.index.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.entries.is_empty()
    }

    pub fn total_bytes(&self) -> u64 {
        self.index.entries.values().map(|e| e.bytes).sum()
    }

    pub fn contains(&self, key: &CacheKey) -> bool {
        self.index.entries.contains_key(key)
    }

    fn touch(&mut self, key: &CacheKey, bytes: u64) {
        self.index.tick += 1;
        self.index.entries.insert(key.clone(), IndexEntry { bytes, last_used: self.index.tick });
    }

    /// The stored result for `key`. Unreadable entries are dropped and
    /// reported as a miss.
    pub fn lookup(&mut self, key: &CacheKey) -> Option<QueryOutput> {
        if !key.valid() {
            return None;
        }
        let path = self.entry_path(key);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(_) => {
                if self.index.entries.remove(key).is_some() {
                    self.persist();
                }
                return None;
            }
        };
        match serde_json::from_slice::<Entry>(&bytes) {
            Ok(e) if &e.key == key => {
                self.touch(key, bytes.len() as u64);
                self.persist();
                Some(e.output)
            }
            _ => {
                log::warn!("dropping corrupt cache entry {key}");
                let _ = fs::remove_file(&path);
                self.index.entries.remove(key);
                self.persist();
                None
            }
        }
    }

    /// Stores `output` under `key`, then evicts old entries until the
    /// cache fits its budget. Storing an existing key rewrites the same
    /// bytes.
    pub fn store(&mut self, key: &CacheKey, output: &QueryOutput) -> io::Result<()> {
        let bytes = serde_json::to_vec(&Entry { key: key.clone(), output: output.clone() }).expect("results serialize");
        let path = self.entry_path(key);
        let tmp = self.dir.join(format!("{key}.tmp-{}", std::process::id()));
        fs::write(&tmp, &bytes)?;
        fs::rename(&tmp, &path)?;
        self.touch(key, bytes.len() as u64);
        self.evict(key);
        self.persist();
        Ok(())
    }

    fn evict(&mut self, keep: &CacheKey) {
        while self.total_bytes() > self.budget {
            let victim = self
                .index
                .entries
                .iter()
                .filter(|(k, _)| *k != keep)
                .min_by_key(|(_, e)| e.last_used)
                .map(|(k, _)| k.clone());
            let Some(victim) = victim else { break };
            log::debug!("evicting cache entry {victim}");
            let _ = fs::remove_file(self.entry_path(&victim));
            self.index.entries.remove(&victim);
        }
    }

    fn persist(&self) {
        let tmp = self.dir.join(format!("index.json.tmp-{}", std::process::id()));
        let bytes = serde_json::to_vec(&self.index).expect("index serializes");
        if let Err(e) = fs::write(&tmp, bytes).and_then(|_| fs::rename(&tmp, self.dir.join("index.json"))) {
            log::warn!("cannot write result cache index: {e}");
        }
    }
}
