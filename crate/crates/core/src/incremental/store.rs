use std::collections::BTreeSet;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::{full_build, incremental_build, BuildReport};
use crate::extract::{scan_worktree, ExtractError};
use crate::facts::{read_archive, read_manifest, write_archive, ArchiveError, FactsArchive, Manifest};
use crate::Language;

pub const DEFAULT_LEASE_TIMEOUT: Duration = Duration::from_secs(3600);

const INFO_FILE: &str = "snapshot.json";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Archive(#[from] ArchiveError),
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error(transparent)]
    Busy(#[from] LeaseError),
    #[error("no snapshot for {repo}/{language}/{commit}")]
    Missing { repo: String, language: Language, commit: String },
    #[error("invalid {what} `{value}`: must be non-empty and free of path separators")]
    BadKey { what: &'static str, value: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("extraction of {key} is already running (held by pid {holder})")]
pub struct LeaseError {
    pub key: String,
    pub holder: String,
}

/// Exclusive right to build one (repo, language, commit). Released on drop.
#[derive(Debug)]
pub struct Lease {
    path: PathBuf,
    key: String,
}

impl Lease {
    pub fn key(&self) -> &str {
        &self.key
    }
}

impl Drop for Lease {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Metadata stored next to each snapshot's archive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotInfo {
    pub repo_id: String,
    pub language: Language,
    pub commit_id: String,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
    pub baseline_commit: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub info: SnapshotInfo,
    pub path: PathBuf,
    pub archive: FactsArchive,
}

/// Snapshots laid out as `<root>/<repo>/<language>/<commit>/`, with lock
/// files under `<root>/leases/`.
#[derive(Debug, Clone)]
pub struct SnapshotStore {
    root: PathBuf,
    lease_timeout: Duration,
}

fn now_secs() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn check_key(what: &'static str, value: &str) -> Result<(), StoreError> {
    let bad = value.is_empty() || value == "." || value == ".." || value.contains(['/', '\\']) || value == "leases";
    if bad {
        return Err(StoreError::BadKey { what, value: value.to_string() });
    }
    Ok(())
}

impl SnapshotStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(root.join("leases")).map_err(io_err(&root))?;
        Ok(SnapshotStore { root, lease_timeout: DEFAULT_LEASE_TIMEOUT })
    }

    pub fn with_lease_timeout(mut self, timeout: Duration) -> Self {
        self.lease_timeout = timeout;
        self
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn snapshot_dir(&self, repo: &str, language: Language, commit: &str) -> PathBuf {
        self.root.join(repo).join(language.name()).join(commit)
    }

    pub fn contains(&self, repo: &str, language: Language, commit: &str) -> bool {
        self.snapshot_dir(repo, language, commit).join(crate::facts::MANIFEST_FILE).is_file()
    }

    pub fn manifest(&self, repo: &str, language: Language, commit: &str) -> Result<Manifest, StoreError> {
        if !self.contains(repo, language, commit) {
            return Err(self.missing(repo, language, commit));
        }
        Ok(read_manifest(&self.snapshot_dir(repo, language, commit))?)
    }

    fn missing(&self, repo: &str, language: Language, commit: &str) -> StoreError {
        StoreError::Missing { repo: repo.into(), language, commit: commit.into() }
    }

    pub fn load(&self, repo: &str, language: Language, commit: &str) -> Result<Snapshot, StoreError> {
        if !self.contains(repo, language, commit) {
            return Err(self.missing(repo, language, commit));
        }
        let path = self.snapshot_dir(repo, language, commit);
        let archive = read_archive(&path)?;
        let info_path = path.join(INFO_FILE);
        let info = match fs::read(&info_path) {
            Ok(bytes) => serde_json::from_slice(&bytes).ok(),
            Err(_) => None,
        }
        .unwrap_or_else(|| SnapshotInfo {
            repo_id: repo.into(),
            language,
            commit_id: commit.into(),
            created_at: 0,
            baseline_commit: None,
        });
        Ok(Snapshot { info, path, archive })
    }

    fn lease_path(&self, key: &str) -> PathBuf {
        self.root.join("leases").join(format!("{key}.lock"))
    }

    /// Takes the build lease for (repo, language, commit). A lease older
    /// than the store's timeout is considered abandoned and taken over.
    pub fn acquire(&self, repo: &str, language: Language, commit: &str) -> Result<Lease, StoreError> {
        check_key("repository id", repo)?;
        check_key("commit id", commit)?;
        let key = format!("{repo}@{}@{commit}", language.name());
        let path = self.lease_path(&key);
        for attempt in 0..2 {
            match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(mut f) => {
                    let body = format!("pid={}\nacquired={}\n", std::process::id(), now_secs());
                    f.write_all(body.as_bytes()).map_err(io_err(&path))?;
                    return Ok(Lease { path, key });
                }
                Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                    let (holder, acquired) = read_lease(&path);
                    let stale = acquired.is_some_and(|t| now_secs().saturating_sub(t) > self.lease_timeout.as_secs());
                    if stale && attempt == 0 {
                        log::warn!("taking over stale lease {key} held by pid {holder}");
                        let _ = fs::remove_file(&path);
                        continue;
                    }
                    return Err(LeaseError { key, holder }.into());
                }
                Err(e) => return Err(StoreError::Io { path, source: e }),
            }
        }
        let (holder, _) = read_lease(&path);
        Err(LeaseError { key, holder }.into())
    }

    /// Writes `archive` as a snapshot. The archive is staged in a sibling
    /// directory and renamed into place.
    pub fn save(&self, archive: &FactsArchive, baseline: Option<&str>) -> Result<Snapshot, StoreError> {
        let m = archive.manifest();
        check_key("repository id", &m.repo_id)?;
        check_key("commit id", &m.commit_id)?;
        let dir = self.snapshot_dir(&m.repo_id, m.subject_language, &m.commit_id);
        let parent = dir.parent().expect("snapshot dirs are nested");
        fs::create_dir_all(parent).map_err(io_err(parent))?;
        let staging = parent.join(format!(".{}.tmp-{}", m.commit_id, std::process::id()));
        if staging.exists() {
            fs::remove_dir_all(&staging).map_err(io_err(&staging))?;
        }
        write_archive(archive, &staging)?;
        let info = SnapshotInfo {
            repo_id: m.repo_id.clone(),
            language: m.subject_language,
            commit_id: m.commit_id.clone(),
            created_at: now_secs(),
            baseline_commit: baseline.map(str::to_string),
        };
        let info_path = staging.join(INFO_FILE);
        let json = serde_json::to_vec_pretty(&info).expect("info serializes");
        fs::write(&info_path, json).map_err(io_err(&info_path))?;
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(io_err(&dir))?;
        }
        fs::rename(&staging, &dir).map_err(io_err(&dir))?;
        Ok(Snapshot { info, path: dir, archive: archive.clone() })
    }

    /// Extracts every matching file under `worktree` into a new snapshot.
    pub fn full_extract(
        &self,
        worktree: &Path,
        repo: &str,
        commit: &str,
        language: Language,
    ) -> Result<(Snapshot, BuildReport), StoreError> {
        let _lease = self.acquire(repo, language, commit)?;
        let (root, files) = scan_worktree(worktree, language)?;
        let (archive, report) = full_build(language, &root, &files, repo, commit)?;
        Ok((self.save(&archive, None)?, report))
    }

    /// Builds a snapshot from the baseline snapshot `baseline_commit`,
    /// extracting only what changed. A missing or unreadable baseline
    /// falls back to a full extraction.
    pub fn incremental_extract(
        &self,
        baseline_commit: &str,
        worktree: &Path,
        repo: &str,
        commit: &str,
        language: Language,
    ) -> Result<(Snapshot, BuildReport), StoreError> {
        let _lease = self.acquire(repo, language, commit)?;
        let (root, files) = scan_worktree(worktree, language)?;
        let baseline = match self.load(repo, language, baseline_commit) {
            Ok(s) => Some(s),
            Err(e) => {
                log::warn!("baseline {baseline_commit} unusable ({e}); running a full extraction");
                None
            }
        };
        let base = baseline.as_ref().map(|_| baseline_commit);
        let (archive, report) = match baseline {
            Some(b) => incremental_build(b.archive, &root, &files, commit)?,
            None => {
                let (a, mut r) = full_build(language, &root, &files, repo, commit)?;
                r.fell_back = true;
                (a, r)
            }
        };
        Ok((self.save(&archive, base)?, report))
    }

    /// Every snapshot in the store, sorted by (repo, language, commit).
    pub fn list(&self) -> Result<Vec<SnapshotInfo>, StoreError> {
        let mut out = Vec::new();
        for repo in subdirs(&self.root)? {
            if repo == "leases" {
                continue;
            }
            for lang in subdirs(&self.root.join(&repo))? {
                let Ok(language) = lang.parse::<Language>() else { continue };
                for commit in subdirs(&self.root.join(&repo).join(&lang))? {
                    if self.contains(&repo, language, &commit) {
                        out.push(self.load(&repo, language, &commit)?.info);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Deletes the snapshots of `repo` whose commit is not in `keep`,
    /// along with stale leases and abandoned staging directories.
    /// Returns the removed snapshots.
    pub fn gc(&self, repo: &str, keep: &BTreeSet<String>) -> Result<Vec<SnapshotInfo>, StoreError> {
        let mut removed = Vec::new();
        for info in self.list()? {
            if info.repo_id == repo && !keep.contains(&info.commit_id) {
                let dir = self.snapshot_dir(repo, info.language, &info.commit_id);
                fs::remove_dir_all(&dir).map_err(io_err(&dir))?;
                removed.push(info);
            }
        }
        let repo_dir = self.root.join(repo);
        if repo_dir.is_dir() {
            for lang in subdirs(&repo_dir)? {
                let dir = repo_dir.join(&lang);
                for entry in subdirs(&dir)? {
                    if entry.starts_with('.') && entry.contains(".tmp-") {
                        let p = dir.join(&entry);
                        fs::remove_dir_all(&p).map_err(io_err(&p))?;
                    }
                }
            }
        }
        let leases = self.root.join("leases");
        for entry in fs::read_dir(&leases).map_err(io_err(&leases))? {
            let path = entry.map_err(io_err(&leases))?.path();
            let (_, acquired) = read_lease(&path);
            if acquired.is_some_and(|t| now_secs().saturating_sub(t) > self.lease_timeout.as_secs()) {
                let _ = fs::remove_file(&path);
            }
        }
        Ok(removed)
    }
}

fn subdirs(dir: &Path) -> Result<Vec<String>, StoreError> {
    let mut out = Vec::new();
    if !dir.is_dir() {
        return Ok(out);
    }
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        if entry.file_type().map_err(io_err(dir))?.is_dir() {
            out.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    out.sort();
    Ok(out)
}

fn read_lease(path: &Path) -> (String, Option<u64>) {
    let text = fs::read_to_string(path).unwrap_or_default();
    let field = |k: &str| text.lines().find_map(|l| l.strip_prefix(k)).map(str::trim).map(str::to_string);
    let holder = field("pid=").unwrap_or_else(|| "?".into());
    (holder, field("acquired=").and_then(|t| t.parse().ok()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leases_exclude_same_key_only() {
        let dir = tempfile::tempdir().unwrap();
        let store = SnapshotStore::open(dir.path()).unwrap();
        let a = store.acquire("r", Language::Python, "c1").unwrap();
        assert!(matches!(store.acquire("r", Language::Python, "c1"), Err(StoreError::Busy(_))));
        let b = store.acquire("r", Language::Python, "c2").unwrap();
        drop(a);
        let _again = store.acquire("r", Language::Python, "c1").unwrap();
        drop(b);
    }

    #[test]
    fn stale_lease_is_taken_over() {
        let dir = tempfile::tempdir().unwrap();
        let store = SnapshotStore::open(dir.path()).unwrap().with_lease_timeout(Duration::from_secs(10));
        let path = store.lease_path("r@python@c");
        fs::write(&path, format!("pid=1\nacquired={}\n", now_secs() - 100)).unwrap();
        assert!(store.acquire("r", Language::Python, "c").is_ok());
    }

    #[test]
    fn keys_may_not_escape_the_store() {
        let dir = tempfile::tempdir().unwrap();
        let store = SnapshotStore::open(dir.path()).unwrap();
        assert!(matches!(store.acquire("../x", Language::Xml, "c"), Err(StoreError::BadKey { .. })));
    }

    #[test]
    fn save_load_and_gc() {
        let dir = tempfile::tempdir().unwrap();
        let store = SnapshotStore::open(dir.path().join("store")).unwrap();
        let work = dir.path().join("w");
        fs::create_dir_all(&work).unwrap();
        fs::write(work.join("a.xml"), "<a><b/></a>").unwrap();
        let (s1, r1) = store.full_extract(&work, "r", "c1", Language::Xml).unwrap();
        assert_eq!(r1.extracted, 1);
        let (s2, r2) = store.incremental_extract("c1", &work, "r", "c2", Language::Xml).unwrap();
        assert_eq!((r2.extracted, r2.carried), (0, 1));
        assert_eq!(s2.info.baseline_commit.as_deref(), Some("c1"));
        assert_eq!(s1.archive.relations(), s2.archive.relations());
        assert_eq!(store.load("r", Language::Xml, "c2").unwrap().archive, s2.archive);
        assert_eq!(store.list().unwrap().len(), 2);
        let removed = store.gc("r", &BTreeSet::from(["c2".to_string()])).unwrap();
        assert_eq!(removed.len(), 1);
        assert!(!store.contains("r", Language::Xml, "c1"));
        assert!(store.contains("r", Language::Xml, "c2"));
    }
}
