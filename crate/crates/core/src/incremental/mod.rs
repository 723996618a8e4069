//! Full and incremental snapshot builds, change-restricted archives and the
//! on-disk snapshot store.

mod store;

pub use store::{Lease, LeaseError, Snapshot, SnapshotInfo, SnapshotStore, StoreError, DEFAULT_LEASE_TIMEOUT};

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::extract::{
    assemble, content_hash, count_lines, describe, extract_file, file_node_id, ownership, tier1_schemas, ExtractError, FileFacts,
    Owner, CHANGED_FILE,
};
use crate::facts::{diff_manifests, FactsArchive, FileDelta, FileEntry, Manifest, Relation, Tuple, Value};
use crate::Language;

/// What a build did.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BuildReport {
    pub total_files: usize,
    /// Files handed to the extractor.
    pub extracted: usize,
    /// Files whose rows were copied from the baseline.
    pub carried: usize,
    pub removed: usize,
    /// Set when an incremental build had to fall back to a full one.
    pub fell_back: bool,
    pub elapsed: Duration,
}

static EXTRACTOR_CALLS: AtomicUsize = AtomicUsize::new(0);

/// Number of per-file extractor runs made by builds in this process.
pub fn extractor_calls() -> usize {
    EXTRACTOR_CALLS.load(Ordering::Relaxed)
}

struct Source {
    path: String,
    bytes: Vec<u8>,
}

fn read_sources(worktree: &Path, files: &[String]) -> Result<Vec<Source>, ExtractError> {
    files
        .par_iter()
        .map(|rel| {
            let path = worktree.join(rel);
            let bytes = std::fs::read(&path).map_err(|source| ExtractError::Io { path: path.display().to_string(), source })?;
            Ok(Source { path: rel.clone(), bytes })
        })
        .collect()
}

fn run_extractor(language: Language, sources: &[&Source]) -> Vec<FileFacts> {
    EXTRACTOR_CALLS.fetch_add(sources.len(), Ordering::Relaxed);
    sources.par_iter().map(|s| extract_file(language, &s.path, &s.bytes)).collect()
}

/// Extracts every file of `files` under `worktree`.
pub fn full_build(
    language: Language,
    worktree: &Path,
    files: &[String],
    repo_id: &str,
    commit_id: &str,
) -> Result<(FactsArchive, BuildReport), ExtractError> {
    let start = Instant::now();
    let sources = read_sources(worktree, files)?;
    let refs: Vec<&Source> = sources.iter().collect();
    let blocks = run_extractor(language, &refs);
    let archive = assemble(language, repo_id, commit_id, Vec::new(), blocks, BTreeMap::new())?;
    let report = BuildReport {
        total_files: files.len(),
        extracted: files.len(),
        elapsed: start.elapsed(),
        ..BuildReport::default()
    };
    Ok((archive, report))
}

/// Rebuilds against `baseline`: only added and changed files are
/// extracted; rows of unchanged files are copied over. The result equals
/// a full build of the same worktree.
pub fn incremental_build(
    baseline: FactsArchive,
    worktree: &Path,
    files: &[String],
    commit_id: &str,
) -> Result<(FactsArchive, BuildReport), ExtractError> {
    let start = Instant::now();
    let language = baseline.language();
    let repo_id = baseline.manifest().repo_id.clone();
    let complete = tier1_schemas(language).iter().all(|s| baseline.relation(&s.name).is_some_and(|r| r.schema() == s));
    if !complete {
        log::warn!("baseline {} lacks some relations; running a full extraction", baseline.manifest().commit_id);
        let (a, mut r) = full_build(language, worktree, files, &repo_id, commit_id)?;
        r.fell_back = true;
        r.elapsed = start.elapsed();
        return Ok((a, r));
    }

    let sources = read_sources(worktree, files)?;
    let mut current = Manifest::new(language, repo_id.clone(), commit_id);
    current.files = sources
        .iter()
        .map(|s| FileEntry { path: s.path.clone(), content_hash: content_hash(&s.bytes), line_count: count_lines(&s.bytes) })
        .collect();
    current.files.sort_by(|a, b| a.path.cmp(&b.path));
    let delta = diff_manifests(baseline.manifest(), &current).expect("same language");

    let dirty: HashSet<&String> = delta.dirty().collect();
    let to_extract: Vec<&Source> = sources.iter().filter(|s| dirty.contains(&s.path)).collect();
    let blocks = run_extractor(language, &to_extract);

    // Start from the baseline, drop what changed or removed files owned and
    // add the fresh rows.
    let stale: HashSet<i64> = baseline
        .manifest()
        .files
        .iter()
        .filter(|f| !delta.unchanged.contains(&f.path))
        .map(|f| file_node_id(&f.content_hash, &f.path))
        .collect();
    let drop = owned_rows(&baseline, &stale);
    let (_, mut relations) = baseline.into_parts();
    let tier1: BTreeSet<String> = tier1_schemas(language).iter().map(|s| s.name.clone()).collect();
    relations.retain(|name, _| tier1.contains(name));
    for (name, rows) in drop {
        if let Some(rel) = relations.get_mut(&name) {
            for row in &rows {
                rel.remove(row);
            }
        }
    }
    let mut fresh: BTreeMap<String, Vec<Tuple>> = BTreeMap::new();
    for b in blocks {
        for (rel, rows) in b.rows {
            fresh.entry(rel.to_string()).or_default().extend(rows);
        }
    }
    insert_checked(&mut relations, fresh)?;

    let archive = FactsArchive::new(current, relations.into_values())?;
    let report = BuildReport {
        total_files: files.len(),
        extracted: delta.added.len() + delta.changed.len(),
        carried: delta.unchanged.len(),
        removed: delta.removed.len(),
        fell_back: false,
        elapsed: start.elapsed(),
    };
    Ok((archive, report))
}

/// Adds `rows` to `relations`, refusing a node id that some other row
/// already uses.
fn insert_checked(relations: &mut BTreeMap<String, Relation>, mut rows: BTreeMap<String, Vec<Tuple>>) -> Result<(), ExtractError> {
    let id_relations: Vec<String> =
        relations.values().filter(|r| r.schema().columns[0].name == "id").map(|r| r.name().to_string()).collect();
    let names: Vec<String> = relations.keys().cloned().collect();
    for name in names {
        let has_id = id_relations.contains(&name);
        for row in rows.remove(&name).unwrap_or_default() {
            if has_id {
                for other in &id_relations {
                    if let Some(t) = relations[other].with_first(&row[0]).next() {
                        if *other != name || *t != row {
                            let id = row[0].as_int().unwrap_or_default();
                            return Err(ExtractError::Collision { id, first: describe(other, t), second: describe(&name, &row) });
                        }
                    }
                }
            }
            let rel = relations.get_mut(&name).expect("listed above");
            rel.insert(row).map_err(crate::facts::ArchiveError::Schema)?;
        }
    }
    Ok(())
}

/// Rows of `archive` owned by the files with ids in `files`, per relation.
fn owned_rows(archive: &FactsArchive, files: &HashSet<i64>) -> BTreeMap<String, Vec<Tuple>> {
    let mut ids: HashSet<i64> = HashSet::new();
    let mut out = BTreeMap::new();
    for (name, rule) in ownership(archive.language()) {
        let Some(rel) = archive.relation(name) else { continue };
        let has_id = rel.schema().columns.first().is_some_and(|c| c.name == "id");
        let mut rows = Vec::new();
        for row in rel.iter() {
            let owned = match rule {
                Owner::File(c) => row[c].as_int().is_some_and(|f| files.contains(&f)),
                Owner::Via(c) => row[c].as_int().is_some_and(|i| ids.contains(&i)),
            };
            if owned {
                if let (true, Some(id)) = (has_id, row[0].as_int()) {
                    ids.insert(id);
                }
                rows.push(row.clone());
            }
        }
        out.insert(name.to_string(), rows);
    }
    out
}

/// The file-level difference between two snapshots' manifests.
pub fn delta(baseline: &Manifest, current: &Manifest) -> FileDelta {
    diff_manifests(baseline, current).unwrap_or_else(|_| FileDelta {
        added: current.files.iter().map(|f| f.path.clone()).collect(),
        removed: baseline.files.iter().map(|f| f.path.clone()).collect(),
        changed: BTreeSet::new(),
        unchanged: BTreeSet::new(),
    })
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("not in the snapshot: {}", .0.join(", "))]
pub struct UnknownPaths(pub Vec<String>);

/// The part of `archive` owned by `changed` files, plus a `changed_file`
/// relation naming them.
pub fn restrict_to_changed(archive: &FactsArchive, changed: &BTreeSet<String>) -> Result<FactsArchive, UnknownPaths> {
    let manifest = archive.manifest();
    let unknown: Vec<String> = changed.iter().filter(|p| manifest.file(p).is_none()).cloned().collect();
    if !unknown.is_empty() {
        return Err(UnknownPaths(unknown));
    }
    let entries: Vec<FileEntry> = manifest.files.iter().filter(|f| changed.contains(&f.path)).cloned().collect();
    let ids: HashSet<i64> = entries.iter().map(|f| file_node_id(&f.content_hash, &f.path)).collect();
    let mut rows = owned_rows(archive, &ids);
    let mut relations = Vec::new();
    for (name, rel) in archive.relations() {
        let kept = rows.remove(name).unwrap_or_default();
        relations.push(Relation::from_tuples(rel.schema().clone(), kept).expect("rows come from a relation of this schema"));
    }
    let mut ids: Vec<i64> = ids.into_iter().collect();
    ids.sort_unstable();
    let changed_rel =
        Relation::from_tuples(crate::extract::changed_file_schema(), ids.into_iter().map(|i| vec![Value::Int(i)]))
            .expect("schema matches");
    debug_assert_eq!(changed_rel.name(), CHANGED_FILE);
    relations.push(changed_rel);
    let mut m = Manifest::new(manifest.subject_language, manifest.repo_id.clone(), manifest.commit_id.clone());
    m.files = entries;
    Ok(FactsArchive::new(m, relations).expect("subset of a valid archive"))
}
