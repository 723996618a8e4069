use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{escape_str, unescape_str, Column, ColumnType, Interner, Relation, RelationSchema, SchemaError, Value};
use crate::Language;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub content_hash: String,
    pub line_count: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationEntry {
    pub name: String,
    pub arity: usize,
    pub columns: Vec<String>,
    pub types: Vec<ColumnType>,
    pub key_len: usize,
    pub row_count: usize,
}

impl RelationEntry {
    fn for_relation(rel: &Relation) -> Self {
        let schema = rel.schema();
        RelationEntry {
            name: schema.name.clone(),
            arity: schema.arity(),
            columns: schema.column_names(),
            types: schema.column_types(),
            key_len: schema.key_len,
            row_count: rel.len(),
        }
    }

    fn schema(&self) -> Result<RelationSchema, ArchiveError> {
        if self.columns.len() != self.arity || self.types.len() != self.arity {
            return Err(ArchiveError::Invariant(format!(
                "manifest entry for `{}` lists {} columns and {} types for arity {}",
                self.name,
                self.columns.len(),
                self.types.len(),
                self.arity
            )));
        }
        let columns = self.columns.iter().zip(&self.types).map(|(n, t)| Column::new(n.clone(), *t)).collect();
        Ok(RelationSchema::new(self.name.clone(), columns, self.key_len)?)
    }
}

/// Archive metadata. Field order here is the serialized key order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub subject_language: Language,
    pub repo_id: String,
    pub commit_id: String,
    pub files: Vec<FileEntry>,
    pub relations: Vec<RelationEntry>,
}

impl Manifest {
    pub fn new(language: Language, repo_id: impl Into<String>, commit_id: impl Into<String>) -> Self {
        Manifest {
            format_version: FORMAT_VERSION,
            subject_language: language,
            repo_id: repo_id.into(),
            commit_id: commit_id.into(),
            files: Vec::new(),
            relations: Vec::new(),
        }
    }

    pub fn file(&self, path: &str) -> Option<&FileEntry> {
        self.files.binary_search_by(|f| f.path.as_str().cmp(path)).ok().map(|i| &self.files[i])
    }

    pub fn total_lines(&self) -> i64 {
        self.files.iter().map(|f| f.line_count).sum()
    }

    pub fn row_count(&self, relation: &str) -> Option<usize> {
        self.relations.iter().find(|r| r.name == relation).map(|r| r.row_count)
    }

    pub fn check_files(&self) -> Result<(), ArchiveError> {
        for pair in self.files.windows(2) {
            if pair[0].path >= pair[1].path {
                return Err(ArchiveError::Invariant(format!(
                    "file paths must be unique and sorted: `{}` before `{}`",
                    pair[0].path, pair[1].path
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ArchiveError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("missing manifest: {0}")]
    MissingManifest(PathBuf),
    #[error("malformed manifest {path}: {source}")]
    ManifestJson { path: PathBuf, source: serde_json::Error },
    #[error("relation `{relation}`: manifest claims {expected} rows but file has {found}")]
    RowCount { relation: String, expected: usize, found: usize },
    #[error("relation `{relation}` line {line}: malformed escape sequence")]
    Escape { relation: String, line: usize },
    #[error("relation `{relation}` line {line}: expected {expected} columns, found {found}")]
    Arity { relation: String, line: usize, expected: usize, found: usize },
    #[error("relation `{relation}` line {line}: column `{column}` is not a decimal integer")]
    IntParse { relation: String, line: usize, column: String },
    #[error("relation `{relation}` line {line}: duplicate row")]
    DuplicateRow { relation: String, line: usize },
    #[error("relation `{relation}` line {line}: missing trailing newline")]
    TrailingNewline { relation: String, line: usize },
    #[error("relation `{0}` is listed in the manifest but has no facts file")]
    MissingRelationFile(String),
    #[error("facts file `{0}` is not listed in the manifest")]
    UnlistedRelation(String),
    #[error("archive invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Schema(#[from] SchemaError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ArchiveError + '_ {
    move |source| ArchiveError::Io { path: path.to_path_buf(), source }
}

/// A manifest plus the relations it describes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactsArchive {
    manifest: Manifest,
    relations: BTreeMap<String, Relation>,
}

impl FactsArchive {
    /// Builds an archive; `manifest.relations` is recomputed from `relations`.
    pub fn new(mut manifest: Manifest, relations: impl IntoIterator<Item = Relation>) -> Result<Self, ArchiveError> {
        let mut map = BTreeMap::new();
        for rel in relations {
            let name = rel.name().to_string();
            if map.insert(name.clone(), rel).is_some() {
                return Err(ArchiveError::Invariant(format!("relation `{name}` given twice")));
            }
        }
        manifest.relations = map.values().map(RelationEntry::for_relation).collect();
        manifest.check_files()?;
        Ok(FactsArchive { manifest, relations: map })
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn language(&self) -> Language {
        self.manifest.subject_language
    }

    pub fn relations(&self) -> &BTreeMap<String, Relation> {
        &self.relations
    }

    pub fn relation(&self, name: &str) -> Option<&Relation> {
        self.relations.get(name)
    }

    pub fn into_parts(self) -> (Manifest, BTreeMap<String, Relation>) {
        (self.manifest, self.relations)
    }

    /// Replaces the commit id, keeping everything else.
    pub fn with_commit(mut self, commit_id: impl Into<String>) -> Self {
        self.manifest.commit_id = commit_id.into();
        self
    }

    pub fn check(&self) -> Result<(), ArchiveError> {
        self.manifest.check_files()?;
        if self.manifest.relations.len() != self.relations.len() {
            return Err(ArchiveError::Invariant("manifest and relation set differ".into()));
        }
        for entry in &self.manifest.relations {
            let rel = self
                .relations
                .get(&entry.name)
                .ok_or_else(|| ArchiveError::MissingRelationFile(entry.name.clone()))?;
            if *entry != RelationEntry::for_relation(rel) {
                return Err(ArchiveError::Invariant(format!("manifest entry for `{}` is stale", entry.name)));
            }
        }
        Ok(())
    }

    /// SHA-256 over the serialized bytes of one relation.
    pub fn relation_digest(&self, name: &str) -> Option<String> {
        self.relations.get(name).map(|r| hex::encode(Sha256::digest(serialize_relation(r))))
    }
}

/// Serializes rows in canonical order, one per line, tab-separated.
pub fn serialize_relation(rel: &Relation) -> Vec<u8> {
    let mut out = String::new();
    for row in super::canonical_order(rel) {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push('\t');
            }
            match v {
                Value::Int(n) => out.push_str(&n.to_string()),
                Value::Str(s) => out.push_str(&escape_str(s)),
            }
        }
        out.push('\n');
    }
    out.into_bytes()
}

pub fn serialize_manifest(manifest: &Manifest) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    s.push('\n');
    s.into_bytes()
}

/// Writes `archive` under `destination`. Everything is serialized before the
/// first byte hits the disk, so an invalid archive leaves no partial output.
pub fn write_archive(archive: &FactsArchive, destination: &Path) -> Result<(), ArchiveError> {
    archive.check()?;
    let manifest = serialize_manifest(&archive.manifest);
    let files: Vec<(String, Vec<u8>)> =
        archive.relations.values().map(|r| (format!("{}.facts", r.name()), serialize_relation(r))).collect();

    fs::create_dir_all(destination).map_err(io_err(destination))?;
    let rel_dir = destination.join("relations");
    if rel_dir.exists() {
        fs::remove_dir_all(&rel_dir).map_err(io_err(&rel_dir))?;
    }
    if !files.is_empty() {
        fs::create_dir_all(&rel_dir).map_err(io_err(&rel_dir))?;
    }
    for (name, bytes) in files {
        let path = rel_dir.join(name);
        fs::write(&path, bytes).map_err(io_err(&path))?;
    }
    let path = destination.join(MANIFEST_FILE);
    fs::write(&path, manifest).map_err(io_err(&path))?;
    Ok(())
}

pub fn read_manifest(source: &Path) -> Result<Manifest, ArchiveError> {
    let path = source.join(MANIFEST_FILE);
    let bytes = match fs::read(&path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(ArchiveError::MissingManifest(path)),
        Err(e) => return Err(ArchiveError::Io { path, source: e }),
    };
    serde_json::from_slice(&bytes).map_err(|source| ArchiveError::ManifestJson { path, source })
}

/// Reads and validates an archive written by [`write_archive`].
pub fn read_archive(source: &Path) -> Result<FactsArchive, ArchiveError> {
    let manifest = read_manifest(source)?;
    manifest.check_files()?;
    let rel_dir = source.join("relations");
    if rel_dir.is_dir() {
        for entry in fs::read_dir(&rel_dir).map_err(io_err(&rel_dir))? {
            let entry = entry.map_err(io_err(&rel_dir))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            let Some(stem) = name.strip_suffix(".facts") else { continue };
            if !manifest.relations.iter().any(|r| r.name == stem) {
                return Err(ArchiveError::UnlistedRelation(name));
            }
        }
    }
    let mut interner = Interner::default();
    let mut relations = BTreeMap::new();
    for entry in &manifest.relations {
        let schema = entry.schema()?;
        let path = rel_dir.join(format!("{}.facts", entry.name));
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(ArchiveError::MissingRelationFile(entry.name.clone()))
            }
            Err(e) => return Err(ArchiveError::Io { path, source: e }),
        };
        let rel = parse_relation(schema, &text, &mut interner)?;
        if rel.len() != entry.row_count {
            return Err(ArchiveError::RowCount { relation: entry.name.clone(), expected: entry.row_count, found: rel.len() });
        }
        relations.insert(entry.name.clone(), rel);
    }
    let archive = FactsArchive { manifest, relations };
    archive.check()?;
    Ok(archive)
}

fn parse_relation(schema: RelationSchema, text: &str, interner: &mut Interner) -> Result<Relation, ArchiveError> {
    let name = schema.name.clone();
    let types = schema.column_types();
    let mut rel = Relation::new(schema);
    if text.is_empty() {
        return Ok(rel);
    }
    let body = match text.strip_suffix('\n') {
        Some(b) => b,
        None => return Err(ArchiveError::TrailingNewline { relation: name, line: text.lines().count() }),
    };
    for (idx, line) in body.split('\n').enumerate() {
        let line_no = idx + 1;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != types.len() {
            return Err(ArchiveError::Arity { relation: name, line: line_no, expected: types.len(), found: fields.len() });
        }
        let mut row = Vec::with_capacity(fields.len());
        for (i, (field, ty)) in fields.iter().zip(&types).enumerate() {
            row.push(match ty {
                ColumnType::Int => Value::Int(parse_int(field).ok_or_else(|| ArchiveError::IntParse {
                    relation: name.clone(),
                    line: line_no,
                    column: rel.schema().columns[i].name.clone(),
                })?),
                ColumnType::Str => {
                    let s = unescape_str(field).ok_or_else(|| ArchiveError::Escape { relation: name.clone(), line: line_no })?;
                    Value::Str(interner.intern(&s))
                }
            });
        }
        if !rel.insert(row)? {
            return Err(ArchiveError::DuplicateRow { relation: name, line: line_no });
        }
    }
    Ok(rel)
}

fn parse_int(s: &str) -> Option<i64> {
    let digits = s.strip_prefix('-').unwrap_or(s);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    s.parse().ok()
}
