//! Build-independent Tier-1 fact extraction.
//!
//! Every file is extracted on its own from `(relative path, bytes)`, so the
//! facts of a file never depend on its siblings. Node ids hash the file's
//! content hash, its relative path and the node's path from the file root.

pub mod python;
pub mod xml;

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::facts::{Column, FactsArchive, FileEntry, Manifest, Relation, RelationSchema, Tuple, Value};
use crate::Language;

pub const DIAGNOSTIC: &str = "diagnostic";
pub const CHANGED_FILE: &str = "changed_file";

#[derive(Debug, thiserror::Error)]
pub enum ExtractError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("node id {id} is produced by two different nodes (in {first} and {second})")]
    Collision { id: i64, first: String, second: String },
    #[error("{0}")]
    Archive(#[from] crate::facts::ArchiveError),
}

/// Position of a node below a file root, as a running hash.
#[derive(Clone)]
pub struct NodePath {
    state: Sha256,
    next: u32,
}

impl NodePath {
    fn root(content_hash: &str, rel_path: &str) -> Self {
        let mut state = Sha256::new();
        state.update(content_hash.as_bytes());
        state.update([0]);
        state.update(rel_path.as_bytes());
        state.update([0]);
        let mut p = NodePath { state, next: 0 };
        p.push(0, "file");
        p
    }

    fn push(&mut self, index: u32, kind: &str) {
        self.state.update(index.to_le_bytes());
        self.state.update(kind.as_bytes());
        self.state.update([0]);
    }

    /// The next child of this node, of the given kind.
    pub fn child(&mut self, kind: &str) -> NodePath {
        let mut c = NodePath { state: self.state.clone(), next: 0 };
        c.push(self.next, kind);
        self.next += 1;
        c
    }

    /// A singleton attachment (such as a node's location), not counted as
    /// a child.
    pub fn fixed(&self, kind: &str) -> NodePath {
        let mut c = NodePath { state: self.state.clone(), next: 0 };
        c.push(0, kind);
        c
    }

    pub fn id(&self) -> i64 {
        let digest = self.state.clone().finalize();
        let mut b = [0u8; 8];
        b.copy_from_slice(&digest[..8]);
        // Positive and nonzero: 0 is reserved for "no parent".
        let v = (u64::from_be_bytes(b) >> 1) as i64;
        if v == 0 {
            1
        } else {
            v
        }
    }
}

/// Id of a node given the file's content hash, relative path and the
/// `(child index, kind)` steps from the file root.
pub fn node_id(content_hash: &str, rel_path: &str, steps: &[(u32, &str)]) -> i64 {
    let mut p = NodePath::root(content_hash, rel_path);
    for (i, k) in steps {
        p.push(*i, k);
    }
    p.id()
}

pub fn file_node_id(content_hash: &str, rel_path: &str) -> i64 {
    node_id(content_hash, rel_path, &[])
}

pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Lines in a file; a trailing newline does not start a new line.
pub fn count_lines(bytes: &[u8]) -> i64 {
    let newlines = bytes.iter().filter(|b| **b == b'\n').count() as i64;
    if bytes.is_empty() || bytes.ends_with(b"\n") {
        newlines
    } else {
        newlines + 1
    }
}

/// The facts of one file.
pub struct FileFacts {
    pub path: String,
    pub content_hash: String,
    pub line_count: i64,
    pub file_id: i64,
    pub rows: BTreeMap<&'static str, Vec<Tuple>>,
    pub malformed: bool,
    root: NodePath,
}

impl FileFacts {
    fn new(path: &str, bytes: &[u8]) -> Self {
        let hash = content_hash(bytes);
        let root = NodePath::root(&hash, path);
        FileFacts {
            path: path.to_string(),
            file_id: root.id(),
            content_hash: hash,
            line_count: count_lines(bytes),
            rows: BTreeMap::new(),
            malformed: false,
            root,
        }
    }

    fn root(&self) -> NodePath {
        self.root.clone()
    }

    fn id(&self, p: &NodePath) -> i64 {
        p.id()
    }

    fn push(&mut self, relation: &'static str, row: Tuple) {
        self.rows.entry(relation).or_default().push(row);
    }

    fn file_row(&mut self, code: i64, comment: i64) {
        let row = vec![
            Value::Int(self.file_id),
            Value::str(&self.path),
            Value::str(&self.content_hash),
            Value::Int(self.line_count),
            Value::Int(code),
            Value::Int(comment),
        ];
        self.push("file", row);
    }

    fn diagnostic(&mut self, root: &NodePath, line: i64, message: &str) {
        let id = root.fixed(DIAGNOSTIC).id();
        self.malformed = true;
        self.push(DIAGNOSTIC, vec![Value::Int(id), Value::Int(self.file_id), Value::Int(line), Value::str(message)]);
    }

    /// Number of fact rows other than the file and diagnostic rows.
    pub fn ast_rows(&self) -> usize {
        self.rows.iter().filter(|(k, _)| !matches!(**k, "file" | "xml_file" | DIAGNOSTIC)).map(|(_, v)| v.len()).sum()
    }
}

pub fn extract_file(language: Language, rel_path: &str, bytes: &[u8]) -> FileFacts {
    match language {
        Language::Python => python::extract_file(rel_path, bytes),
        Language::Xml => xml::extract_file(rel_path, bytes),
    }
}

fn schema(name: &str, cols: &[(&str, bool)], key_len: usize) -> RelationSchema {
    let columns = cols.iter().map(|(n, is_str)| if *is_str { Column::str(*n) } else { Column::int(*n) }).collect();
    RelationSchema::new(name, columns, key_len).expect("static schema")
}

/// The Tier-1 relation inventory of a language.
pub fn tier1_schemas(language: Language) -> Vec<RelationSchema> {
    const I: bool = false;
    const S: bool = true;
    let diag = schema(DIAGNOSTIC, &[("id", I), ("file_id", I), ("line", I), ("message", S)], 1);
    match language {
        Language::Python => vec![
            schema(
                "file",
                &[("id", I), ("relative_path", S), ("content_hash", S), ("line_count", I), ("code_line_count", I), ("comment_line_count", I)],
                1,
            ),
            schema("location", &[("id", I), ("file_id", I), ("start_line", I), ("start_col", I), ("end_line", I), ("end_col", I)], 1),
            schema("class", &[("id", I), ("name", S), ("file_id", I), ("location_id", I)], 1),
            schema("class_base", &[("class_id", I), ("base_index", I), ("base_name", S)], 2),
            schema("function", &[("id", I), ("name", S), ("kind", S), ("parent_id", I), ("file_id", I), ("location_id", I)], 1),
            schema("parameter", &[("id", I), ("function_id", I), ("index", I), ("name", S)], 1),
            schema("statement", &[("id", I), ("kind", S), ("parent_id", I), ("index", I), ("location_id", I)], 1),
            schema("call", &[("id", I), ("enclosing_function_id", I), ("callee_text", S), ("location_id", I)], 1),
            schema("import", &[("id", I), ("file_id", I), ("imported_name", S), ("alias", S)], 1),
            schema("comment", &[("id", I), ("file_id", I), ("location_id", I), ("text", S)], 1),
            schema("decorator", &[("id", I), ("target_id", I), ("text", S)], 1),
            diag,
        ],
        Language::Xml => vec![
            schema("xml_file", &[("id", I), ("file_name", S), ("relative_path", S), ("content_hash", S)], 1),
            schema("xml_location", &[("id", I), ("file_id", I), ("start_line", I), ("start_col", I), ("end_line", I), ("end_col", I)], 1),
            schema("xml_element", &[("id", I), ("name", S), ("location_id", I), ("parent_id", I), ("index_order", I)], 1),
            schema("xml_attribute", &[("id", I), ("element_id", I), ("name", S), ("value", S)], 1),
            schema("xml_character", &[("id", I), ("text", S), ("belonged_element_id", I), ("index", I)], 1),
            diag,
        ],
    }
}

pub fn changed_file_schema() -> RelationSchema {
    schema(CHANGED_FILE, &[("file_id", false)], 1)
}

/// How a row of a relation is tied to the file it came from.
#[derive(Debug, Clone, Copy)]
pub enum Owner {
    /// The column holds the file id.
    File(usize),
    /// The column holds the id of a row of an earlier relation.
    Via(usize),
}

/// Ownership rules, ordered so every `Via` target is resolved first.
pub fn ownership(language: Language) -> Vec<(&'static str, Owner)> {
    use Owner::*;
    match language {
        Language::Python => vec![
            ("file", File(0)),
            ("location", File(1)),
            ("class", File(2)),
            ("function", File(4)),
            ("import", File(1)),
            ("comment", File(1)),
            (DIAGNOSTIC, File(1)),
            ("statement", Via(4)),
            ("call", Via(3)),
            ("parameter", Via(1)),
            ("decorator", Via(1)),
            ("class_base", Via(0)),
        ],
        Language::Xml => vec![
            ("xml_file", File(0)),
            ("xml_location", File(1)),
            (DIAGNOSTIC, File(1)),
            ("xml_element", Via(2)),
            ("xml_attribute", Via(1)),
            ("xml_character", Via(2)),
        ],
    }
}

/// For every relation, the owning file id of each row (in iteration order).
pub fn row_owners(language: Language, relations: &BTreeMap<String, Relation>) -> BTreeMap<String, Vec<Option<i64>>> {
    let mut id_owner: HashMap<i64, i64> = HashMap::new();
    let mut out = BTreeMap::new();
    for (name, rule) in ownership(language) {
        let Some(rel) = relations.get(name) else { continue };
        let has_id = rel.schema().columns.first().is_some_and(|c| c.name == "id");
        let mut owners = Vec::with_capacity(rel.len());
        for row in rel.iter() {
            let owner = match rule {
                Owner::File(c) => row[c].as_int(),
                Owner::Via(c) => row[c].as_int().and_then(|id| id_owner.get(&id).copied()),
            };
            if let (true, Some(o), Some(id)) = (has_id, owner, row[0].as_int()) {
                id_owner.insert(id, o);
            }
            owners.push(owner);
        }
        out.insert(name.to_string(), owners);
    }
    out
}

/// Files of `language` under `root`, as sorted `/`-separated relative
/// paths. Hidden directories are skipped. A file given as `root` yields
/// its own name.
pub fn scan_worktree(root: &Path, language: Language) -> Result<(PathBuf, Vec<String>), ExtractError> {
    let io = |path: &Path, source| ExtractError::Io { path: path.display().to_string(), source };
    let meta = std::fs::metadata(root).map_err(|e| io(root, e))?;
    if meta.is_file() {
        let name = root.file_name().map(|n| n.to_string_lossy().to_string()).unwrap_or_default();
        let dir = root.parent().map(Path::to_path_buf).unwrap_or_default();
        return Ok((dir, vec![name]));
    }
    let mut files = Vec::new();
    let walker = walkdir::WalkDir::new(root).sort_by_file_name().into_iter().filter_entry(|e| {
        e.depth() == 0 || !e.file_name().to_string_lossy().starts_with('.')
    });
    for entry in walker {
        let entry = entry.map_err(|e| {
            let path = e.path().map(Path::to_path_buf).unwrap_or_else(|| root.to_path_buf());
            io(&path, e.into())
        })?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry.path().strip_prefix(root).unwrap_or(entry.path());
        let rel: Vec<String> = rel.components().map(|c| c.as_os_str().to_string_lossy().to_string()).collect();
        let rel = rel.join("/");
        if language.matches_path(&rel) {
            files.push(rel);
        }
    }
    files.sort();
    Ok((root.to_path_buf(), files))
}

/// Reads and extracts `files` (relative to `worktree`) in parallel.
pub fn extract_files(language: Language, worktree: &Path, files: &[String]) -> Result<Vec<FileFacts>, ExtractError> {
    files
        .par_iter()
        .map(|rel| {
            let path = worktree.join(rel);
            let bytes = std::fs::read(&path).map_err(|source| ExtractError::Io { path: path.display().to_string(), source })?;
            Ok(extract_file(language, rel, &bytes))
        })
        .collect()
}

/// Merges per-file blocks and carried-over relations into one archive.
/// Duplicate node ids across different rows are a hard error.
pub fn assemble(
    language: Language,
    repo_id: &str,
    commit_id: &str,
    files: Vec<FileEntry>,
    blocks: Vec<FileFacts>,
    carried: BTreeMap<String, Vec<Tuple>>,
) -> Result<FactsArchive, ExtractError> {
    let mut manifest = Manifest::new(language, repo_id, commit_id);
    let mut entries = files;
    let mut rows: BTreeMap<String, Vec<Tuple>> = carried;
    for b in blocks {
        entries.push(FileEntry { path: b.path.clone(), content_hash: b.content_hash.clone(), line_count: b.line_count });
        for (rel, r) in b.rows {
            rows.entry(rel.to_string()).or_default().extend(r);
        }
    }
    entries.sort_by(|a, b| a.path.cmp(&b.path));
    manifest.files = entries;
    manifest.check_files()?;

    let mut relations = Vec::new();
    let mut seen: HashMap<i64, (String, Tuple)> = HashMap::new();
    for schema in tier1_schemas(language) {
        let mut rel = Relation::new(schema.clone());
        for row in rows.remove(&schema.name).unwrap_or_default() {
            if schema.columns[0].name == "id" {
                let id = row[0].as_int().unwrap_or_default();
                if let Some((other_rel, other)) = seen.get(&id) {
                    if *other_rel != schema.name || *other != row {
                        return Err(ExtractError::Collision { id, first: describe(other_rel, other), second: describe(&schema.name, &row) });
                    }
                }
                seen.insert(id, (schema.name.clone(), row.clone()));
            }
            rel.insert(row).map_err(crate::facts::ArchiveError::Schema)?;
        }
        relations.push(rel);
    }
    Ok(FactsArchive::new(manifest, relations)?)
}

pub(crate) fn describe(rel: &str, row: &[Value]) -> String {
    let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
    format!("{rel}({})", cells.join(", "))
}

/// Full extraction of `files` under `worktree`.
pub fn extract(language: Language, worktree: &Path, files: &[String], repo_id: &str, commit_id: &str) -> Result<FactsArchive, ExtractError> {
    let blocks = extract_files(language, worktree, files)?;
    assemble(language, repo_id, commit_id, Vec::new(), blocks, BTreeMap::new())
}

/// Foreign-key columns: (relation, column, target relations, whether 0
/// means "none").
fn references(language: Language) -> Vec<(&'static str, usize, &'static [&'static str], bool)> {
    match language {
        Language::Python => vec![
            ("location", 1, &["file"], false),
            ("class", 2, &["file"], false),
            ("class", 3, &["location"], false),
            ("class_base", 0, &["class"], false),
            ("function", 3, &["class", "function", "file"], false),
            ("function", 4, &["file"], false),
            ("function", 5, &["location"], false),
            ("parameter", 1, &["function"], false),
            ("statement", 2, &["statement", "function", "class", "file"], false),
            ("statement", 4, &["location"], false),
            ("call", 1, &["function"], true),
            ("call", 3, &["location"], false),
            ("import", 1, &["file"], false),
            ("comment", 1, &["file"], false),
            ("comment", 2, &["location"], false),
            ("decorator", 1, &["class", "function"], false),
            (DIAGNOSTIC, 1, &["file"], false),
            (CHANGED_FILE, 0, &["file"], false),
        ],
        Language::Xml => vec![
            ("xml_location", 1, &["xml_file"], false),
            ("xml_element", 2, &["xml_location"], false),
            ("xml_element", 3, &["xml_element"], true),
            ("xml_attribute", 1, &["xml_element"], false),
            ("xml_character", 2, &["xml_element"], false),
            (DIAGNOSTIC, 1, &["xml_file"], false),
            (CHANGED_FILE, 0, &["xml_file"], false),
        ],
    }
}

/// Checks that every foreign id column resolves within the archive.
/// Returns one message per dangling reference.
pub fn check_references(archive: &FactsArchive) -> Result<(), Vec<String>> {
    let ids = |name: &str| -> std::collections::HashSet<i64> {
        archive.relation(name).map(|r| r.iter().filter_map(|t| t[0].as_int()).collect()).unwrap_or_default()
    };
    let mut cache: HashMap<&str, std::collections::HashSet<i64>> = HashMap::new();
    let mut errors = Vec::new();
    for (rel, col, targets, zero_ok) in references(archive.language()) {
        let Some(r) = archive.relation(rel) else { continue };
        for t in targets {
            cache.entry(t).or_insert_with(|| ids(t));
        }
        for row in r.iter() {
            let Some(v) = row[col].as_int() else { continue };
            if v == 0 && zero_ok {
                continue;
            }
            if !targets.iter().any(|t| cache[t].contains(&v)) {
                let column = &r.schema().columns[col].name;
                errors.push(format!("{rel}.{column} = {v} does not resolve to {}", targets.join(" or ")));
            }
        }
    }
    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn node_ids_are_deterministic_and_hash_sensitive() {
        let a = node_id("h1", "a.py", &[(0, "class"), (1, "function")]);
        assert_eq!(a, node_id("h1", "a.py", &[(0, "class"), (1, "function")]));
        assert_ne!(a, node_id("h2", "a.py", &[(0, "class"), (1, "function")]));
        assert_ne!(a, node_id("h1", "a.py", &[(1, "class"), (1, "function")]));
        assert!(a > 0);
    }

    #[test]
    fn no_collisions_over_many_paths() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let kinds = ["if", "call", "function", "class", "for"];
        let mut seen = HashSet::new();
        let mut paths = HashSet::new();
        while paths.len() < 100_000 {
            let depth = rng.gen_range(1..6);
            let steps: Vec<(u32, &str)> = (0..depth).map(|_| (rng.gen_range(0..20), kinds[rng.gen_range(0..kinds.len())])).collect();
            if paths.insert(steps.clone()) {
                assert!(seen.insert(node_id("hash", "f.py", &steps)));
            }
        }
    }

    #[test]
    fn line_counting() {
        assert_eq!(count_lines(b""), 0);
        assert_eq!(count_lines(b"a"), 1);
        assert_eq!(count_lines(b"a\n"), 1);
        assert_eq!(count_lines(b"a\n\nb"), 3);
    }
}
