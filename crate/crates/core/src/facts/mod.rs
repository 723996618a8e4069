//! Relations, tuples and values, plus the on-disk facts archive.
//!
//! A [`Relation`] is a set of fixed-arity tuples with a typed schema. A
//! [`FactsArchive`] bundles the Tier-1 relations extracted from one commit
//! of one repository together with a [`Manifest`] describing the files they
//! came from.

mod archive;
mod diff;

pub use archive::{read_archive, read_manifest, serialize_manifest, serialize_relation, write_archive, ArchiveError, FactsArchive, FileEntry, Manifest, RelationEntry, FORMAT_VERSION, MANIFEST_FILE};
pub use diff::{diff_manifests, DiffError, FileDelta};

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

/// A single column value.
///
/// Ordering is total: every `Int` sorts before every `Str`, integers by value
/// and strings by their UTF-8 bytes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Int(i64),
    Str(Arc<str>),
}

impl Value {
    pub fn str(s: impl AsRef<str>) -> Self {
        Value::Str(Arc::from(s.as_ref()))
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(*i),
            Value::Str(_) => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) => Some(s),
            Value::Int(_) => None,
        }
    }

    pub fn column_type(&self) -> ColumnType {
        match self {
            Value::Int(_) => ColumnType::Int,
            Value::Str(_) => ColumnType::Str,
        }
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::str(v)
    }
}

impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::Str(Arc::from(v))
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Str(s) => write!(f, "{s:?}"),
        }
    }
}

/// Deduplicates string allocations while loading relations.
#[derive(Debug, Default)]
pub struct Interner {
    strings: HashMap<Arc<str>, ()>,
}

impl Interner {
    pub fn intern(&mut self, s: &str) -> Arc<str> {
        if let Some((k, _)) = self.strings.get_key_value(s) {
            return k.clone();
        }
        let arc: Arc<str> = Arc::from(s);
        self.strings.insert(arc.clone(), ());
        arc
    }
}

pub type Tuple = Vec<Value>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnType {
    Int,
    Str,
}

impl fmt::Display for ColumnType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ColumnType::Int => "int",
            ColumnType::Str => "str",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Column {
    pub name: String,
    pub ty: ColumnType,
}

impl Column {
    pub fn new(name: impl Into<String>, ty: ColumnType) -> Self {
        Column { name: name.into(), ty }
    }

    pub fn int(name: impl Into<String>) -> Self {
        Column::new(name, ColumnType::Int)
    }

    pub fn str(name: impl Into<String>) -> Self {
        Column::new(name, ColumnType::Str)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RelationSchema {
    pub name: String,
    pub columns: Vec<Column>,
    /// Length of the column prefix that identifies a row.
    pub key_len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SchemaError {
    #[error("relation `{relation}` declares column `{column}` more than once")]
    DuplicateColumn { relation: String, column: String },
    #[error("relation `{relation}` has key length {key_len} but only {arity} columns")]
    KeyTooLong { relation: String, key_len: usize, arity: usize },
    #[error("relation `{relation}`: tuple {tuple:?} has arity {found}, expected {expected}")]
    Arity { relation: String, tuple: Vec<String>, found: usize, expected: usize },
    #[error("relation `{relation}`: column `{column}` expects {expected} but got {value}")]
    ColumnType { relation: String, column: String, expected: ColumnType, value: String },
}

impl RelationSchema {
    pub fn new(name: impl Into<String>, columns: Vec<Column>, key_len: usize) -> Result<Self, SchemaError> {
        let schema = RelationSchema { name: name.into(), columns, key_len };
        schema.validate()?;
        Ok(schema)
    }

    pub fn arity(&self) -> usize {
        self.columns.len()
    }

    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn column_types(&self) -> Vec<ColumnType> {
        self.columns.iter().map(|c| c.ty).collect()
    }

    pub fn validate(&self) -> Result<(), SchemaError> {
        let mut seen = BTreeSet::new();
        for c in &self.columns {
            if !seen.insert(c.name.as_str()) {
                return Err(SchemaError::DuplicateColumn { relation: self.name.clone(), column: c.name.clone() });
            }
        }
        if self.key_len > self.columns.len() {
            return Err(SchemaError::KeyTooLong { relation: self.name.clone(), key_len: self.key_len, arity: self.columns.len() });
        }
        Ok(())
    }

    pub fn check_tuple(&self, tuple: &[Value]) -> Result<(), SchemaError> {
        if tuple.len() != self.columns.len() {
            return Err(SchemaError::Arity {
                relation: self.name.clone(),
                tuple: tuple.iter().map(|v| v.to_string()).collect(),
                found: tuple.len(),
                expected: self.columns.len(),
            });
        }
        for (v, c) in tuple.iter().zip(&self.columns) {
            if v.column_type() != c.ty {
                return Err(SchemaError::ColumnType {
                    relation: self.name.clone(),
                    column: c.name.clone(),
                    expected: c.ty,
                    value: v.to_string(),
                });
            }
        }
        Ok(())
    }
}

/// A typed set of tuples. Iteration order is the canonical order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Relation {
    schema: RelationSchema,
    tuples: BTreeSet<Tuple>,
}

impl Relation {
    pub fn new(schema: RelationSchema) -> Self {
        Relation { schema, tuples: BTreeSet::new() }
    }

    pub fn from_tuples(schema: RelationSchema, tuples: impl IntoIterator<Item = Tuple>) -> Result<Self, SchemaError> {
        let mut rel = Relation::new(schema);
        for t in tuples {
            rel.insert(t)?;
        }
        Ok(rel)
    }

    pub fn schema(&self) -> &RelationSchema {
        &self.schema
    }

    pub fn name(&self) -> &str {
        &self.schema.name
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    /// Inserts a tuple after checking it against the schema. Returns whether
    /// the tuple was new.
    pub fn insert(&mut self, tuple: Tuple) -> Result<bool, SchemaError> {
        self.schema.check_tuple(&tuple)?;
        Ok(self.tuples.insert(tuple))
    }

    /// Returns whether the tuple was present.
    pub fn remove(&mut self, tuple: &[Value]) -> bool {
        self.tuples.remove(tuple)
    }

    /// Tuples whose first column is `first`.
    pub fn with_first(&self, first: &Value) -> impl Iterator<Item = &Tuple> {
        let from: Tuple = vec![first.clone()];
        let first = first.clone();
        self.tuples.range(from..).take_while(move |t| t.first() == Some(&first))
    }

    pub fn contains(&self, tuple: &[Value]) -> bool {
        self.tuples.contains(tuple)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Tuple> {
        self.tuples.iter()
    }

    pub fn tuples(&self) -> &BTreeSet<Tuple> {
        &self.tuples
    }

    pub fn retain(&mut self, f: impl FnMut(&Tuple) -> bool) {
        self.tuples.retain(f);
    }

    pub fn into_tuples(self) -> BTreeSet<Tuple> {
        self.tuples
    }
}

/// Rows of `relation` in canonical order: lexicographic over columns, integers
/// by value and strings by byte order.
pub fn canonical_order(relation: &Relation) -> Vec<&Tuple> {
    // The backing BTreeSet already iterates in `Value`'s total order.
    relation.iter().collect()
}

/// Escapes a string for the tab-separated facts format.
pub fn escape_str(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out
}

/// Reverses [`escape_str`]. Returns `None` on a dangling or unknown escape.
pub fn unescape_str(s: &str) -> Option<String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(ch) = chars.next() {
        if ch == '\\' {
            match chars.next()? {
                '\\' => out.push('\\'),
                't' => out.push('\t'),
                'n' => out.push('\n'),
                _ => return None,
            }
        } else {
            out.push(ch);
        }
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn class_schema() -> RelationSchema {
        RelationSchema::new("class", vec![Column::int("id"), Column::str("name")], 1).unwrap()
    }

    #[test]
    fn canonical_order_sorts_by_columns() {
        let rel = Relation::from_tuples(
            class_schema(),
            vec![vec![Value::Int(2), Value::str("b")], vec![Value::Int(1), Value::str("a")]],
        )
        .unwrap();
        let rows: Vec<_> = canonical_order(&rel).into_iter().cloned().collect();
        assert_eq!(rows, vec![vec![Value::Int(1), Value::str("a")], vec![Value::Int(2), Value::str("b")]]);
    }

    #[test]
    fn canonical_order_of_empty_relation_is_empty() {
        assert!(canonical_order(&Relation::new(class_schema())).is_empty());
    }

    #[test]
    fn strings_order_by_bytes_and_negative_ints_first() {
        let mut vals = vec![Value::str("b"), Value::str("B"), Value::Int(3), Value::Int(-7), Value::str("é"), Value::str("a")];
        vals.sort();
        assert_eq!(
            vals,
            vec![Value::Int(-7), Value::Int(3), Value::str("B"), Value::str("a"), Value::str("b"), Value::str("é")]
        );
    }

    #[test]
    fn insert_rejects_wrong_arity_and_type() {
        let mut rel = Relation::new(class_schema());
        assert!(matches!(rel.insert(vec![Value::Int(1)]), Err(SchemaError::Arity { .. })));
        assert!(matches!(rel.insert(vec![Value::str("x"), Value::str("y")]), Err(SchemaError::ColumnType { .. })));
        assert!(rel.insert(vec![Value::Int(1), Value::str("A")]).unwrap());
        assert!(!rel.insert(vec![Value::Int(1), Value::str("A")]).unwrap());
    }

    #[test]
    fn duplicate_column_names_rejected() {
        let err = RelationSchema::new("r", vec![Column::int("a"), Column::str("a")], 1).unwrap_err();
        assert!(matches!(err, SchemaError::DuplicateColumn { .. }));
    }

    #[test]
    fn escape_round_trip() {
        for s in ["", "plain", "tab\there", "line\nbreak", "back\\slash", "\\t literal", "mixed\t\n\\"] {
            let e = escape_str(s);
            assert!(!e.contains('\t') && !e.contains('\n'));
            assert_eq!(unescape_str(&e).as_deref(), Some(s));
        }
        assert_eq!(unescape_str("bad\\q"), None);
        assert_eq!(unescape_str("dangling\\"), None);
    }
}
