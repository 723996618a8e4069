use std::collections::{BTreeMap, BTreeSet};

use super::Manifest;
use crate::Language;

/// Partition of file paths between a baseline manifest and a current one.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FileDelta {
    pub added: BTreeSet<String>,
    pub removed: BTreeSet<String>,
    pub changed: BTreeSet<String>,
    pub unchanged: BTreeSet<String>,
}

impl FileDelta {
    /// Paths that need a fresh extraction.
    pub fn dirty(&self) -> impl Iterator<Item = &String> {
        self.added.iter().chain(&self.changed)
    }

    pub fn is_empty(&self) -> bool {
        self.added.is_empty() && self.removed.is_empty() && self.changed.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot diff a {baseline} manifest against a {current} manifest")]
pub struct DiffError {
    pub baseline: Language,
    pub current: Language,
}

pub fn diff_manifests(baseline: &Manifest, current: &Manifest) -> Result<FileDelta, DiffError> {
    if baseline.subject_language != current.subject_language {
        return Err(DiffError { baseline: baseline.subject_language, current: current.subject_language });
    }
    let old: BTreeMap<&str, &str> =
        baseline.files.iter().map(|f| (f.path.as_str(), f.content_hash.as_str())).collect();
    let mut delta = FileDelta::default();
    let mut seen = BTreeSet::new();
    for f in &current.files {
        seen.insert(f.path.as_str());
        match old.get(f.path.as_str()) {
            None => delta.added.insert(f.path.clone()),
            Some(h) if *h == f.content_hash => delta.unchanged.insert(f.path.clone()),
            Some(_) => delta.changed.insert(f.path.clone()),
        };
    }
    delta.removed = old.keys().filter(|p| !seen.contains(*p)).map(|p| p.to_string()).collect();
    Ok(delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::facts::FileEntry;

    fn manifest(files: &[(&str, &str)]) -> Manifest {
        let mut m = Manifest::new(Language::Python, "r", "c");
        m.files = files
            .iter()
            .map(|(p, h)| FileEntry { path: p.to_string(), content_hash: h.to_string(), line_count: 1 })
            .collect();
        m
    }

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn identical_manifests_are_unchanged() {
        let m = manifest(&[("a.py", "1"), ("b.py", "2")]);
        let d = diff_manifests(&m, &m).unwrap();
        assert_eq!(d.unchanged, set(&["a.py", "b.py"]));
        assert!(d.is_empty());
    }

    #[test]
    fn add_remove_change() {
        let base = manifest(&[("a.py", "1"), ("b.py", "2")]);
        let cur = manifest(&[("b.py", "3"), ("c.py", "4")]);
        let d = diff_manifests(&base, &cur).unwrap();
        assert_eq!(d.removed, set(&["a.py"]));
        assert_eq!(d.changed, set(&["b.py"]));
        assert_eq!(d.added, set(&["c.py"]));
        assert!(d.unchanged.is_empty());
    }

    #[test]
    fn one_flipped_hash_in_five_hundred() {
        let files: Vec<(String, String)> = (0..500).map(|i| (format!("f{i:03}.py"), format!("{i:064x}"))).collect();
        let refs: Vec<(&str, &str)> = files.iter().map(|(p, h)| (p.as_str(), h.as_str())).collect();
        let base = manifest(&refs);
        let mut cur = base.clone();
        cur.files[137].content_hash = "f".repeat(64);
        let d = diff_manifests(&base, &cur).unwrap();
        assert_eq!((d.changed.len(), d.unchanged.len(), d.added.len(), d.removed.len()), (1, 499, 0, 0));
    }

    #[test]
    fn language_mismatch_is_an_error() {
        let a = manifest(&[]);
        let mut b = manifest(&[]);
        b.subject_language = Language::Xml;
        assert!(diff_manifests(&a, &b).is_err());
    }
}
