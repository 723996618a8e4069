//! Direct nested-loop evaluation of the Python library's semantics over
//! the stored relations, without the query compiler or the Datalog engine.

use std::collections::{BTreeMap, BTreeSet};

use codefacts::facts::{FactsArchive, Value};

#[derive(Debug, Clone)]
pub struct Func {
    pub id: i64,
    pub name: String,
    pub kind: String,
    pub parent_id: i64,
    pub file_id: i64,
    pub location_id: i64,
}

#[derive(Debug, Clone)]
pub struct Call {
    pub enclosing: i64,
    pub callee_text: String,
    pub location_id: i64,
}

#[derive(Debug, Clone)]
pub struct Loc {
    pub file_id: i64,
    pub start_line: i64,
    pub end_line: i64,
}

pub struct Db {
    pub files: BTreeMap<i64, (String, i64, i64, i64)>,
    pub locations: BTreeMap<i64, Loc>,
    pub functions: Vec<Func>,
    pub calls: Vec<Call>,
    pub classes: Vec<(i64, String, i64, i64)>,
    pub bases: Vec<(i64, String)>,
    pub params: Vec<i64>,
    pub statements: Vec<(i64, String, i64)>,
    pub comments: Vec<(i64, String)>,
}

fn rows(a: &FactsArchive, name: &str) -> Vec<BTreeMap<String, Value>> {
    let rel = a.relation(name).unwrap_or_else(|| panic!("no relation {name}"));
    let cols = rel.schema().column_names();
    rel.iter().map(|t| cols.iter().cloned().zip(t.iter().cloned()).collect()).collect()
}

fn i(r: &BTreeMap<String, Value>, c: &str) -> i64 {
    r[c].as_int().unwrap()
}

fn s(r: &BTreeMap<String, Value>, c: &str) -> String {
    r[c].as_str().unwrap().to_string()
}

fn after_last<'a>(s: &'a str, sep: &str) -> &'a str {
    s.rfind(sep).map_or(s, |p| &s[p + sep.len()..])
}

impl Db {
    pub fn new(a: &FactsArchive) -> Db {
        Db {
            files: rows(a, "file")
                .iter()
                .map(|r| (i(r, "id"), (s(r, "relative_path"), i(r, "line_count"), i(r, "code_line_count"), i(r, "comment_line_count"))))
                .collect(),
            locations: rows(a, "location")
                .iter()
                .map(|r| (i(r, "id"), Loc { file_id: i(r, "file_id"), start_line: i(r, "start_line"), end_line: i(r, "end_line") }))
                .collect(),
            functions: rows(a, "function")
                .iter()
                .map(|r| Func {
                    id: i(r, "id"),
                    name: s(r, "name"),
                    kind: s(r, "kind"),
                    parent_id: i(r, "parent_id"),
                    file_id: i(r, "file_id"),
                    location_id: i(r, "location_id"),
                })
                .collect(),
            calls: rows(a, "call")
                .iter()
                .map(|r| Call {
                    enclosing: i(r, "enclosing_function_id"),
                    callee_text: s(r, "callee_text"),
                    location_id: i(r, "location_id"),
                })
                .collect(),
            classes: rows(a, "class").iter().map(|r| (i(r, "id"), s(r, "name"), i(r, "file_id"), i(r, "location_id"))).collect(),
            bases: rows(a, "class_base").iter().map(|r| (i(r, "class_id"), s(r, "base_name"))).collect(),
            params: rows(a, "parameter").iter().map(|r| i(r, "function_id")).collect(),
            statements: rows(a, "statement").iter().map(|r| (i(r, "id"), s(r, "kind"), i(r, "parent_id"))).collect(),
            comments: rows(a, "comment").iter().map(|r| (i(r, "location_id"), s(r, "text"))).collect(),
        }
    }

    fn path_of_loc(&self, loc: i64) -> &str {
        &self.files[&self.locations[&loc].file_id].0
    }

    pub fn signature(&self, f: &Func) -> String {
        let l = &self.locations[&f.location_id];
        format!("{}:{}:{}", self.path_of_loc(f.location_id), l.start_line, f.name)
    }

    fn candidate(&self, c: &Call, f: &Func) -> bool {
        f.name == after_last(&c.callee_text, ".")
    }

    fn same_class(&self, c: &Call, f: &Func) -> bool {
        self.candidate(c, f)
            && f.kind == "method"
            && self.functions.iter().any(|g| g.id == c.enclosing && g.kind == "method" && g.parent_id == f.parent_id)
    }

    fn same_file(&self, c: &Call, f: &Func) -> bool {
        self.candidate(c, f) && f.file_id == self.locations[&c.location_id].file_id
    }

    pub fn resolves(&self, c: &Call, f: &Func) -> bool {
        if self.same_class(c, f) {
            return true;
        }
        let any_class = self.functions.iter().any(|g| self.same_class(c, g));
        if !any_class && self.same_file(c, f) {
            return true;
        }
        let any_file = self.functions.iter().any(|g| self.same_file(c, g));
        !any_class && !any_file && self.candidate(c, f)
    }

    /// Ids of the functions calling `f`.
    pub fn callers(&self, f: &Func) -> BTreeSet<i64> {
        let mut out = BTreeSet::new();
        for c in &self.calls {
            if self.resolves(c, f) {
                for g in &self.functions {
                    if g.id == c.enclosing {
                        out.insert(g.id);
                    }
                }
            }
        }
        out
    }

    /// Methods with some caller different from some other function.
    pub fn listing_unused_method(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for c in &self.functions {
            for m in &self.functions {
                for caller in self.callers(m) {
                    if c.id != caller {
                        out.insert(self.signature(m));
                    }
                }
            }
        }
        out
    }

    pub fn uncalled(&self) -> BTreeSet<String> {
        self.functions.iter().filter(|f| f.kind != "lambda" && self.callers(f).is_empty()).map(|f| self.signature(f)).collect()
    }

    pub fn call_edges(&self) -> BTreeSet<(String, String)> {
        let mut out = BTreeSet::new();
        for f in &self.functions {
            for c in self.calls.iter().filter(|c| c.enclosing == f.id) {
                for g in &self.functions {
                    if self.resolves(c, g) {
                        out.insert((self.signature(f), self.signature(g)));
                    }
                }
            }
        }
        out
    }

    pub fn mutual_pairs(&self) -> BTreeSet<(String, String)> {
        let calls = |f: &Func, g: &Func| self.calls.iter().any(|c| c.enclosing == f.id && self.resolves(c, g));
        let mut out = BTreeSet::new();
        for f in &self.functions {
            for g in &self.functions {
                if f.id != g.id && calls(f, g) && calls(g, f) {
                    out.insert((f.name.clone(), g.name.clone()));
                }
            }
        }
        out
    }

    fn qualified(&self, c: &(i64, String, i64, i64)) -> String {
        format!("{}:{}", self.files[&c.2].0, c.1)
    }

    pub fn ancestors(&self) -> BTreeSet<(String, String)> {
        let direct: BTreeSet<(i64, i64)> = self
            .bases
            .iter()
            .flat_map(|(cid, base)| {
                self.classes.iter().filter(move |p| p.1 == after_last(base, ".")).map(move |p| (*cid, p.0))
            })
            .collect();
        let mut closure = direct.clone();
        loop {
            let mut grew = false;
            for &(a, b) in &closure.clone() {
                for &(c, d) in &direct {
                    if b == c && closure.insert((a, d)) {
                        grew = true;
                    }
                }
            }
            if !grew {
                break;
            }
        }
        let by_id: BTreeMap<i64, &(i64, String, i64, i64)> = self.classes.iter().map(|c| (c.0, c)).collect();
        closure.into_iter().map(|(a, b)| (self.qualified(by_id[&a]), self.qualified(by_id[&b]))).collect()
    }

    pub fn complexity(&self) -> BTreeSet<(String, String, i64, i64)> {
        const DECISIONS: [&str; 6] = ["if", "for", "while", "except", "match_case", "bool_op_branch"];
        let parent: BTreeMap<i64, i64> = self.statements.iter().map(|(id, _, p)| (*id, *p)).collect();
        let mut out = BTreeSet::new();
        for f in &self.functions {
            let mut n = 1;
            for (id, kind, _) in &self.statements {
                if !DECISIONS.contains(&kind.as_str()) {
                    continue;
                }
                let mut cur = *id;
                while let Some(&p) = parent.get(&cur) {
                    if p == f.id {
                        n += 1;
                        break;
                    }
                    cur = p;
                }
            }
            let l = &self.locations[&f.location_id];
            out.insert((self.path_of_loc(f.location_id).to_string(), f.name.clone(), l.start_line, n));
        }
        out
    }

    pub fn many_params(&self, at_least: i64) -> BTreeSet<(String, i64)> {
        self.functions
            .iter()
            .map(|f| (f, self.params.iter().filter(|&&p| p == f.id).count() as i64))
            .filter(|(_, n)| *n >= at_least)
            .map(|(f, n)| (self.signature(f), n))
            .collect()
    }

    pub fn long_functions(&self, over: i64) -> BTreeSet<(String, i64)> {
        self.functions
            .iter()
            .map(|f| {
                let l = &self.locations[&f.location_id];
                (f, l.end_line - l.start_line + 1)
            })
            .filter(|(_, n)| *n > over)
            .map(|(f, n)| (self.signature(f), n))
            .collect()
    }

    pub fn todo_comments(&self) -> BTreeSet<(String, i64, String)> {
        self.comments
            .iter()
            .filter(|(_, t)| t.contains("TODO") || t.contains("FIXME"))
            .map(|(loc, t)| (self.path_of_loc(*loc).to_string(), self.locations[loc].start_line, t.clone()))
            .collect()
    }

    pub fn line_counts(&self) -> BTreeSet<(String, i64, i64, i64, i64)> {
        self.files.values().map(|(p, total, code, comment)| (p.clone(), *total, *code, *comment, total - code - comment)).collect()
    }
}
