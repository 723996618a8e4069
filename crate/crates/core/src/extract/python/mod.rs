//! Python subset extractor.

mod lexer;
mod parser;

pub use parser::{parse_module, ParseError};

use std::collections::{BTreeSet, HashMap};

use crate::facts::Value;

use super::{FileFacts, NodePath};
use lexer::Pos;
use parser::{Expr, ExprKind, Span, Stmt, StmtKind};

/// Extracts one file. Never fails: unparseable input yields a `file` row
/// and a `diagnostic` row.
pub fn extract_file(rel_path: &str, bytes: &[u8]) -> FileFacts {
    let mut facts = FileFacts::new(rel_path, bytes);
    let root = facts.root();
    let Ok(src) = std::str::from_utf8(bytes) else {
        let text = String::from_utf8_lossy(bytes);
        let (code, comment) = rough_line_counts(&text);
        facts.file_row(code, comment);
        facts.diagnostic(&root, 1, "file is not valid UTF-8");
        return facts;
    };
    match parse_module(src) {
        Ok(module) => {
            let (code, comment) = line_counts(src, &module);
            facts.file_row(code, comment);
            let mut w = Walker { facts: &mut facts, src, stmt_index: HashMap::new() };
            let scope = Scope { parent: w.facts.file_id, function: 0, owner: w.facts.file_id, in_class: false };
            let mut path = root.clone();
            for c in &module.comments {
                let p = path.child("comment");
                let loc = w.location(&p, c.pos, c.last);
                let id = w.facts.id(&p);
                w.facts.push("comment", vec![Value::Int(id), Value::Int(w.facts.file_id), Value::Int(loc), Value::str(&c.text)]);
            }
            w.body(&module.body, &mut path, &scope);
        }
        Err(e) => {
            let (code, comment) = rough_line_counts(src);
            facts.file_row(code, comment);
            facts.diagnostic(&root, e.pos.line as i64, &format!("syntax error at {}:{}: {}", e.pos.line, e.pos.col, e.message));
        }
    }
    facts
}

/// Line classifier for files that do not parse: `#` lines are comments,
/// blank lines are blank, everything else is code.
fn rough_line_counts(src: &str) -> (i64, i64) {
    let mut code = 0;
    let mut comment = 0;
    for line in src.lines() {
        let t = line.trim();
        if t.is_empty() {
        } else if t.starts_with('#') {
            comment += 1;
        } else {
            code += 1;
        }
    }
    (code, comment)
}

/// Code lines carry at least one non-docstring token; comment lines carry a
/// `#` comment or docstring text and no code.
fn line_counts(src: &str, module: &parser::Module) -> (i64, i64) {
    let doc: BTreeSet<usize> = module.docstrings.iter().map(|s| s.start).collect();
    let mut code_lines = BTreeSet::new();
    let mut comment_lines = BTreeSet::new();
    for t in &module.tokens {
        use lexer::Tok;
        if matches!(t.kind, Tok::Newline | Tok::Indent | Tok::Dedent | Tok::Eof) {
            continue;
        }
        let lines = t.begin.line..=t.last.line;
        if doc.contains(&t.start) || module.docstrings.iter().any(|s| t.start >= s.start && t.end <= s.end) {
            comment_lines.extend(lines);
        } else {
            code_lines.extend(lines);
        }
    }
    for c in &module.comments {
        comment_lines.insert(c.pos.line);
    }
    let _ = src;
    let comment = comment_lines.difference(&code_lines).count();
    (code_lines.len() as i64, comment as i64)
}

#[derive(Clone)]
struct Scope {
    /// Parent id for statement rows.
    parent: i64,
    /// Nearest enclosing function (0 at module or class level).
    function: i64,
    /// Nearest class, function or file, for function rows.
    owner: i64,
    in_class: bool,
}

struct Walker<'a> {
    facts: &'a mut FileFacts,
    src: &'a str,
    stmt_index: HashMap<i64, i64>,
}

impl Walker<'_> {
    fn location(&mut self, node: &NodePath, begin: Pos, last: Pos) -> i64 {
        let p = node.fixed("location");
        let id = self.facts.id(&p);
        let row = vec![
            Value::Int(id),
            Value::Int(self.facts.file_id),
            Value::Int(begin.line as i64),
            Value::Int(begin.col as i64),
            Value::Int(last.line as i64),
            Value::Int(last.col as i64),
        ];
        self.facts.push("location", row);
        id
    }

    fn span_location(&mut self, node: &NodePath, span: Span) -> i64 {
        self.location(node, span.begin, span.last)
    }

    fn statement(&mut self, kind: &str, parent: i64, node: &NodePath, span: Span) -> i64 {
        let id = self.facts.id(node);
        let loc = self.span_location(node, span);
        let index = self.stmt_index.entry(parent).or_insert(0);
        let row = vec![Value::Int(id), Value::str(kind), Value::Int(parent), Value::Int(*index), Value::Int(loc)];
        *index += 1;
        self.facts.push("statement", row);
        id
    }

    fn body(&mut self, stmts: &[Stmt], path: &mut NodePath, scope: &Scope) {
        for s in stmts {
            self.stmt(s, path, scope);
        }
    }

    fn decorators(&mut self, decorators: &[parser::Decorator], target: i64, node: &mut NodePath, scope: &Scope) {
        for d in decorators {
            let p = node.child("decorator");
            let id = self.facts.id(&p);
            self.facts.push("decorator", vec![Value::Int(id), Value::Int(target), Value::str(&d.text)]);
            let mut p = p;
            self.expr(&d.expr, &mut p, scope, scope.parent);
        }
    }

    fn stmt(&mut self, s: &Stmt, path: &mut NodePath, scope: &Scope) {
        match &s.kind {
            StmtKind::Def { name, params, returns, decorators, body } => {
                let mut node = path.child("function");
                let id = self.facts.id(&node);
                let loc = self.span_location(&node, s.span);
                let kind = if scope.in_class { "method" } else { "function" };
                self.facts.push(
                    "function",
                    vec![Value::Int(id), Value::str(name), Value::str(kind), Value::Int(scope.owner), Value::Int(self.facts.file_id), Value::Int(loc)],
                );
                self.decorators(decorators, id, &mut node, scope);
                for (i, p) in params.iter().enumerate() {
                    let pp = node.child("parameter");
                    let pid = self.facts.id(&pp);
                    self.facts.push("parameter", vec![Value::Int(pid), Value::Int(id), Value::Int(i as i64), Value::str(&p.name)]);
                    // Defaults and annotations run in the enclosing scope.
                    let mut pp = pp;
                    for e in p.default.iter().chain(p.annotation.iter()) {
                        self.expr(e, &mut pp, scope, scope.parent);
                    }
                }
                if let Some(r) = returns {
                    self.expr(r, &mut node, scope, scope.parent);
                }
                let inner = Scope { parent: id, function: id, owner: id, in_class: false };
                self.body(body, &mut node, &inner);
            }
            StmtKind::Class { name, bases, keywords, decorators, body } => {
                let mut node = path.child("class");
                let id = self.facts.id(&node);
                let loc = self.span_location(&node, s.span);
                self.facts.push("class", vec![Value::Int(id), Value::str(name), Value::Int(self.facts.file_id), Value::Int(loc)]);
                for (i, b) in bases.iter().enumerate() {
                    let text = &self.src[b.span.start..b.span.end];
                    self.facts.push("class_base", vec![Value::Int(id), Value::Int(i as i64), Value::str(text)]);
                }
                self.decorators(decorators, id, &mut node, scope);
                for e in bases.iter().chain(keywords) {
                    self.expr(e, &mut node, scope, scope.parent);
                }
                let inner = Scope { parent: id, function: 0, owner: id, in_class: true };
                self.body(body, &mut node, &inner);
            }
            StmtKind::Import { names } => {
                let mut node = path.child("import");
                self.statement("import", scope.parent, &node, s.span);
                for (name, alias) in names {
                    let p = node.child("import_name");
                    let id = self.facts.id(&p);
                    self.facts.push("import", vec![Value::Int(id), Value::Int(self.facts.file_id), Value::str(name), Value::str(alias)]);
                }
            }
            StmtKind::Simple { kind, exprs } => {
                let mut node = path.child(kind);
                let id = self.statement(kind, scope.parent, &node, s.span);
                for e in exprs {
                    self.expr(e, &mut node, scope, id);
                }
            }
            StmtKind::Compound { kind, exprs, body } => {
                let mut node = path.child(kind);
                let id = self.statement(kind, scope.parent, &node, s.span);
                for e in exprs {
                    self.expr(e, &mut node, scope, id);
                }
                let inner = Scope { parent: id, ..scope.clone() };
                self.body(body, &mut node, &inner);
            }
        }
    }

    /// Walks an expression; `stmt` is the statement (or lambda) that owns
    /// any boolean-operator branches found.
    fn expr(&mut self, e: &Expr, path: &mut NodePath, scope: &Scope, stmt: i64) {
        match &e.kind {
            ExprKind::Call { callee, args } => {
                let node = path.child("call");
                let id = self.facts.id(&node);
                let loc = self.span_location(&node, e.span);
                let text = &self.src[callee.span.start..callee.span.end];
                self.facts.push("call", vec![Value::Int(id), Value::Int(scope.function), Value::str(text), Value::Int(loc)]);
                let mut node = node;
                self.expr(callee, &mut node, scope, stmt);
                for a in args {
                    self.expr(a, &mut node, scope, stmt);
                }
            }
            ExprKind::Lambda { params, body, defaults } => {
                for d in defaults {
                    self.expr(d, path, scope, stmt);
                }
                let mut node = path.child("lambda");
                let id = self.facts.id(&node);
                let loc = self.span_location(&node, e.span);
                self.facts.push(
                    "function",
                    vec![Value::Int(id), Value::str("<lambda>"), Value::str("lambda"), Value::Int(scope.owner), Value::Int(self.facts.file_id), Value::Int(loc)],
                );
                for (i, p) in params.iter().enumerate() {
                    let pp = node.child("parameter");
                    let pid = self.facts.id(&pp);
                    self.facts.push("parameter", vec![Value::Int(pid), Value::Int(id), Value::Int(i as i64), Value::str(p)]);
                }
                let inner = Scope { parent: id, function: id, owner: id, in_class: false };
                self.expr(body, &mut node, &inner, id);
            }
            ExprKind::BoolOp { ops, operands } => {
                for _ in 0..*ops {
                    let node = path.child("bool_op_branch");
                    self.statement("bool_op_branch", stmt, &node, e.span);
                }
                for o in operands {
                    self.expr(o, path, scope, stmt);
                }
            }
            ExprKind::Other(children) => {
                for c in children {
                    self.expr(c, path, scope, stmt);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count(f: &FileFacts, rel: &str) -> usize {
        f.rows.get(rel).map_or(0, Vec::len)
    }

    #[test]
    fn one_class_two_methods_one_function() {
        let src = b"class A:\n    def m1(self):\n        pass\n    def m2(self, x):\n        return x\n\ndef top():\n    pass\n";
        let f = extract_file("a.py", src);
        assert_eq!(count(&f, "class"), 1);
        assert_eq!(count(&f, "function"), 3);
        assert_eq!(count(&f, "class_base"), 0);
        assert_eq!(count(&f, "parameter"), 3);
        let kinds: Vec<String> = f.rows["function"].iter().map(|r| r[2].as_str().unwrap().to_string()).collect();
        assert_eq!(kinds.iter().filter(|k| *k == "method").count(), 2);
    }

    #[test]
    fn empty_file_has_only_a_file_row() {
        let f = extract_file("empty.py", b"");
        assert_eq!(f.rows.len(), 1);
        let row = &f.rows["file"][0];
        assert_eq!(row[3], Value::Int(0));
    }

    #[test]
    fn line_accounting() {
        let src = b"\"\"\"Module doc.\n\nMore.\n\"\"\"\n# comment\nx = 1  # trailing\n\ny = '''not a\ndocstring'''\n";
        let f = extract_file("m.py", src);
        let row = &f.rows["file"][0];
        // 9 lines: 4 docstring + 1 comment + 1 code + 1 blank + 2 code.
        assert_eq!(row[3], Value::Int(9));
        assert_eq!(row[4], Value::Int(3));
        assert_eq!(row[5], Value::Int(5));
    }

    #[test]
    fn malformed_file_gets_a_diagnostic() {
        let f = extract_file("bad.py", b"def f(:\n    pass\n");
        assert_eq!(count(&f, "file"), 1);
        assert_eq!(count(&f, "diagnostic"), 1);
        assert_eq!(count(&f, "function"), 0);
        assert!(f.malformed);
    }

    #[test]
    fn bool_ops_and_lambdas() {
        let src = b"def f(a, b, c):\n    if a and b or c:\n        g = lambda x: x or a\n";
        let f = extract_file("b.py", src);
        let branches = f.rows["statement"].iter().filter(|r| r[1] == Value::str("bool_op_branch")).count();
        assert_eq!(branches, 3);
        assert_eq!(count(&f, "function"), 2);
    }

    #[test]
    fn sibling_statement_indexes_are_dense() {
        let src = b"def f():\n    a = 1\n    if a:\n        b()\n        c()\n    return a\n";
        let f = extract_file("c.py", src);
        let mut by_parent: HashMap<i64, Vec<i64>> = HashMap::new();
        for r in &f.rows["statement"] {
            by_parent.entry(r[2].as_int().unwrap()).or_default().push(r[3].as_int().unwrap());
        }
        for (_, mut v) in by_parent {
            v.sort();
            assert_eq!(v, (0..v.len() as i64).collect::<Vec<_>>());
        }
    }
}
