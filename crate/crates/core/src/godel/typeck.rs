//! Type checking against a schema catalog, producing a typed tree.

use std::collections::{BTreeMap, BTreeSet};

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;

use super::ast::{self, CmpOp, CondKind, ExprKind, FnDecl, Module, StmtKind, TypeName};
use super::lexer::Pos;
use super::Diagnostic;
use crate::datalog::{AggFn, ArithOp, BuiltinFn};
use crate::facts::ColumnType;
use crate::Language;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Ty {
    Int,
    Str,
    Bool,
    Schema(String),
    Set(String),
    Db(Language),
    Unit,
}

impl std::fmt::Display for Ty {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Ty::Int => f.write_str("int"),
            Ty::Str => f.write_str("string"),
            Ty::Bool => f.write_str("bool"),
            Ty::Schema(s) => f.write_str(s),
            Ty::Set(s) => write!(f, "*{s}"),
            Ty::Db(l) => f.write_str(db_type_name(*l)),
            Ty::Unit => f.write_str("()"),
        }
    }
}

pub fn db_type_name(l: Language) -> &'static str {
    match l {
        Language::Python => "PythonDB",
        Language::Xml => "XmlDB",
    }
}

impl Ty {
    pub fn column_type(&self) -> ColumnType {
        match self {
            Ty::Str => ColumnType::Str,
            _ => ColumnType::Int,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemaOrigin {
    /// A stored relation; membership is the relation itself.
    Raw,
    /// Membership defined by a `@data_constraint` `__all__` method.
    Derived,
    /// `extends` without `__all__`: every parent member.
    Inherited,
}

#[derive(Debug, Clone)]
pub struct SchemaInfo {
    pub name: String,
    pub parent: Option<String>,
    pub fields: Vec<(String, Ty)>,
    pub origin: SchemaOrigin,
    pub methods: BTreeMap<String, String>,
    pub pos: Pos,
}

impl SchemaInfo {
    pub fn field_index(&self, name: &str) -> Option<usize> {
        self.fields.iter().position(|(n, _)| n == name)
    }

    pub fn id_index(&self) -> Option<usize> {
        self.field_index("id")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FnKind {
    /// `-> bool`: a relation over the parameters.
    Predicate,
    /// `-> int | string | Schema`: parameters plus one result column.
    Value,
    /// `-> *Schema`: parameters plus one element id column.
    Set,
    /// `__all__` of a schema; lowers to the membership relation.
    Constraint,
    /// Returns a database handle; has no relation.
    Db,
    Main,
}

#[derive(Debug, Clone)]
pub struct TFn {
    pub key: String,
    pub name: String,
    pub owner: Option<String>,
    pub params: Vec<(String, Ty)>,
    pub ret: Ty,
    pub kind: FnKind,
    pub body: Vec<TStmt>,
    pub library: bool,
    pub pos: Pos,
}

impl TFn {
    /// Parameters that become relation columns.
    pub fn column_params(&self) -> impl Iterator<Item = &(String, Ty)> {
        self.params.iter().filter(|(_, t)| !matches!(t, Ty::Db(_)))
    }
}

#[derive(Debug, Clone)]
pub enum TStmt {
    For(Vec<(String, TExpr)>, Vec<TStmt>),
    If(Vec<TCond>, Vec<TStmt>),
    Let(Vec<(String, TExpr)>, Vec<TStmt>),
    Yield { schema: String, fields: Vec<TExpr> },
    ReturnTrue,
    ReturnFalse,
    Return(TExpr),
    Output(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrOp {
    StartsWith,
    EndsWith,
    Contains,
}

#[derive(Debug, Clone)]
pub enum TCond {
    Cmp(CmpOp, TExpr, TExpr),
    Test { negated: bool, expr: TExpr },
    /// `name in expr`; `fresh` when the name is introduced here.
    In { name: String, expr: TExpr, fresh: bool },
}

#[derive(Debug, Clone)]
pub struct TExpr {
    pub ty: Ty,
    pub kind: TK,
    pub pos: Pos,
}

#[derive(Debug, Clone)]
pub enum TK {
    Int(i64),
    Str(String),
    Var(String),
    Field { recv: Box<TExpr>, index: usize },
    Member(String),
    Call { func: String, args: Vec<TExpr> },
    Method { func: String, recv: Box<TExpr>, args: Vec<TExpr> },
    StrTest { op: StrOp, recv: Box<TExpr>, arg: Box<TExpr> },
    Builtin { func: BuiltinFn, args: Vec<TExpr> },
    KeyEq(Box<TExpr>, Box<TExpr>),
    Binary { op: ArithOp, left: Box<TExpr>, right: Box<TExpr> },
    Agg { func: AggFn, arg: Box<TExpr> },
    Db,
}

/// Schemas and functions visible to scripts of one language.
#[derive(Debug, Clone)]
pub struct Catalog {
    pub language: Language,
    pub schemas: BTreeMap<String, SchemaInfo>,
    pub functions: BTreeMap<String, TFn>,
}

/// A checked script together with the catalog it was checked against.
#[derive(Debug, Clone)]
pub struct TypedProgram {
    pub catalog: Catalog,
    /// Output functions of `main`, in order.
    pub outputs: Vec<String>,
    pub has_main: bool,
}

impl TypedProgram {
    pub fn schema(&self, name: &str) -> &SchemaInfo {
        &self.catalog.schemas[name]
    }

    pub fn function(&self, key: &str) -> &TFn {
        &self.catalog.functions[key]
    }
}

impl Catalog {
    /// The catalog of raw relations, before any library is added.
    pub fn raw(language: Language, relations: &[crate::facts::RelationSchema]) -> Self {
        let mut schemas = BTreeMap::new();
        for r in relations {
            let fields = r
                .columns
                .iter()
                .map(|c| (c.name.clone(), if c.ty == ColumnType::Str { Ty::Str } else { Ty::Int }))
                .collect();
            schemas.insert(
                r.name.clone(),
                SchemaInfo {
                    name: r.name.clone(),
                    parent: None,
                    fields,
                    origin: SchemaOrigin::Raw,
                    methods: BTreeMap::new(),
                    pos: Pos::default(),
                },
            );
        }
        Catalog { language, schemas, functions: BTreeMap::new() }
    }

    pub fn ancestors<'a>(&'a self, schema: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        let mut cur = Some(schema);
        std::iter::from_fn(move || {
            let s = cur?;
            cur = self.schemas.get(s).and_then(|i| i.parent.as_deref());
            Some(s)
        })
    }

    /// Whether `sub` is `sup` or a descendant of it.
    pub fn is_subtype(&self, sub: &str, sup: &str) -> bool {
        self.ancestors(sub).any(|s| s == sup)
    }

    fn root(&self, s: &str) -> String {
        self.ancestors(s).last().unwrap_or(s).to_string()
    }

    pub fn lookup_method(&self, schema: &str, method: &str) -> Option<&TFn> {
        self.ancestors(schema).find_map(|s| self.schemas[s].methods.get(method)).map(|k| &self.functions[k])
    }
}

pub fn method_key(schema: &str, method: &str) -> String {
    format!("{schema}.{method}")
}

struct Checker<'a> {
    cat: &'a mut Catalog,
    library: bool,
    errors: Vec<Diagnostic>,
}

type Scope = Vec<(String, Ty)>;

fn lookup<'s>(scope: &'s Scope, name: &str) -> Option<&'s Ty> {
    scope.iter().rev().find(|(n, _)| n == name).map(|(_, t)| t)
}

/// Adds the declarations of `module` to `catalog` and checks them.
/// With `library` set, the module may not contain `main`.
pub fn check_module(module: &Module, catalog: &mut Catalog, library: bool) -> Result<Vec<String>, Vec<Diagnostic>> {
    let mut c = Checker { cat: catalog, library, errors: Vec::new() };
    c.uses(module);
    c.declare_schemas(module);
    let bodies = c.declare_functions(module);
    if !c.errors.is_empty() {
        return Err(c.errors);
    }
    let mut outputs = Vec::new();
    for (key, decl) in bodies {
        let body = c.check_body(&key, decl, &mut outputs);
        if let Some(f) = c.cat.functions.get_mut(&key) {
            f.body = body;
        }
    }
    c.check_recursion();
    c.check_schema_cycles();
    if c.errors.is_empty() {
        Ok(outputs)
    } else {
        c.errors.sort_by_key(|d| d.pos);
        Err(c.errors)
    }
}

/// Checks a script against a library catalog.
pub fn typecheck(module: &Module, catalog: &Catalog) -> Result<TypedProgram, Vec<Diagnostic>> {
    let mut cat = catalog.clone();
    let outputs = check_module(module, &mut cat, false)?;
    Ok(TypedProgram { catalog: cat, outputs, has_main: module.main().is_some() })
}

impl<'a> Checker<'a> {
    fn error(&mut self, pos: Pos, msg: impl Into<String>) {
        self.errors.push(Diagnostic::new(pos, msg.into()));
    }

    fn uses(&mut self, module: &Module) {
        for u in &module.uses {
            let lang = self.cat.language.name();
            let ok = u.segments.len() == 2 && u.segments[0] == "coref" && u.segments[1] == lang;
            if !ok {
                let path = u.segments.join("::");
                self.error(u.pos, format!("unknown library `{path}` (this catalog provides `coref::{lang}`)"));
            }
        }
    }

    fn prim(&mut self, t: &TypeName, pos: Pos) -> Option<Ty> {
        match t {
            TypeName::Named(n) if n == "int" => Some(Ty::Int),
            TypeName::Named(n) if n == "string" => Some(Ty::Str),
            _ => {
                self.error(pos, "schema fields must be `int` or `string`");
                None
            }
        }
    }

    fn resolve_type(&mut self, t: &TypeName, pos: Pos) -> Option<Ty> {
        match t {
            TypeName::Unit => Some(Ty::Unit),
            TypeName::Set(s) => {
                if self.cat.schemas.contains_key(s) {
                    Some(Ty::Set(s.clone()))
                } else {
                    self.error(pos, format!("unknown schema `{s}`"));
                    None
                }
            }
            TypeName::Named(n) => match n.as_str() {
                "int" => Some(Ty::Int),
                "string" => Some(Ty::Str),
                "bool" => Some(Ty::Bool),
                _ if n == db_type_name(self.cat.language) => Some(Ty::Db(self.cat.language)),
                _ if self.cat.schemas.contains_key(n) => Some(Ty::Schema(n.clone())),
                _ => {
                    self.error(pos, format!("unknown type `{n}`"));
                    None
                }
            },
        }
    }

    fn declare_schemas(&mut self, module: &Module) {
        for s in &module.schemas {
            if self.cat.schemas.contains_key(&s.name) {
                self.error(s.pos, format!("schema `{}` is already defined", s.name));
                continue;
            }
            let mut fields = Vec::new();
            if let Some(p) = &s.extends {
                match self.cat.schemas.get(p) {
                    Some(parent) => fields = parent.fields.clone(),
                    None => {
                        self.error(s.pos, format!("unknown schema `{p}`"));
                        continue;
                    }
                }
            }
            for f in &s.fields {
                if fields.iter().any(|(n, _)| *n == f.name) {
                    self.error(f.pos, format!("field `{}` is declared twice", f.name));
                    continue;
                }
                if let Some(t) = self.prim(&f.ty, f.pos) {
                    fields.push((f.name.clone(), t));
                }
            }
            if !fields.iter().any(|(n, t)| n == "id" && *t == Ty::Int) {
                self.error(s.pos, format!("schema `{}` needs an `id: int` field", s.name));
            }
            let info = SchemaInfo {
                name: s.name.clone(),
                parent: s.extends.clone(),
                fields,
                origin: if s.extends.is_some() { SchemaOrigin::Inherited } else { SchemaOrigin::Derived },
                methods: BTreeMap::new(),
                pos: s.pos,
            };
            self.cat.schemas.insert(s.name.clone(), info);
        }
    }

    fn signature(&mut self, d: &FnDecl, owner: Option<&str>) -> Option<(Vec<(String, Ty)>, Ty)> {
        let mut params = Vec::new();
        for (i, p) in d.params.iter().enumerate() {
            let ty = match (&p.ty, owner) {
                (None, Some(o)) if i == 0 => Ty::Schema(o.to_string()),
                (None, _) => {
                    self.error(p.pos, "`self` is only allowed as the first parameter of a method");
                    return None;
                }
                (Some(t), _) => self.resolve_type(t, p.pos)?,
            };
            if matches!(ty, Ty::Bool | Ty::Set(_) | Ty::Unit) {
                self.error(p.pos, format!("parameter `{}` cannot have type {ty}", p.name));
                return None;
            }
            if params.iter().any(|(n, _)| *n == p.name) {
                self.error(p.pos, format!("parameter `{}` is declared twice", p.name));
                return None;
            }
            params.push((p.name.clone(), ty));
        }
        let ret = self.resolve_type(&d.ret, d.pos)?;
        Some((params, ret))
    }

    fn declare_functions<'m>(&mut self, module: &'m Module) -> Vec<(String, &'m FnDecl)> {
        let mut bodies = Vec::new();
        for d in &module.functions {
            if d.data_constraint {
                self.error(d.pos, "`@data_constraint` is only allowed on `__all__` methods");
                continue;
            }
            if self.cat.functions.contains_key(&d.name) || self.cat.schemas.contains_key(&d.name) {
                self.error(d.pos, format!("`{}` is already defined", d.name));
                continue;
            }
            if d.name == "main" {
                if self.library {
                    self.error(d.pos, "a library cannot define `main`");
                    continue;
                }
                if !d.params.is_empty() || d.ret != TypeName::Unit {
                    self.error(d.pos, "`main` takes no parameters and returns nothing");
                    continue;
                }
            }
            let Some((params, ret)) = self.signature(d, None) else { continue };
            let kind = match (&ret, d.name.as_str()) {
                (_, "main") => FnKind::Main,
                (Ty::Bool, _) => FnKind::Predicate,
                (Ty::Set(_), _) => FnKind::Set,
                (Ty::Db(_), _) => FnKind::Db,
                (Ty::Unit, _) => {
                    self.error(d.pos, format!("function `{}` needs a return type", d.name));
                    continue;
                }
                _ => FnKind::Value,
            };
            let f = TFn {
                key: d.name.clone(),
                name: d.name.clone(),
                owner: None,
                params,
                ret,
                kind,
                body: Vec::new(),
                library: self.library,
                pos: d.pos,
            };
            self.cat.functions.insert(d.name.clone(), f);
            bodies.push((d.name.clone(), d));
        }
        for imp in &module.impls {
            let Some(info) = self.cat.schemas.get(&imp.target) else {
                self.error(imp.pos, format!("unknown schema `{}`", imp.target));
                continue;
            };
            if info.origin == SchemaOrigin::Raw {
                self.error(imp.pos, format!("`{}` is a stored relation and cannot have methods", imp.target));
                continue;
            }
            for d in &imp.methods {
                if d.name == "__all__" {
                    self.declare_constraint(&imp.target, d, &mut bodies);
                    continue;
                }
                if d.data_constraint {
                    self.error(d.pos, "`@data_constraint` is only allowed on `__all__` methods");
                    continue;
                }
                if !d.has_self() {
                    self.error(d.pos, format!("method `{}` must take `self` first", d.name));
                    continue;
                }
                if self.cat.schemas[&imp.target].methods.contains_key(&d.name) {
                    self.error(d.pos, format!("method `{}` is already defined on `{}`", d.name, imp.target));
                    continue;
                }
                let Some((params, ret)) = self.signature(d, Some(&imp.target)) else { continue };
                let kind = match &ret {
                    Ty::Bool => FnKind::Predicate,
                    Ty::Set(_) => FnKind::Set,
                    Ty::Int | Ty::Str | Ty::Schema(_) => FnKind::Value,
                    _ => {
                        self.error(d.pos, format!("method `{}` cannot return {ret}", d.name));
                        continue;
                    }
                };
                let key = method_key(&imp.target, &d.name);
                let f = TFn {
                    key: key.clone(),
                    name: d.name.clone(),
                    owner: Some(imp.target.clone()),
                    params,
                    ret,
                    kind,
                    body: Vec::new(),
                    library: self.library,
                    pos: d.pos,
                };
                self.cat.functions.insert(key.clone(), f);
                self.cat.schemas.get_mut(&imp.target).expect("checked").methods.insert(d.name.clone(), key.clone());
                bodies.push((key, d));
            }
        }
        bodies
    }

    fn declare_constraint<'m>(&mut self, target: &str, d: &'m FnDecl, bodies: &mut Vec<(String, &'m FnDecl)>) {
        if !d.data_constraint {
            self.error(d.pos, "`__all__` must be annotated with `@data_constraint`");
            return;
        }
        if d.ret != TypeName::Set(target.to_string()) {
            self.error(d.pos, format!("`__all__` of `{target}` must return `*{target}`"));
            return;
        }
        let Some((params, ret)) = self.signature(d, None) else { return };
        if params.iter().any(|(_, t)| !matches!(t, Ty::Db(_))) {
            self.error(d.pos, "`__all__` may only take a database parameter");
            return;
        }
        let info = self.cat.schemas.get_mut(target).expect("checked");
        if info.origin == SchemaOrigin::Derived && self.cat.functions.contains_key(target) {
            self.error(d.pos, format!("`{target}` already has `__all__`"));
            return;
        }
        info.origin = SchemaOrigin::Derived;
        let f = TFn {
            key: target.to_string(),
            name: "__all__".into(),
            owner: Some(target.to_string()),
            params,
            ret,
            kind: FnKind::Constraint,
            body: Vec::new(),
            library: self.library,
            pos: d.pos,
        };
        self.cat.functions.insert(target.to_string(), f);
        bodies.push((target.to_string(), d));
    }

    fn check_body(&mut self, key: &str, d: &FnDecl, outputs: &mut Vec<String>) -> Vec<TStmt> {
        let f = self.cat.functions[key].clone();
        let mut scope: Scope = f.params.clone();
        if f.kind == FnKind::Main {
            let mut out = Vec::new();
            for s in &d.body {
                match self.main_stmt(s) {
                    Some(k) => {
                        outputs.push(k.clone());
                        out.push(TStmt::Output(k));
                    }
                    None => continue,
                }
            }
            return out;
        }
        self.block(&d.body, &mut scope, &f)
    }

    fn main_stmt(&mut self, s: &ast::Stmt) -> Option<String> {
        let StmtKind::Expr(ast::Expr { kind: ExprKind::Call { name, args }, .. }) = &s.kind else {
            self.error(s.pos, "`main` may only contain `output(...)` calls");
            return None;
        };
        if name != "output" || args.len() != 1 {
            self.error(s.pos, "`main` may only contain `output(...)` calls");
            return None;
        }
        let ExprKind::Call { name: f, args: inner } = &args[0].kind else {
            self.error(args[0].pos, "`output` takes a call of a bool function, such as `output(f())`");
            return None;
        };
        match self.cat.functions.get(f) {
            Some(tf) if tf.kind == FnKind::Predicate && inner.is_empty() => Some(f.clone()),
            Some(tf) if tf.kind == FnKind::Predicate => {
                self.error(args[0].pos, format!("`output({f}(...))` takes no arguments; every parameter of `{f}` becomes a column"));
                None
            }
            Some(_) => {
                self.error(args[0].pos, format!("`{f}` does not return bool and cannot be output"));
                None
            }
            None => {
                self.error(args[0].pos, format!("unknown function `{f}`"));
                None
            }
        }
    }

    fn block(&mut self, stmts: &[ast::Stmt], scope: &mut Scope, f: &TFn) -> Vec<TStmt> {
        let mut out = Vec::new();
        for s in stmts {
            let depth = scope.len();
            if let Some(t) = self.stmt(s, scope, f) {
                out.push(t);
            }
            scope.truncate(depth);
        }
        out
    }

    fn stmt(&mut self, s: &ast::Stmt, scope: &mut Scope, f: &TFn) -> Option<TStmt> {
        match &s.kind {
            StmtKind::For(binds, body) | StmtKind::Let(binds, body) => {
                let is_for = matches!(s.kind, StmtKind::For(..));
                let mut tb = Vec::new();
                for b in binds {
                    let e = self.expr(&b.expr, scope)?;
                    let ty = if is_for {
                        match &e.ty {
                            Ty::Set(s) => Ty::Schema(s.clone()),
                            Ty::Int | Ty::Str | Ty::Schema(_) => e.ty.clone(),
                            other => {
                                self.error(b.expr.pos, format!("cannot iterate over {other}"));
                                return None;
                            }
                        }
                    } else {
                        if matches!(e.ty, Ty::Bool | Ty::Unit) {
                            self.error(b.expr.pos, format!("cannot bind a value of type {}", e.ty));
                            return None;
                        }
                        e.ty.clone()
                    };
                    scope.push((b.name.clone(), ty));
                    tb.push((b.name.clone(), e));
                }
                let body = self.block(body, scope, f);
                Some(if is_for { TStmt::For(tb, body) } else { TStmt::Let(tb, body) })
            }
            StmtKind::If(conds, body) => {
                let mut tc = Vec::new();
                for c in conds {
                    tc.push(self.cond(c, scope)?);
                }
                let body = self.block(body, scope, f);
                Some(TStmt::If(tc, body))
            }
            StmtKind::Yield { schema, fields } => self.yield_stmt(s.pos, schema, fields, scope, f),
            StmtKind::Return(e) => {
                if let ExprKind::Bool(b) = e.kind {
                    if f.kind != FnKind::Predicate {
                        self.error(e.pos, format!("`return {b}` in a function returning {}", f.ret));
                        return None;
                    }
                    return Some(if b { TStmt::ReturnTrue } else { TStmt::ReturnFalse });
                }
                if f.kind == FnKind::Predicate {
                    self.error(e.pos, "a bool function returns `true` or `false`");
                    return None;
                }
                let te = self.expr(e, scope)?;
                let ok = match (&f.ret, &te.ty) {
                    (Ty::Set(s), Ty::Schema(t) | Ty::Set(t)) => self.cat.is_subtype(t, s),
                    (Ty::Schema(s), Ty::Schema(t)) => self.cat.is_subtype(t, s),
                    (a, b) => a == b,
                };
                if !ok || f.kind == FnKind::Constraint {
                    self.error(e.pos, format!("returns {} where {} is expected", te.ty, f.ret));
                    return None;
                }
                Some(TStmt::Return(te))
            }
            StmtKind::Expr(_) => {
                self.error(s.pos, "only `main` may contain call statements");
                None
            }
        }
    }

    fn yield_stmt(&mut self, pos: Pos, schema: &str, fields: &[(String, ast::Expr)], scope: &mut Scope, f: &TFn) -> Option<TStmt> {
        let target = match &f.ret {
            Ty::Set(s) => s.clone(),
            _ => {
                self.error(pos, "`yield` is only allowed in functions returning a set");
                return None;
            }
        };
        let Some(info) = self.cat.schemas.get(schema).cloned() else {
            self.error(pos, format!("unknown schema `{schema}`"));
            return None;
        };
        if !self.cat.is_subtype(schema, &target) || (f.kind == FnKind::Constraint && schema != target) {
            self.error(pos, format!("yields {schema} where {target} is expected"));
            return None;
        }
        let mut slots: Vec<Option<TExpr>> = vec![None; info.fields.len()];
        for (name, e) in fields {
            let Some(i) = info.field_index(name) else {
                self.error(e.pos, format!("schema `{schema}` has no field `{name}`"));
                return None;
            };
            let te = self.expr(e, scope)?;
            if te.ty != info.fields[i].1 {
                self.error(e.pos, format!("field `{name}` of `{schema}` is {} but the value is {}", info.fields[i].1, te.ty));
                return None;
            }
            if slots[i].replace(te).is_some() {
                self.error(e.pos, format!("field `{name}` is given twice"));
                return None;
            }
        }
        let missing: Vec<&str> = info.fields.iter().zip(&slots).filter(|(_, s)| s.is_none()).map(|((n, _), _)| n.as_str()).collect();
        if !missing.is_empty() {
            self.error(pos, format!("yield of `{schema}` does not cover field(s) {}", missing.join(", ")));
            return None;
        }
        Some(TStmt::Yield { schema: schema.to_string(), fields: slots.into_iter().map(|s| s.expect("filled")).collect() })
    }

    fn related(&self, a: &str, b: &str) -> bool {
        self.cat.root(a) == self.cat.root(b)
    }

    fn cond(&mut self, c: &ast::Cond, scope: &mut Scope) -> Option<TCond> {
        match &c.kind {
            CondKind::Cmp(op, l, r) => {
                let tl = self.expr(l, scope)?;
                let tr = self.expr(r, scope)?;
                let ok = match (&tl.ty, &tr.ty) {
                    (Ty::Int, Ty::Int) | (Ty::Str, Ty::Str) => true,
                    (Ty::Schema(a), Ty::Schema(b)) => matches!(op, CmpOp::Eq | CmpOp::Ne) && self.related(a, b),
                    _ => false,
                };
                if !ok {
                    self.error(c.pos, format!("type mismatch: `{}` compares {} with {}", op.symbol(), tl.ty, tr.ty));
                    return None;
                }
                Some(TCond::Cmp(*op, tl, tr))
            }
            CondKind::Test { negated, expr } => {
                let te = self.expr(expr, scope)?;
                if te.ty != Ty::Bool {
                    self.error(c.pos, format!("condition has type {}, expected bool", te.ty));
                    return None;
                }
                Some(TCond::Test { negated: *negated, expr: te })
            }
            CondKind::In { name, expr } => {
                let te = self.expr(expr, scope)?;
                let elem = match &te.ty {
                    Ty::Set(s) => Ty::Schema(s.clone()),
                    Ty::Int | Ty::Str | Ty::Schema(_) => te.ty.clone(),
                    other => {
                        self.error(expr.pos, format!("`in` needs a set or a value, found {other}"));
                        return None;
                    }
                };
                match lookup(scope, name).cloned() {
                    Some(existing) => {
                        let ok = match (&existing, &elem) {
                            (Ty::Schema(a), Ty::Schema(b)) => self.related(a, b),
                            (a, b) => a == b,
                        };
                        if !ok {
                            self.error(c.pos, format!("type mismatch: `{name}` is {existing} but the set holds {elem}"));
                            return None;
                        }
                        Some(TCond::In { name: name.clone(), expr: te, fresh: false })
                    }
                    None => {
                        scope.push((name.clone(), elem));
                        Some(TCond::In { name: name.clone(), expr: te, fresh: true })
                    }
                }
            }
        }
    }

    fn exprs(&mut self, es: &[ast::Expr], scope: &mut Scope) -> Option<Vec<TExpr>> {
        let mut out = Vec::new();
        for e in es {
            out.push(self.expr(e, scope)?);
        }
        Some(out)
    }

    fn check_args(&mut self, pos: Pos, what: &str, params: &[(String, Ty)], args: &[TExpr]) -> bool {
        if params.len() != args.len() {
            self.error(pos, format!("{what} takes {} argument(s) but {} were given", params.len(), args.len()));
            return false;
        }
        for ((pname, pty), a) in params.iter().zip(args) {
            let ok = match (pty, &a.ty) {
                (Ty::Schema(p), Ty::Schema(t)) => self.related(p, t),
                (p, t) => p == t,
            };
            if !ok {
                self.error(a.pos, format!("argument `{pname}` of {what} expects {pty}, found {}", a.ty));
                return false;
            }
        }
        true
    }

    fn expr(&mut self, e: &ast::Expr, scope: &mut Scope) -> Option<TExpr> {
        let pos = e.pos;
        let mk = |ty: Ty, kind: TK| Some(TExpr { ty, kind, pos });
        match &e.kind {
            ExprKind::Int(v) => mk(Ty::Int, TK::Int(*v)),
            ExprKind::Str(s) => mk(Ty::Str, TK::Str(s.clone())),
            ExprKind::Bool(_) => {
                self.error(pos, "boolean literals may only be returned");
                None
            }
            ExprKind::Var(n) => match lookup(scope, n) {
                Some(Ty::Db(l)) => mk(Ty::Db(*l), TK::Db),
                Some(t) => mk(t.clone(), TK::Var(n.clone())),
                None => {
                    self.error(pos, format!("unknown variable `{n}`"));
                    None
                }
            },
            ExprKind::SelfRef => match lookup(scope, "self") {
                Some(t) => mk(t.clone(), TK::Var("self".into())),
                None => {
                    self.error(pos, "`self` outside of a method");
                    None
                }
            },
            ExprKind::Binary { op, left, right } => {
                let l = self.expr(left, scope)?;
                let r = self.expr(right, scope)?;
                let ty = match (&l.ty, &r.ty, op) {
                    (Ty::Int, Ty::Int, _) => Ty::Int,
                    (Ty::Str, Ty::Str, ArithOp::Add) => Ty::Str,
                    _ => {
                        self.error(pos, format!("type mismatch: arithmetic on {} and {}", l.ty, r.ty));
                        return None;
                    }
                };
                mk(ty, TK::Binary { op: *op, left: Box::new(l), right: Box::new(r) })
            }
            ExprKind::Path { segments, args } => {
                let args = self.exprs(args, scope)?;
                let lang = self.cat.language;
                if segments.len() == 2 && segments[0] == db_type_name(lang) && segments[1] == "load" {
                    if args.len() != 1 || args[0].ty != Ty::Str {
                        self.error(pos, format!("`{}::load` takes one string", segments[0]));
                        return None;
                    }
                    return mk(Ty::Db(lang), TK::Db);
                }
                self.error(pos, format!("unknown path `{}`", segments.join("::")));
                None
            }
            ExprKind::Field { recv, name } => {
                let r = self.expr(recv, scope)?;
                let Ty::Schema(s) = &r.ty else {
                    self.error(pos, format!("{} has no fields", r.ty));
                    return None;
                };
                let info = &self.cat.schemas[s];
                let Some(index) = info.field_index(name) else {
                    let s = s.clone();
                    self.error(pos, format!("schema `{s}` has no field `{name}`"));
                    return None;
                };
                let ty = info.fields[index].1.clone();
                mk(ty, TK::Field { recv: Box::new(r), index })
            }
            ExprKind::Call { name, args } => self.call(pos, name, args, scope),
            ExprKind::Method { recv, name, args } => self.method(pos, recv, name, args, scope),
        }
    }

    fn call(&mut self, pos: Pos, name: &str, args: &[ast::Expr], scope: &mut Scope) -> Option<TExpr> {
        let mk = |ty: Ty, kind: TK| Some(TExpr { ty, kind, pos });
        if let Some(f) = self.cat.functions.get(name).filter(|f| f.owner.is_none()).cloned() {
            let targs = self.exprs(args, scope)?;
            if f.kind == FnKind::Main {
                self.error(pos, "`main` cannot be called");
                return None;
            }
            if !self.check_args(pos, &format!("`{name}`"), &f.params, &targs) {
                return None;
            }
            if f.kind == FnKind::Db {
                return mk(f.ret.clone(), TK::Db);
            }
            return mk(f.ret.clone(), TK::Call { func: f.key.clone(), args: targs });
        }
        if self.cat.schemas.contains_key(name) {
            let targs = self.exprs(args, scope)?;
            if targs.len() > 1 || targs.iter().any(|a| !matches!(a.ty, Ty::Db(_))) {
                self.error(pos, format!("`{name}(...)` takes at most a database argument"));
                return None;
            }
            return mk(Ty::Set(name.to_string()), TK::Member(name.to_string()));
        }
        let func = match name {
            "count" => Some(AggFn::Count),
            "sum" => Some(AggFn::Sum),
            "min" => Some(AggFn::Min),
            "max" => Some(AggFn::Max),
            _ => None,
        };
        if let Some(func) = func {
            if args.len() != 1 {
                self.error(pos, format!("`{name}` takes one argument"));
                return None;
            }
            let a = self.expr(&args[0], scope)?;
            let ty = match (func, &a.ty) {
                (AggFn::Count, Ty::Int | Ty::Str | Ty::Schema(_) | Ty::Set(_)) => Ty::Int,
                (AggFn::Sum, Ty::Int) => Ty::Int,
                (AggFn::Min | AggFn::Max, Ty::Int | Ty::Str) => a.ty.clone(),
                (_, t) => {
                    self.error(pos, format!("`{name}` cannot aggregate {t}"));
                    return None;
                }
            };
            return mk(ty, TK::Agg { func, arg: Box::new(a) });
        }
        if name == "output" {
            self.error(pos, "`output` may only be used in `main`");
            return None;
        }
        self.error(pos, format!("unknown function `{name}`"));
        None
    }

    fn method(&mut self, pos: Pos, recv: &ast::Expr, name: &str, args: &[ast::Expr], scope: &mut Scope) -> Option<TExpr> {
        let mk = |ty: Ty, kind: TK| Some(TExpr { ty, kind, pos });
        let r = self.expr(recv, scope)?;
        let targs = self.exprs(args, scope)?;
        match &r.ty {
            Ty::Str => {
                let arity = |c: &mut Self, n: usize| {
                    let ok = targs.len() == n && targs.iter().all(|a| a.ty == Ty::Str);
                    if !ok {
                        c.error(pos, format!("`{name}` takes {n} string argument(s)"));
                    }
                    ok
                };
                let op = match name {
                    "startsWith" => Some(StrOp::StartsWith),
                    "endsWith" => Some(StrOp::EndsWith),
                    "contains" => Some(StrOp::Contains),
                    _ => None,
                };
                if let Some(op) = op {
                    if !arity(self, 1) {
                        return None;
                    }
                    let arg = targs.into_iter().next().expect("one arg");
                    return mk(Ty::Bool, TK::StrTest { op, recv: Box::new(r), arg: Box::new(arg) });
                }
                match name {
                    "length" if arity(self, 0) => mk(Ty::Int, TK::Builtin { func: BuiltinFn::StrLen, args: vec![r] }),
                    "substringAfterLast" if arity(self, 1) => {
                        let mut a = vec![r];
                        a.extend(targs);
                        mk(Ty::Str, TK::Builtin { func: BuiltinFn::AfterLast, args: a })
                    }
                    "length" | "substringAfterLast" => None,
                    _ => {
                        self.error(pos, format!("unknown method `{name}` on string"));
                        None
                    }
                }
            }
            Ty::Int => {
                if name == "toString" && targs.is_empty() {
                    return mk(Ty::Str, TK::Builtin { func: BuiltinFn::ToStr, args: vec![r] });
                }
                self.error(pos, format!("unknown method `{name}` on int"));
                None
            }
            Ty::Schema(s) | Ty::Set(s) => {
                let s = s.clone();
                if name == "key_eq" {
                    if targs.len() != 1 {
                        self.error(pos, "`key_eq` takes one argument");
                        return None;
                    }
                    let other = targs.into_iter().next().expect("one arg");
                    let ok = match (&r.ty, &other.ty) {
                        (Ty::Schema(a), Ty::Schema(b)) => self.related(a, b),
                        _ => false,
                    };
                    if !ok {
                        self.error(pos, format!("`key_eq` compares {} with {}", r.ty, other.ty));
                        return None;
                    }
                    if self.cat.schemas[&s].id_index().is_none() {
                        self.error(pos, format!("`{s}` has no `id` field"));
                        return None;
                    }
                    return mk(Ty::Bool, TK::KeyEq(Box::new(r), Box::new(other)));
                }
                let Some(f) = self.cat.lookup_method(&s, name).cloned() else {
                    self.error(pos, format!("unknown method `{name}` on `{s}`"));
                    return None;
                };
                if !self.check_args(pos, &format!("`{s}.{name}`"), &f.params[1..], &targs) {
                    return None;
                }
                mk(f.ret.clone(), TK::Method { func: f.key.clone(), recv: Box::new(r), args: targs })
            }
            other => {
                self.error(pos, format!("{other} has no methods"));
                None
            }
        }
    }

    fn check_recursion(&mut self) {
        let cat = &*self.cat;
        let keys: Vec<&String> = cat.functions.keys().collect();
        let index: BTreeMap<&str, usize> = keys.iter().enumerate().map(|(i, k)| (k.as_str(), i)).collect();
        let mut g: DiGraph<(), ()> = DiGraph::new();
        let nodes: Vec<_> = keys.iter().map(|_| g.add_node(())).collect();
        for (i, k) in keys.iter().enumerate() {
            let mut refs = BTreeSet::new();
            stmts_refs(&cat.functions[*k].body, cat, &mut refs);
            for r in refs {
                if let Some(&j) = index.get(r.as_str()) {
                    g.add_edge(nodes[i], nodes[j], ());
                }
            }
        }
        let mut errs = Vec::new();
        for scc in tarjan_scc(&g) {
            let recursive = scc.len() > 1 || g.contains_edge(scc[0], scc[0]);
            if !recursive {
                continue;
            }
            for n in &scc {
                let f = &cat.functions[keys[n.index()]];
                if f.kind != FnKind::Predicate {
                    errs.push((f.pos, format!("`{}` is recursive but does not return bool", f.key)));
                }
            }
        }
        for (p, m) in errs {
            self.error(p, m);
        }
    }

    fn check_schema_cycles(&mut self) {
        let mut errs = Vec::new();
        for name in self.cat.schemas.keys() {
            let mut seen = BTreeSet::new();
            let mut cur = Some(name.as_str());
            while let Some(c) = cur {
                if !seen.insert(c) {
                    errs.push((self.cat.schemas[name].pos, format!("schema `{name}` inherits from itself")));
                    break;
                }
                cur = self.cat.schemas.get(c).and_then(|s| s.parent.as_deref());
            }
        }
        for (p, m) in errs {
            self.error(p, m);
        }
    }
}

/// Functions (and derived-schema memberships) referenced by statements.
pub fn stmts_refs(stmts: &[TStmt], cat: &Catalog, out: &mut BTreeSet<String>) {
    for s in stmts {
        match s {
            TStmt::For(b, body) | TStmt::Let(b, body) => {
                b.iter().for_each(|(_, e)| expr_refs(e, cat, out));
                stmts_refs(body, cat, out);
            }
            TStmt::If(conds, body) => {
                for c in conds {
                    match c {
                        TCond::Cmp(_, l, r) => {
                            expr_refs(l, cat, out);
                            expr_refs(r, cat, out);
                        }
                        TCond::Test { expr, .. } | TCond::In { expr, .. } => expr_refs(expr, cat, out),
                    }
                }
                stmts_refs(body, cat, out);
            }
            TStmt::Yield { schema, fields } => {
                fields.iter().for_each(|e| expr_refs(e, cat, out));
                if let Some(p) = &cat.schemas[schema].parent {
                    out.insert(p.clone());
                }
            }
            TStmt::Return(e) => expr_refs(e, cat, out),
            TStmt::Output(f) => {
                out.insert(f.clone());
            }
            TStmt::ReturnTrue | TStmt::ReturnFalse => {}
        }
    }
}

pub fn expr_refs(e: &TExpr, cat: &Catalog, out: &mut BTreeSet<String>) {
    if let Ty::Schema(s) | Ty::Set(s) = &e.ty {
        // Schema values carry an implied membership.
        if cat.schemas.get(s).is_some_and(|i| i.origin != SchemaOrigin::Raw) {
            out.insert(s.clone());
        }
    }
    match &e.kind {
        TK::Int(_) | TK::Str(_) | TK::Var(_) | TK::Db => {}
        TK::Field { recv, .. } => expr_refs(recv, cat, out),
        TK::Member(s) => {
            out.insert(s.clone());
        }
        TK::Call { func, args } => {
            out.insert(func.clone());
            args.iter().for_each(|a| expr_refs(a, cat, out));
        }
        TK::Method { func, recv, args } => {
            out.insert(func.clone());
            expr_refs(recv, cat, out);
            args.iter().for_each(|a| expr_refs(a, cat, out));
        }
        TK::StrTest { recv, arg, .. } => {
            expr_refs(recv, cat, out);
            expr_refs(arg, cat, out);
        }
        TK::Builtin { args, .. } => args.iter().for_each(|a| expr_refs(a, cat, out)),
        TK::KeyEq(a, b) | TK::Binary { left: a, right: b, .. } => {
            expr_refs(a, cat, out);
            expr_refs(b, cat, out);
        }
        TK::Agg { arg, .. } => expr_refs(arg, cat, out),
    }
}
