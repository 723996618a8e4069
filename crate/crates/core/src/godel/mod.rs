//! The query language: parsing, type checking against the shipped
//! library, and lowering to Datalog.

pub mod ast;
pub mod lexer;
pub mod lower;
pub mod parser;
pub mod typeck;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, OnceLock};

use sha2::{Digest, Sha256};

use crate::datalog::{check_safety, stratify, Program};
use crate::extract::{changed_file_schema, tier1_schemas};
use crate::Language;

pub use lexer::Pos;
pub use lower::{lower, Lowered, RuleOrigin};
pub use parser::parse;
pub use typeck::{check_module, typecheck, Catalog, TypedProgram};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub pos: Pos,
    pub message: String,
}

impl Diagnostic {
    pub fn new(pos: Pos, message: String) -> Self {
        Diagnostic { pos, message }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.pos, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CompileError {
    #[error("syntax error(s):\n{}", render(.0))]
    Syntax(Vec<Diagnostic>),
    #[error("type error(s):\n{}", render(.0))]
    Type(Vec<Diagnostic>),
    #[error("invalid query:\n{}", render(.0))]
    Rules(Vec<Diagnostic>),
    #[error("script has no `main` function")]
    NoMain,
    #[error("library `{library}` is broken: {message}")]
    Library { library: String, message: String },
}

impl CompileError {
    pub fn diagnostics(&self) -> &[Diagnostic] {
        match self {
            CompileError::Syntax(d) | CompileError::Type(d) | CompileError::Rules(d) => d,
            _ => &[],
        }
    }
}

fn render(ds: &[Diagnostic]) -> String {
    ds.iter().map(|d| format!("  {d}")).collect::<Vec<_>>().join("\n")
}

/// Library sources per language, as (file name, source).
pub fn library_sources(language: Language) -> &'static [(&'static str, &'static str)] {
    match language {
        Language::Python => &[("coref/python/python.gdl", include_str!("../../lib/coref/python/python.gdl"))],
        Language::Xml => &[("coref/xml/xml.gdl", include_str!("../../lib/coref/xml/xml.gdl"))],
    }
}

/// Digest over the library sources; part of result cache keys.
pub fn library_hash(language: Language) -> String {
    let mut h = Sha256::new();
    for (name, src) in library_sources(language) {
        h.update(name.as_bytes());
        h.update([0]);
        h.update(src.as_bytes());
        h.update([0]);
    }
    hex::encode(h.finalize())
}

fn build_catalog(language: Language) -> Result<Catalog, CompileError> {
    let mut raw = tier1_schemas(language);
    raw.push(changed_file_schema());
    let mut cat = Catalog::raw(language, &raw);
    for (name, src) in library_sources(language) {
        let broken = |ds: Vec<Diagnostic>| CompileError::Library { library: name.to_string(), message: render(&ds) };
        let module = parse(src).map_err(broken)?;
        check_module(&module, &mut cat, true).map_err(broken)?;
    }
    Ok(cat)
}

/// The checked library catalog of a language. Built once per process.
pub fn load_catalog(language: Language) -> Result<Arc<Catalog>, CompileError> {
    static CACHE: OnceLock<BTreeMap<Language, Result<Arc<Catalog>, CompileError>>> = OnceLock::new();
    let all = CACHE.get_or_init(|| Language::ALL.iter().map(|l| (*l, build_catalog(*l).map(Arc::new))).collect());
    all[&language].clone()
}

/// A script compiled to a Datalog program.
#[derive(Debug, Clone)]
pub struct CompiledQuery {
    pub language: Language,
    pub typed: TypedProgram,
    pub lowered: Lowered,
    pub source_hash: String,
}

impl CompiledQuery {
    pub fn program(&self) -> &Program {
        &self.lowered.program
    }

    /// Output relations with their column names, in `output` order.
    pub fn outputs(&self) -> Vec<(String, Vec<String>)> {
        self.typed.outputs.iter().map(|o| (o.clone(), self.lowered.output_columns[o].clone())).collect()
    }
}

pub fn source_hash(source: &str) -> String {
    hex::encode(Sha256::digest(source.as_bytes()))
}

/// The language named by a script's `use coref::<lang>::*`, if any.
pub fn script_language(module: &ast::Module) -> Option<Result<Language, String>> {
    let u = module.uses.first()?;
    Some(match u.segments.as_slice() {
        [c, l] if c == "coref" => l.parse::<Language>().map_err(|_| u.segments.join("::")),
        _ => Err(u.segments.join("::")),
    })
}

/// The subject language a script declares through its `use` line.
pub fn detect_language(source: &str) -> Result<Language, CompileError> {
    let module = parse(source).map_err(CompileError::Syntax)?;
    let pos = module.uses.first().map(|u| u.pos).unwrap_or_default();
    match script_language(&module) {
        Some(Ok(l)) => Ok(l),
        Some(Err(path)) => Err(CompileError::Syntax(vec![Diagnostic::new(pos, format!("unknown library `{path}`"))])),
        None => Err(CompileError::Syntax(vec![Diagnostic::new(pos, "script has no `use coref::<language>::*` line".to_string())])),
    }
}

/// Parses, checks and lowers a script. With `require_main`, the script
/// must define `main`.
pub fn compile(source: &str, language: Language, require_main: bool) -> Result<CompiledQuery, CompileError> {
    let module = parse(source).map_err(CompileError::Syntax)?;
    if require_main && module.main().is_none() {
        return Err(CompileError::NoMain);
    }
    let catalog = load_catalog(language)?;
    let typed = typecheck(&module, &catalog).map_err(CompileError::Type)?;
    let lowered = lower(&typed);
    check_rules(&lowered)?;
    Ok(CompiledQuery { language, typed, lowered, source_hash: source_hash(source) })
}

/// Safety and stratification, reported against the source functions.
fn check_rules(l: &Lowered) -> Result<(), CompileError> {
    let mut diags = Vec::new();
    for d in check_safety(&l.program) {
        let o = &l.origins[d.rule];
        let where_ = if o.library { format!("library function `{}`", o.function) } else { format!("`{}`", o.function) };
        diags.push(Diagnostic::new(o.pos, format!("in {where_}: variable `{}` {}", pretty_var(&d.var), d.reason)));
    }
    diags.dedup();
    if !diags.is_empty() {
        return Err(CompileError::Rules(diags));
    }
    if let Err(e) = stratify(&l.program) {
        return Err(CompileError::Rules(vec![Diagnostic::new(Pos::default(), e.to_string())]));
    }
    Ok(())
}

fn pretty_var(v: &str) -> &str {
    v.split('#').next().unwrap_or(v)
}
