//! Datalog intermediate representation and evaluation.
//!
//! Programs are sets of rules over extensional (stored) and intensional
//! (derived) predicates, with stratified negation, comparisons, arithmetic
//! bindings and grouped aggregation. [`evaluate_naive`] is a deliberately
//! simple reference evaluator; [`evaluate_seminaive`] is the production path.

mod engine;
mod expr;
mod naive;
mod safety;
mod stratify;

pub use engine::{apply_rule, evaluate_seminaive, CompiledStratum, Engine, EvalStats, Evaluation, StratumStats};
pub use expr::eval_expr;
pub use naive::evaluate_naive;
pub use safety::{check_safety, SafetyDiagnostic};
pub use stratify::{dependency_edges, stratify, Polarity, StratifyError, Stratification};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use indexmap::IndexMap;

use crate::facts::{Column, ColumnType, Relation, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PredicateKind {
    Edb,
    Idb,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Predicate {
    pub name: String,
    pub columns: Vec<Column>,
    pub kind: PredicateKind,
}

impl Predicate {
    pub fn new(name: impl Into<String>, columns: Vec<Column>, kind: PredicateKind) -> Self {
        Predicate { name: name.into(), columns, kind }
    }

    /// A predicate whose columns are all integers, named `c0..cN`.
    pub fn ints(name: impl Into<String>, arity: usize, kind: PredicateKind) -> Self {
        let columns = (0..arity).map(|i| Column::new(format!("c{i}"), ColumnType::Int)).collect();
        Predicate::new(name, columns, kind)
    }

    pub fn arity(&self) -> usize {
        self.columns.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Var(String),
    Const(Value),
}

impl Term {
    pub fn var(name: impl Into<String>) -> Self {
        Term::Var(name.into())
    }

    pub fn int(v: i64) -> Self {
        Term::Const(Value::Int(v))
    }

    pub fn str(v: &str) -> Self {
        Term::Const(Value::str(v))
    }

    pub fn as_var(&self) -> Option<&str> {
        match self {
            Term::Var(v) => Some(v),
            Term::Const(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Atom {
    pub predicate: String,
    pub terms: Vec<Term>,
}

impl Atom {
    pub fn new(predicate: impl Into<String>, terms: Vec<Term>) -> Self {
        Atom { predicate: predicate.into(), terms }
    }

    pub fn vars(&self) -> impl Iterator<Item = &str> {
        self.terms.iter().filter_map(Term::as_var)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BuiltinFn {
    /// Length of a string in characters.
    StrLen,
    /// Suffix after the last occurrence of a separator (whole string if absent).
    AfterLast,
    /// Decimal rendering of an integer.
    ToStr,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Term(Term),
    Binary(ArithOp, Box<Expr>, Box<Expr>),
    Call(BuiltinFn, Vec<Expr>),
}

impl Expr {
    pub fn var(name: &str) -> Self {
        Expr::Term(Term::var(name))
    }

    pub fn int(v: i64) -> Self {
        Expr::Term(Term::int(v))
    }

    pub fn binary(op: ArithOp, l: Expr, r: Expr) -> Self {
        Expr::Binary(op, Box::new(l), Box::new(r))
    }

    pub fn vars(&self, out: &mut Vec<String>) {
        match self {
            Expr::Term(Term::Var(v)) => out.push(v.clone()),
            Expr::Term(Term::Const(_)) => {}
            Expr::Binary(_, l, r) => {
                l.vars(out);
                r.vars(out);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.vars(out)),
        }
    }

    /// True for anything that can compute a value not already present in
    /// its inputs.
    pub fn is_computed(&self) -> bool {
        !matches!(self, Expr::Term(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    StartsWith,
    EndsWith,
    Contains,
    NotStartsWith,
    NotEndsWith,
    NotContains,
}

impl CmpOp {
    pub fn negate(self) -> CmpOp {
        use CmpOp::*;
        match self {
            Eq => Ne,
            Ne => Eq,
            Lt => Ge,
            Le => Gt,
            Gt => Le,
            Ge => Lt,
            StartsWith => NotStartsWith,
            EndsWith => NotEndsWith,
            Contains => NotContains,
            NotStartsWith => StartsWith,
            NotEndsWith => EndsWith,
            NotContains => Contains,
        }
    }

    fn symbol(self) -> &'static str {
        use CmpOp::*;
        match self {
            Eq => "=",
            Ne => "!=",
            Lt => "<",
            Le => "<=",
            Gt => ">",
            Ge => ">=",
            StartsWith => "starts_with",
            EndsWith => "ends_with",
            Contains => "contains",
            NotStartsWith => "!starts_with",
            NotEndsWith => "!ends_with",
            NotContains => "!contains",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AggFn {
    Count,
    Sum,
    Min,
    Max,
}

impl fmt::Display for AggFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AggFn::Count => "count",
            AggFn::Sum => "sum",
            AggFn::Min => "min",
            AggFn::Max => "max",
        })
    }
}

/// `result = func(target) over body`, evaluated once per binding of
/// `group_vars`, which must be bound by the enclosing rule. Every other
/// variable of `body` is local to the aggregate. The aggregate ranges over
/// the distinct bindings of the body's variables.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Aggregate {
    pub result: String,
    pub func: AggFn,
    /// Required for sum/min/max; ignored by count.
    pub target: Option<Term>,
    pub group_vars: Vec<String>,
    pub body: Vec<Literal>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Literal {
    Pos(Atom),
    Neg(Atom),
    Cmp { op: CmpOp, left: Expr, right: Expr },
    Bind { var: String, expr: Expr },
    Agg(Aggregate),
}

impl Literal {
    pub fn cmp(op: CmpOp, left: Expr, right: Expr) -> Self {
        Literal::Cmp { op, left, right }
    }

    /// Every variable mentioned by the literal, including aggregate locals.
    pub fn vars(&self) -> Vec<String> {
        let mut out = Vec::new();
        match self {
            Literal::Pos(a) | Literal::Neg(a) => out.extend(a.vars().map(str::to_string)),
            Literal::Cmp { left, right, .. } => {
                left.vars(&mut out);
                right.vars(&mut out);
            }
            Literal::Bind { var, expr } => {
                out.push(var.clone());
                expr.vars(&mut out);
            }
            Literal::Agg(a) => {
                out.push(a.result.clone());
                out.extend(a.group_vars.iter().cloned());
            }
        }
        out
    }

    /// Variables that must be bound before the literal can run.
    pub fn required_vars(&self) -> Vec<String> {
        let mut out = Vec::new();
        match self {
            Literal::Pos(_) => {}
            Literal::Neg(a) => out.extend(a.vars().map(str::to_string)),
            Literal::Cmp { left, right, .. } => {
                left.vars(&mut out);
                right.vars(&mut out);
            }
            Literal::Bind { expr, .. } => expr.vars(&mut out),
            Literal::Agg(a) => out.extend(a.group_vars.iter().cloned()),
        }
        out
    }

    /// Variables the literal binds once it has run.
    pub fn bound_vars(&self) -> Vec<String> {
        match self {
            Literal::Pos(a) => a.vars().map(str::to_string).collect(),
            Literal::Bind { var, .. } => vec![var.clone()],
            Literal::Agg(a) => vec![a.result.clone()],
            Literal::Neg(_) | Literal::Cmp { .. } => Vec::new(),
        }
    }

    /// Predicates referenced, with the polarity of the reference.
    pub fn predicates(&self) -> Vec<(&str, Polarity)> {
        match self {
            Literal::Pos(a) => vec![(a.predicate.as_str(), Polarity::Positive)],
            Literal::Neg(a) => vec![(a.predicate.as_str(), Polarity::Negative)],
            Literal::Agg(agg) => agg
                .body
                .iter()
                .flat_map(|l| l.predicates())
                .map(|(p, _)| (p, Polarity::Aggregate))
                .collect(),
            Literal::Cmp { .. } | Literal::Bind { .. } => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Rule {
    pub head: Atom,
    pub body: Vec<Literal>,
}

impl Rule {
    pub fn new(head: Atom, body: Vec<Literal>) -> Self {
        Rule { head, body }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProgramError {
    #[error("predicate `{0}` is used but not declared")]
    Undeclared(String),
    #[error("predicate `{name}` used with arity {found}, declared with {expected}")]
    Arity { name: String, expected: usize, found: usize },
    #[error("rule {rule}: extensional predicate `{name}` cannot appear in a rule head")]
    EdbHead { rule: usize, name: String },
    #[error("output `{0}` is not an intensional predicate")]
    BadOutput(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Program {
    /// Declaration order is preserved; the planner uses it as a tie-breaker.
    pub predicates: IndexMap<String, Predicate>,
    pub rules: Vec<Rule>,
    pub outputs: BTreeSet<String>,
}

impl Program {
    pub fn new() -> Self {
        Program::default()
    }

    pub fn declare(&mut self, predicate: Predicate) {
        self.predicates.insert(predicate.name.clone(), predicate);
    }

    pub fn predicate(&self, name: &str) -> Option<&Predicate> {
        self.predicates.get(name)
    }

    pub fn is_idb(&self, name: &str) -> bool {
        matches!(self.predicates.get(name), Some(p) if p.kind == PredicateKind::Idb)
    }

    pub fn idb_names(&self) -> impl Iterator<Item = &str> {
        self.predicates.values().filter(|p| p.kind == PredicateKind::Idb).map(|p| p.name.as_str())
    }

    pub fn edb_names(&self) -> impl Iterator<Item = &str> {
        self.predicates.values().filter(|p| p.kind == PredicateKind::Edb).map(|p| p.name.as_str())
    }

    /// Structural checks: declarations, arities, EDB heads and outputs.
    pub fn validate(&self) -> Result<(), ProgramError> {
        fn check_atom(p: &Program, a: &Atom) -> Result<(), ProgramError> {
            let decl = p.predicates.get(&a.predicate).ok_or_else(|| ProgramError::Undeclared(a.predicate.clone()))?;
            if decl.arity() != a.terms.len() {
                return Err(ProgramError::Arity { name: a.predicate.clone(), expected: decl.arity(), found: a.terms.len() });
            }
            Ok(())
        }
        fn check_body(p: &Program, body: &[Literal]) -> Result<(), ProgramError> {
            for lit in body {
                match lit {
                    Literal::Pos(a) | Literal::Neg(a) => check_atom(p, a)?,
                    Literal::Agg(agg) => check_body(p, &agg.body)?,
                    Literal::Cmp { .. } | Literal::Bind { .. } => {}
                }
            }
            Ok(())
        }
        for (i, rule) in self.rules.iter().enumerate() {
            check_atom(self, &rule.head)?;
            if !self.is_idb(&rule.head.predicate) {
                return Err(ProgramError::EdbHead { rule: i, name: rule.head.predicate.clone() });
            }
            check_body(self, &rule.body)?;
        }
        for out in &self.outputs {
            if !self.is_idb(out) {
                return Err(ProgramError::BadOutput(out.clone()));
            }
        }
        Ok(())
    }

    /// Rules grouped by head predicate, in program order.
    pub fn rules_by_head(&self) -> BTreeMap<&str, Vec<usize>> {
        let mut map: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, r) in self.rules.iter().enumerate() {
            map.entry(r.head.predicate.as_str()).or_default().push(i);
        }
        map
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Program(#[from] ProgramError),
    #[error("unsafe program: {}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "))]
    Unsafe(Vec<SafetyDiagnostic>),
    #[error(transparent)]
    Stratify(#[from] StratifyError),
    #[error("input relation `{name}` has arity {found}, declared {expected}")]
    EdbArity { name: String, expected: usize, found: usize },
    #[error("rule `{rule}`: {message}")]
    Rule { rule: String, message: String },
    #[error("internal evaluator error in rule `{rule}`: {message}")]
    Internal { rule: String, message: String },
    #[error("relation `{relation}`: {message}")]
    Schema { relation: String, message: String },
}

/// Runs the pre-evaluation checks shared by both evaluators.
pub(crate) fn prepare(program: &Program, edb: &BTreeMap<String, Relation>) -> Result<Stratification, EvalError> {
    program.validate()?;
    let diags = check_safety(program);
    if !diags.is_empty() {
        return Err(EvalError::Unsafe(diags));
    }
    for name in program.edb_names() {
        if let Some(rel) = edb.get(name) {
            let expected = program.predicates[name].arity();
            if rel.schema().arity() != expected {
                return Err(EvalError::EdbArity { name: name.to_string(), expected, found: rel.schema().arity() });
            }
        }
    }
    Ok(stratify(program)?)
}

/// Turns derived tuple sets into typed relations.
pub(crate) fn into_relations(
    program: &Program,
    derived: BTreeMap<String, BTreeSet<Vec<Value>>>,
) -> Result<BTreeMap<String, Relation>, EvalError> {
    let mut out = BTreeMap::new();
    for name in program.idb_names() {
        let decl = &program.predicates[name];
        let schema = crate::facts::RelationSchema { name: name.to_string(), columns: decl.columns.clone(), key_len: 0 };
        let mut rel = Relation::new(schema);
        if let Some(tuples) = derived.get(name) {
            for t in tuples {
                rel.insert(t.clone()).map_err(|e| EvalError::Schema { relation: name.to_string(), message: e.to_string() })?;
            }
        }
        out.insert(name.to_string(), rel);
    }
    Ok(out)
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => f.write_str(v),
            Term::Const(c) => write!(f, "{c}"),
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.predicate)?;
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{t}")?;
        }
        f.write_str(")")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Term(t) => write!(f, "{t}"),
            Expr::Binary(op, l, r) => {
                let sym = match op {
                    ArithOp::Add => "+",
                    ArithOp::Sub => "-",
                    ArithOp::Mul => "*",
                    ArithOp::Div => "/",
                };
                write!(f, "({l} {sym} {r})")
            }
            Expr::Call(func, args) => {
                let name = match func {
                    BuiltinFn::StrLen => "strlen",
                    BuiltinFn::AfterLast => "after_last",
                    BuiltinFn::ToStr => "to_string",
                };
                write!(f, "{name}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Pos(a) => write!(f, "{a}"),
            Literal::Neg(a) => write!(f, "!{a}"),
            Literal::Cmp { op, left, right } => write!(f, "{left} {} {right}", op.symbol()),
            Literal::Bind { var, expr } => write!(f, "{var} := {expr}"),
            Literal::Agg(a) => {
                write!(f, "{} := {}", a.result, a.func)?;
                if let Some(t) = &a.target {
                    write!(f, " {t}")?;
                }
                f.write_str(" : {")?;
                for (i, l) in a.body.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{l}")?;
                }
                write!(f, "}} by ({})", a.group_vars.join(", "))
            }
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.head)?;
        if !self.body.is_empty() {
            f.write_str(" :- ")?;
            for (i, l) in self.body.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{l}")?;
            }
        }
        f.write_str(".")
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.rules {
            writeln!(f, "{r}")?;
        }
        Ok(())
    }
}
