//! Lowering of typed modules to Datalog.
//!
//! Every path through a function body that ends in `return true`,
//! `return e` or `yield` becomes one rule whose body is the conjunction of
//! the enclosing `for`/`if`/`let` conditions. Statements of one block are
//! alternatives, so sibling return paths give sibling rules.

use std::collections::{BTreeMap, HashMap, HashSet};

use super::ast::CmpOp as GCmp;
use super::lexer::Pos;
use super::typeck::{FnKind, SchemaOrigin, StrOp, TCond, TExpr, TFn, TStmt, Ty, TypedProgram, TK};
use crate::datalog::{Aggregate, Atom, CmpOp, Expr, Literal, Predicate, PredicateKind, Program, Rule, Term};
use crate::facts::Column;

/// Where a lowered rule came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleOrigin {
    pub function: String,
    pub pos: Pos,
    pub library: bool,
}

#[derive(Debug, Clone)]
pub struct Lowered {
    pub program: Program,
    pub origins: Vec<RuleOrigin>,
    /// Column names of every output relation.
    pub output_columns: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone)]
enum Val {
    Term(Term),
    /// A computed value not yet bound to a variable.
    Computed(Expr),
    Schema { ty: String, id: Term },
    Db,
}

#[derive(Debug, Clone, Default)]
struct Path {
    literals: Vec<Literal>,
    binds: Vec<(String, Expr)>,
    uf: HashMap<String, Term>,
    env: Vec<(String, Val)>,
    /// Field variables of schema values already joined with a membership.
    fields: HashMap<(String, Term), Vec<Term>>,
    dead: bool,
}

impl Path {
    fn find(&self, t: &Term) -> Term {
        let mut cur = t.clone();
        while let Term::Var(v) = &cur {
            match self.uf.get(v) {
                Some(next) => cur = next.clone(),
                None => break,
            }
        }
        cur
    }

    fn unify(&mut self, a: &Term, b: &Term) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match (&ra, &rb) {
            (Term::Const(_), Term::Const(_)) => self.dead = true,
            (Term::Var(v), Term::Const(_)) => {
                self.uf.insert(v.clone(), rb);
            }
            (Term::Const(_), Term::Var(v)) => {
                self.uf.insert(v.clone(), ra);
            }
            (Term::Var(x), Term::Var(y)) => {
                // Keep user-visible names as representatives.
                let (from, to) = if rank(x) >= rank(y) { (x.clone(), rb) } else { (y.clone(), ra) };
                self.uf.insert(from, to);
            }
        }
    }

    fn lookup(&self, name: &str) -> Option<&Val> {
        self.env.iter().rev().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    fn push_lit(&mut self, l: Literal) {
        self.literals.push(l);
    }
}

fn rank(v: &str) -> (bool, usize, &str) {
    (v.contains('#'), v.len(), v)
}

struct Lowerer<'a> {
    tp: &'a TypedProgram,
    fresh: usize,
    rules: Vec<(Rule, RuleOrigin)>,
}

/// Lowers every function of the catalog and script. Functions the outputs
/// do not need are left for the planner to prune.
pub fn lower(tp: &TypedProgram) -> Lowered {
    let mut program = Program::new();
    for s in tp.catalog.schemas.values() {
        let cols = s.fields.iter().map(|(n, t)| Column::new(n.clone(), t.column_type())).collect();
        let kind = if s.origin == SchemaOrigin::Raw { PredicateKind::Edb } else { PredicateKind::Idb };
        program.declare(Predicate::new(s.name.clone(), cols, kind));
    }
    for f in tp.catalog.functions.values() {
        if matches!(f.kind, FnKind::Predicate | FnKind::Value | FnKind::Set) {
            let mut cols: Vec<Column> = f.column_params().map(|(n, t)| Column::new(n.clone(), t.column_type())).collect();
            if f.kind != FnKind::Predicate {
                cols.push(Column::new("result", f.ret.column_type()));
            }
            program.declare(Predicate::new(f.key.clone(), cols, PredicateKind::Idb));
        }
    }
    let mut l = Lowerer { tp, fresh: 0, rules: Vec::new() };
    for s in tp.catalog.schemas.values() {
        if s.origin == SchemaOrigin::Inherited {
            l.inherited(&s.name);
        }
    }
    for f in tp.catalog.functions.values() {
        if matches!(f.kind, FnKind::Predicate | FnKind::Value | FnKind::Set | FnKind::Constraint) {
            l.function(f);
        }
    }
    let mut origins = Vec::new();
    for (r, o) in l.rules {
        program.rules.push(r);
        origins.push(o);
    }
    let mut output_columns = BTreeMap::new();
    for o in &tp.outputs {
        program.outputs.insert(o.clone());
        let cols = tp.function(o).column_params().map(|(n, _)| n.clone()).collect();
        output_columns.insert(o.clone(), cols);
    }
    Lowered { program, origins, output_columns }
}

impl<'a> Lowerer<'a> {
    fn var(&mut self, hint: &str) -> Term {
        self.fresh += 1;
        Term::Var(format!("{hint}#{}", self.fresh))
    }

    fn inherited(&mut self, name: &str) {
        let info = self.tp.schema(name);
        let parent = self.tp.schema(info.parent.as_deref().expect("inherited schema has a parent"));
        let vars: Vec<Term> = parent.fields.iter().map(|(n, _)| Term::var(n)).collect();
        let rule = Rule::new(Atom::new(name, vars.clone()), vec![Literal::Pos(Atom::new(parent.name.clone(), vars))]);
        self.rules.push((rule, RuleOrigin { function: name.to_string(), pos: info.pos, library: true }));
    }

    fn function(&mut self, f: &TFn) {
        self.fresh = 0;
        let mut path = Path::default();
        for (name, ty) in &f.params {
            let v = match ty {
                Ty::Db(_) => Val::Db,
                Ty::Schema(s) => {
                    let id = Term::var(name);
                    self.membership(&mut path, s, &id);
                    Val::Schema { ty: s.clone(), id }
                }
                _ => Val::Term(Term::var(name)),
            };
            path.env.push((name.clone(), v));
        }
        self.block(f, &f.body, &path);
    }

    fn block(&mut self, f: &TFn, stmts: &[TStmt], path: &Path) {
        for s in stmts {
            let mut p = path.clone();
            self.stmt(f, s, &mut p);
        }
    }

    fn stmt(&mut self, f: &TFn, s: &TStmt, p: &mut Path) {
        match s {
            TStmt::For(binds, body) | TStmt::Let(binds, body) => {
                for (name, e) in binds {
                    let v = match &e.kind {
                        TK::Member(s) => {
                            let id = self.var(name);
                            self.membership(p, s, &id);
                            Val::Schema { ty: s.clone(), id }
                        }
                        _ => self.expr(e, p),
                    };
                    let v = match v {
                        Val::Computed(x) => Val::Term(self.bind_expr(p, name, x)),
                        v => v,
                    };
                    p.env.push((name.clone(), v));
                }
                if !p.dead {
                    self.block(f, body, p);
                }
            }
            TStmt::If(conds, body) => {
                for c in conds {
                    self.cond(c, p);
                }
                if !p.dead {
                    self.block(f, body, p);
                }
            }
            TStmt::ReturnTrue => self.emit(f, Vec::new(), p),
            TStmt::ReturnFalse | TStmt::Output(_) => {}
            TStmt::Return(e) => {
                let v = self.expr(e, p);
                let t = self.term_of(p, v, "result");
                self.emit(f, vec![t], p);
            }
            TStmt::Yield { schema, fields } => {
                let mut terms = Vec::new();
                for e in fields {
                    let v = self.expr(e, p);
                    terms.push(self.term_of(p, v, "field"));
                }
                let info = self.tp.schema(schema);
                if let Some(parent) = &info.parent {
                    let pinfo = self.tp.schema(parent);
                    let pterms = pinfo.fields.iter().map(|(n, _)| terms[info.field_index(n).expect("inherited field")].clone()).collect();
                    p.push_lit(Literal::Pos(Atom::new(parent.clone(), pterms)));
                }
                self.emit_head(f, Atom::new(schema.clone(), terms), p);
            }
        }
    }

    fn bind_expr(&mut self, p: &mut Path, hint: &str, x: Expr) -> Term {
        let t = self.var(hint);
        if let Term::Var(v) = &t {
            p.binds.push((v.clone(), x));
        }
        t
    }

    fn term_of(&mut self, p: &mut Path, v: Val, hint: &str) -> Term {
        match v {
            Val::Term(t) => t,
            Val::Schema { id, .. } => id,
            Val::Computed(x) => self.bind_expr(p, hint, x),
            Val::Db => Term::int(0),
        }
    }

    fn expr_of(&mut self, v: Val) -> Expr {
        match v {
            Val::Term(t) => Expr::Term(t),
            Val::Schema { id, .. } => Expr::Term(id),
            Val::Computed(x) => x,
            Val::Db => Expr::int(0),
        }
    }

    /// Joins a schema value with its membership relation and returns its
    /// field variables.
    fn membership(&mut self, p: &mut Path, schema: &str, id: &Term) -> Vec<Term> {
        let key = (schema.to_string(), p.find(id));
        if let Some(f) = p.fields.get(&key) {
            return f.clone();
        }
        let info = self.tp.schema(schema);
        let id_ix = info.id_index();
        let hint = match id {
            Term::Var(v) => v.split('#').next().unwrap_or("v").to_string(),
            Term::Const(_) => "v".to_string(),
        };
        let terms: Vec<Term> = info
            .fields
            .iter()
            .enumerate()
            .map(|(i, (n, _))| if Some(i) == id_ix { id.clone() } else { self.var(&format!("{hint}.{n}")) })
            .collect();
        p.push_lit(Literal::Pos(Atom::new(schema, terms.clone())));
        p.fields.insert(key, terms.clone());
        terms
    }

    fn call(&mut self, p: &mut Path, func: &str, mut args: Vec<Term>, ret: &Ty) -> Val {
        let f = self.tp.function(func);
        match f.kind {
            FnKind::Value | FnKind::Set => {
                let r = self.var(&f.name);
                args.push(r.clone());
                p.push_lit(Literal::Pos(Atom::new(func, args)));
                match ret {
                    Ty::Schema(s) => Val::Schema { ty: s.clone(), id: r },
                    Ty::Set(s) => {
                        self.membership(p, s, &r);
                        Val::Schema { ty: s.clone(), id: r }
                    }
                    _ => Val::Term(r),
                }
            }
            _ => {
                p.push_lit(Literal::Pos(Atom::new(func, args)));
                Val::Term(Term::int(1))
            }
        }
    }

    fn args(&mut self, p: &mut Path, func: &str, es: &[TExpr]) -> Vec<Term> {
        let f = self.tp.function(func);
        let offset = if f.owner.is_some() && f.kind != FnKind::Constraint { 1 } else { 0 };
        let mut out = Vec::new();
        for (i, e) in es.iter().enumerate() {
            if matches!(f.params[i + offset].1, Ty::Db(_)) {
                continue;
            }
            let v = self.expr(e, p);
            out.push(self.term_of(p, v, "arg"));
        }
        out
    }

    fn expr(&mut self, e: &TExpr, p: &mut Path) -> Val {
        match &e.kind {
            TK::Int(v) => Val::Term(Term::int(*v)),
            TK::Str(s) => Val::Term(Term::str(s)),
            TK::Db => Val::Db,
            TK::Var(n) => p.lookup(n).cloned().expect("typechecked variable"),
            TK::Field { recv, index } => {
                let r = self.expr(recv, p);
                let Val::Schema { ty, id } = r else { unreachable!("typechecked field access") };
                let fields = self.membership(p, &ty, &id);
                Val::Term(fields[*index].clone())
            }
            TK::Member(s) => {
                let id = self.var(&s.to_lowercase());
                self.membership(p, s, &id);
                Val::Schema { ty: s.clone(), id }
            }
            TK::Call { func, args } => {
                let a = self.args(p, func, args);
                self.call(p, func, a, &e.ty)
            }
            TK::Method { func, recv, args } => {
                let r = self.expr(recv, p);
                let mut a = vec![self.term_of(p, r, "self")];
                a.extend(self.args(p, func, args));
                self.call(p, func, a, &e.ty)
            }
            TK::Builtin { func, args } => {
                let mut xs = Vec::new();
                for a in args {
                    let v = self.expr(a, p);
                    xs.push(self.expr_of(v));
                }
                Val::Computed(Expr::Call(*func, xs))
            }
            TK::Binary { op, left, right } => {
                let l = self.expr(left, p);
                let r = self.expr(right, p);
                let (l, r) = (self.expr_of(l), self.expr_of(r));
                Val::Computed(Expr::binary(*op, l, r))
            }
            TK::Agg { func, arg } => self.aggregate(p, *func, arg),
            TK::StrTest { .. } | TK::KeyEq(..) => unreachable!("bool expressions only appear as conditions"),
        }
    }

    fn aggregate(&mut self, p: &mut Path, func: crate::datalog::AggFn, arg: &TExpr) -> Val {
        let start = self.fresh;
        let mut sub = p.clone();
        sub.literals.clear();
        sub.binds.clear();
        let v = self.expr(arg, &mut sub);
        let target = self.term_of(&mut sub, v, "target");
        let is_local = |name: &str| name.rsplit('#').next().and_then(|n| n.parse::<usize>().ok()).is_some_and(|n| n > start);
        let mut body: Vec<Literal> = sub.literals;
        for (var, x) in sub.binds {
            body.push(Literal::Bind { var, expr: x });
        }
        let mut group = Vec::new();
        for l in &body {
            for v in l.vars() {
                if !is_local(&v) && !group.contains(&v) {
                    group.push(v);
                }
            }
        }
        let result = self.var(&format!("{func}"));
        let Term::Var(rname) = &result else { unreachable!() };
        let target = match func {
            crate::datalog::AggFn::Count => None,
            _ => Some(target),
        };
        p.push_lit(Literal::Agg(Aggregate { result: rname.clone(), func, target, group_vars: group, body }));
        Val::Term(result)
    }

    fn cond(&mut self, c: &TCond, p: &mut Path) {
        match c {
            TCond::Cmp(op, l, r) => {
                let lv = self.expr(l, p);
                let rv = self.expr(r, p);
                match (op, lv, rv) {
                    (GCmp::Eq, Val::Schema { id: a, .. }, Val::Schema { id: b, .. }) => p.unify(&a, &b),
                    (GCmp::Eq, Val::Term(a), Val::Term(b)) => p.unify(&a, &b),
                    (GCmp::Eq, Val::Term(Term::Var(v)), Val::Computed(x)) | (GCmp::Eq, Val::Computed(x), Val::Term(Term::Var(v))) => {
                        p.binds.push((v, x));
                    }
                    (op, lv, rv) => {
                        let (l, r) = (self.expr_of(lv), self.expr_of(rv));
                        p.push_lit(Literal::cmp(cmp_op(*op), l, r));
                    }
                }
            }
            TCond::Test { negated, expr } => match &expr.kind {
                TK::StrTest { op, recv, arg } => {
                    let r = self.expr(recv, p);
                    let a = self.expr(arg, p);
                    let mut o = match op {
                        StrOp::StartsWith => CmpOp::StartsWith,
                        StrOp::EndsWith => CmpOp::EndsWith,
                        StrOp::Contains => CmpOp::Contains,
                    };
                    if *negated {
                        o = o.negate();
                    }
                    let (r, a) = (self.expr_of(r), self.expr_of(a));
                    p.push_lit(Literal::cmp(o, r, a));
                }
                TK::KeyEq(a, b) => {
                    let a = self.expr(a, p);
                    let b = self.expr(b, p);
                    let (a, b) = (self.term_of(p, a, "key"), self.term_of(p, b, "key"));
                    if *negated {
                        p.push_lit(Literal::cmp(CmpOp::Ne, Expr::Term(a), Expr::Term(b)));
                    } else {
                        p.unify(&a, &b);
                    }
                }
                TK::Call { func, args } => {
                    let a = self.args(p, func, args);
                    self.test(p, func, a, *negated);
                }
                TK::Method { func, recv, args } => {
                    let r = self.expr(recv, p);
                    let mut a = vec![self.term_of(p, r, "self")];
                    a.extend(self.args(p, func, args));
                    self.test(p, func, a, *negated);
                }
                _ => unreachable!("typechecked condition"),
            },
            TCond::In { name, expr, fresh } => {
                let v = self.expr(expr, p);
                let v = match v {
                    Val::Computed(x) => Val::Term(self.bind_expr(p, name, x)),
                    v => v,
                };
                if *fresh {
                    p.env.push((name.clone(), v));
                } else {
                    let existing = p.lookup(name).cloned().expect("typechecked variable");
                    let a = self.term_of(p, existing, name);
                    let b = self.term_of(p, v, name);
                    p.unify(&a, &b);
                }
            }
        }
    }

    fn test(&mut self, p: &mut Path, func: &str, args: Vec<Term>, negated: bool) {
        let atom = Atom::new(func, args);
        p.push_lit(if negated { Literal::Neg(atom) } else { Literal::Pos(atom) });
    }

    fn emit(&mut self, f: &TFn, extra: Vec<Term>, p: &Path) {
        let mut head: Vec<Term> = Vec::new();
        for (name, ty) in f.column_params() {
            let v = p.env.iter().find(|(n, _)| n == name).map(|(_, v)| v.clone()).expect("parameter in scope");
            head.push(match v {
                Val::Term(t) => t,
                Val::Schema { id, .. } => id,
                _ => unreachable!("{ty} parameter"),
            });
        }
        head.extend(extra);
        let atom = Atom::new(f.key.clone(), head);
        self.emit_head(f, atom, p);
    }

    fn emit_head(&mut self, f: &TFn, head: Atom, p: &Path) {
        if p.dead {
            return;
        }
        let sub = |t: &Term| p.find(t);
        let mut body: Vec<Literal> = Vec::new();
        let mut seen = HashSet::new();
        let mut push = |l: Literal, body: &mut Vec<Literal>| {
            if seen.insert(l.clone()) {
                body.push(l);
            }
        };
        let mut bound: HashSet<String> = HashSet::new();
        for l in &p.literals {
            if let Literal::Pos(a) = l {
                bound.extend(a.vars().map(|v| match sub(&Term::var(v)) {
                    Term::Var(r) => r,
                    Term::Const(_) => String::new(),
                }));
            }
        }
        for l in &p.literals {
            for l in subst_literal(l, &sub, &bound) {
                if let Literal::Agg(a) = &l {
                    bound.insert(a.result.clone());
                }
                push(l, &mut body);
            }
        }
        for (v, x) in &p.binds {
            let t = sub(&Term::var(v));
            let x = subst_expr(x, &sub);
            let lit = match &t {
                Term::Var(name) if !bound.contains(name) => {
                    bound.insert(name.clone());
                    Literal::Bind { var: name.clone(), expr: x }
                }
                _ => Literal::cmp(CmpOp::Eq, Expr::Term(t.clone()), x),
            };
            push(lit, &mut body);
        }
        let head = Atom::new(head.predicate.clone(), head.terms.iter().map(sub).collect());
        let origin = RuleOrigin { function: f.key.clone(), pos: f.pos, library: f.library };
        self.rules.push((Rule::new(head, body), origin));
    }
}

fn cmp_op(op: GCmp) -> CmpOp {
    match op {
        GCmp::Eq => CmpOp::Eq,
        GCmp::Ne => CmpOp::Ne,
        GCmp::Lt => CmpOp::Lt,
        GCmp::Le => CmpOp::Le,
        GCmp::Gt => CmpOp::Gt,
        GCmp::Ge => CmpOp::Ge,
    }
}

fn subst_expr(x: &Expr, s: &dyn Fn(&Term) -> Term) -> Expr {
    match x {
        Expr::Term(t) => Expr::Term(s(t)),
        Expr::Binary(op, l, r) => Expr::binary(*op, subst_expr(l, s), subst_expr(r, s)),
        Expr::Call(f, args) => Expr::Call(*f, args.iter().map(|a| subst_expr(a, s)).collect()),
    }
}

fn subst_literal(l: &Literal, s: &dyn Fn(&Term) -> Term, bound: &HashSet<String>) -> Vec<Literal> {
    let atom = |a: &Atom| Atom::new(a.predicate.clone(), a.terms.iter().map(s).collect());
    match l {
        Literal::Pos(a) => vec![Literal::Pos(atom(a))],
        Literal::Neg(a) => vec![Literal::Neg(atom(a))],
        Literal::Cmp { op, left, right } => vec![Literal::Cmp { op: *op, left: subst_expr(left, s), right: subst_expr(right, s) }],
        Literal::Bind { var, expr } => vec![Literal::Bind { var: var.clone(), expr: subst_expr(expr, s) }],
        Literal::Agg(a) => {
            let mut group = Vec::new();
            for g in &a.group_vars {
                if let Term::Var(v) = s(&Term::var(g)) {
                    if !group.contains(&v) {
                        group.push(v);
                    }
                }
            }
            let inner_bound: HashSet<String> =
                a.body.iter().filter_map(|b| if let Literal::Pos(x) = b { Some(x) } else { None }).flat_map(|x| x.vars().map(str::to_string)).collect();
            let body = a.body.iter().flat_map(|b| subst_literal(b, s, &inner_bound)).collect();
            // The result may have been unified with a constant or with a
            // variable bound elsewhere; compare instead of rebinding.
            let (result, check) = match s(&Term::var(&a.result)) {
                Term::Var(v) if !bound.contains(&v) => (v, None),
                rep => (a.result.clone(), Some(rep)),
            };
            let mut out =
                vec![Literal::Agg(Aggregate { result: result.clone(), func: a.func, target: a.target.as_ref().map(s), group_vars: group, body })];
            if let Some(rep) = check {
                out.push(Literal::cmp(CmpOp::Eq, Expr::Term(Term::Var(result)), Expr::Term(rep)));
            }
            out
        }
    }
}
