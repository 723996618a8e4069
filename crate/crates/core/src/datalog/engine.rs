//! Semi-naive evaluation over compiled rule pipelines with hash indexes.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use indexmap::IndexSet;
use rayon::prelude::*;

use crate::facts::{Column, Relation, RelationSchema, Tuple, Value};

use super::expr::{arith, builtin, compare};
use super::{prepare, AggFn, ArithOp, BuiltinFn, CmpOp, EvalError, Expr, Literal, Program, Rule, Term};

#[derive(Default)]
struct IndexedRel {
    rows: IndexSet<Tuple>,
    indexes: HashMap<Vec<usize>, HashMap<Vec<Value>, Vec<usize>>>,
}

impl IndexedRel {
    fn insert(&mut self, t: Tuple) -> bool {
        let (id, fresh) = self.rows.insert_full(t);
        if fresh {
            let row = &self.rows[id];
            for (cols, idx) in self.indexes.iter_mut() {
                idx.entry(cols.iter().map(|&c| row[c].clone()).collect()).or_default().push(id);
            }
        }
        fresh
    }

    fn ensure_index(&mut self, cols: &[usize]) {
        if cols.is_empty() || self.indexes.contains_key(cols) {
            return;
        }
        let mut idx: HashMap<Vec<Value>, Vec<usize>> = HashMap::new();
        for (id, row) in self.rows.iter().enumerate() {
            idx.entry(cols.iter().map(|&c| row[c].clone()).collect()).or_default().push(id);
        }
        self.indexes.insert(cols.to_vec(), idx);
    }

    fn approx_bytes(&self) -> usize {
        self.rows.iter().map(|r| 32 + r.iter().map(value_bytes).sum::<usize>()).sum()
    }
}

fn value_bytes(v: &Value) -> usize {
    match v {
        Value::Int(_) => 16,
        Value::Str(s) => 16 + s.len(),
    }
}

#[derive(Debug, Clone)]
enum Operand {
    Const(Value),
    Slot(usize),
}

#[derive(Debug, Clone)]
enum CExpr {
    Op(Operand),
    Bin(ArithOp, Box<CExpr>, Box<CExpr>),
    Call(BuiltinFn, Vec<CExpr>),
}

#[derive(Debug, Clone)]
enum Step {
    Scan {
        rel: usize,
        /// Body literal this scan came from.
        origin: usize,
        key_cols: Vec<usize>,
        key: Vec<Operand>,
        assign: Vec<(usize, usize)>,
        /// Columns that must equal another column of the same row.
        same: Vec<(usize, usize)>,
    },
    Neg {
        rel: usize,
        args: Vec<Operand>,
    },
    Filter {
        op: CmpOp,
        left: CExpr,
        right: CExpr,
    },
    Bind {
        slot: usize,
        expr: CExpr,
        check: bool,
    },
    Agg {
        slot: usize,
        func: AggFn,
        target: Option<Operand>,
        locals: Vec<usize>,
        steps: Vec<Step>,
    },
}

#[derive(Debug, Clone)]
struct CompiledRule {
    text: String,
    head_rel: usize,
    head: Vec<Operand>,
    slots: usize,
    steps: Vec<Step>,
    /// Step positions of scans over predicates of the rule's own stratum.
    recursive: Vec<usize>,
}

/// The compiled rules of one stratum.
#[derive(Debug, Clone)]
pub struct CompiledStratum {
    rules: Vec<CompiledRule>,
    members: BTreeSet<usize>,
}

impl CompiledStratum {
    pub fn rule_count(&self) -> usize {
        self.rules.len()
    }

    pub fn is_recursive(&self) -> bool {
        self.rules.iter().any(|r| !r.recursive.is_empty())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StratumStats {
    /// Rounds that derived at least one new tuple.
    pub iterations: usize,
    /// Rule (or rule variant) evaluations performed.
    pub rule_evaluations: usize,
    pub derived: usize,
    /// Partial bindings produced by scans; a proxy for join work.
    pub intermediate: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EvalStats {
    pub strata: Vec<StratumStats>,
    pub peak_bytes: usize,
}

impl EvalStats {
    pub fn rule_evaluations(&self) -> usize {
        self.strata.iter().map(|s| s.rule_evaluations).sum()
    }

    pub fn intermediate(&self) -> u64 {
        self.strata.iter().map(|s| s.intermediate).sum()
    }
}

#[derive(Debug)]
pub struct Evaluation {
    pub relations: BTreeMap<String, Relation>,
    pub stats: EvalStats,
}

/// In-memory database plus the machinery to run compiled strata over it.
pub struct Engine {
    names: HashMap<String, usize>,
    schemas: Vec<(String, Vec<Column>)>,
    rels: Vec<IndexedRel>,
    parallel: bool,
    peak_bytes: usize,
}

impl Engine {
    /// Loads every declared predicate: EDB relations from `edb` (missing
    /// ones are empty), IDB relations empty.
    pub fn new(program: &Program, edb: &BTreeMap<String, Relation>) -> Self {
        let mut engine = Engine { names: HashMap::new(), schemas: Vec::new(), rels: Vec::new(), parallel: true, peak_bytes: 0 };
        for p in program.predicates.values() {
            let id = engine.add(&p.name, p.columns.clone());
            if let Some(rel) = edb.get(&p.name) {
                for t in rel.iter() {
                    engine.rels[id].insert(t.clone());
                }
            }
        }
        engine.peak_bytes = engine.approx_bytes();
        engine
    }

    fn add(&mut self, name: &str, columns: Vec<Column>) -> usize {
        let id = self.rels.len();
        self.names.insert(name.to_string(), id);
        self.schemas.push((name.to_string(), columns));
        self.rels.push(IndexedRel::default());
        id
    }

    pub fn set_parallel(&mut self, parallel: bool) {
        self.parallel = parallel;
    }

    pub fn len(&self, name: &str) -> Option<usize> {
        self.names.get(name).map(|&i| self.rels[i].rows.len())
    }

    pub fn approx_bytes(&self) -> usize {
        self.rels.iter().map(IndexedRel::approx_bytes).sum()
    }

    pub fn peak_bytes(&self) -> usize {
        self.peak_bytes
    }

    /// Compiles `rules` (bodies in execution order) for a stratum whose
    /// predicates are `members`.
    pub fn compile(&self, rules: &[Rule], members: &BTreeSet<String>) -> Result<CompiledStratum, EvalError> {
        let member_ids: BTreeSet<usize> = members.iter().filter_map(|m| self.names.get(m).copied()).collect();
        let rules = rules.iter().map(|r| compile_rule(r, &self.names, &member_ids)).collect::<Result<Vec<_>, _>>()?;
        Ok(CompiledStratum { rules, members: member_ids })
    }

    fn prepare_indexes(&mut self, stratum: &CompiledStratum) {
        fn walk(steps: &[Step], need: &mut Vec<(usize, Vec<usize>)>) {
            for s in steps {
                match s {
                    Step::Scan { rel, key_cols, .. } => need.push((*rel, key_cols.clone())),
                    Step::Agg { steps, .. } => walk(steps, need),
                    _ => {}
                }
            }
        }
        let mut need = Vec::new();
        for r in &stratum.rules {
            walk(&r.steps, &mut need);
        }
        for (rel, cols) in need {
            self.rels[rel].ensure_index(&cols);
        }
    }

    /// Runs one stratum to fixpoint with semi-naive iteration.
    pub fn run_stratum(&mut self, stratum: &CompiledStratum) -> Result<StratumStats, EvalError> {
        self.prepare_indexes(stratum);
        let mut stats = StratumStats::default();

        let tasks: Vec<(usize, Option<usize>)> = (0..stratum.rules.len()).map(|i| (i, None)).collect();
        let mut delta = self.round(stratum, &tasks, &HashMap::new(), &mut stats)?;

        let recursive_tasks: Vec<(usize, Option<usize>)> = stratum
            .rules
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.recursive.iter().map(move |&p| (i, Some(p))))
            .collect();
        while !delta.is_empty() {
            stats.iterations += 1;
            if recursive_tasks.is_empty() {
                break;
            }
            // Delta relations need the same indexes the scans use on totals.
            let mut delta_rels: HashMap<usize, IndexedRel> = HashMap::new();
            for (rel, rows) in delta {
                let mut r = IndexedRel::default();
                for cols in self.rels[rel].indexes.keys() {
                    r.indexes.insert(cols.clone(), HashMap::new());
                }
                for t in rows {
                    r.insert(t);
                }
                delta_rels.insert(rel, r);
            }
            let relevant: Vec<(usize, Option<usize>)> = recursive_tasks
                .iter()
                .copied()
                .filter(|(i, p)| match &stratum.rules[*i].steps[p.unwrap()] {
                    Step::Scan { rel, .. } => delta_rels.contains_key(rel),
                    _ => false,
                })
                .collect();
            delta = self.round(stratum, &relevant, &delta_rels, &mut stats)?;
        }
        let _ = &stratum.members;
        self.peak_bytes = self.peak_bytes.max(self.approx_bytes());
        Ok(stats)
    }

    /// Evaluates `tasks` against the current totals, inserts what is new,
    /// and returns the new tuples per relation.
    fn round(
        &mut self,
        stratum: &CompiledStratum,
        tasks: &[(usize, Option<usize>)],
        delta: &HashMap<usize, IndexedRel>,
        stats: &mut StratumStats,
    ) -> Result<HashMap<usize, Vec<Tuple>>, EvalError> {
        let rels = &self.rels;
        let run = |&(i, at): &(usize, Option<usize>)| -> Result<(usize, Vec<Tuple>, u64), EvalError> {
            let rule = &stratum.rules[i];
            let mut ctx = Ctx { rels, delta, delta_at: at, work: 0 };
            let mut out = Vec::new();
            let mut env = vec![Value::Int(0); rule.slots];
            exec(&rule.steps, 0, &mut env, &mut ctx, &mut |env| {
                let t: Tuple = rule.head.iter().map(|o| operand(o, env).clone()).collect();
                if !rels[rule.head_rel].rows.contains(&t) {
                    out.push(t);
                }
                Ok(())
            })
            .map_err(|message| EvalError::Rule { rule: rule.text.clone(), message })?;
            Ok((rule.head_rel, out, ctx.work))
        };
        let results: Vec<(usize, Vec<Tuple>, u64)> = if self.parallel && tasks.len() > 1 {
            tasks.par_iter().map(run).collect::<Result<_, _>>()?
        } else {
            tasks.iter().map(run).collect::<Result<_, _>>()?
        };
        stats.rule_evaluations += tasks.len();
        let mut new: HashMap<usize, Vec<Tuple>> = HashMap::new();
        for (rel, tuples, work) in results {
            stats.intermediate += work;
            for t in tuples {
                if self.rels[rel].insert(t.clone()) {
                    stats.derived += 1;
                    new.entry(rel).or_default().push(t);
                }
            }
        }
        Ok(new)
    }

    /// Extracts the named relations, type-checking every derived tuple.
    pub fn relations(&self, names: impl IntoIterator<Item = impl AsRef<str>>) -> Result<BTreeMap<String, Relation>, EvalError> {
        let mut out = BTreeMap::new();
        for name in names {
            let name = name.as_ref();
            let Some(&id) = self.names.get(name) else { continue };
            let (_, columns) = &self.schemas[id];
            let schema = RelationSchema { name: name.to_string(), columns: columns.clone(), key_len: 0 };
            let rel = Relation::from_tuples(schema, self.rels[id].rows.iter().cloned())
                .map_err(|e| EvalError::Schema { relation: name.to_string(), message: e.to_string() })?;
            out.insert(name.to_string(), rel);
        }
        Ok(out)
    }
}

struct Ctx<'a> {
    rels: &'a [IndexedRel],
    delta: &'a HashMap<usize, IndexedRel>,
    delta_at: Option<usize>,
    work: u64,
}

fn operand<'a>(o: &'a Operand, env: &'a [Value]) -> &'a Value {
    match o {
        Operand::Const(c) => c,
        Operand::Slot(s) => &env[*s],
    }
}

fn eval(e: &CExpr, env: &[Value]) -> Result<Value, String> {
    match e {
        CExpr::Op(o) => Ok(operand(o, env).clone()),
        CExpr::Bin(op, l, r) => arith(*op, &eval(l, env)?, &eval(r, env)?),
        CExpr::Call(f, args) => {
            let args = args.iter().map(|a| eval(a, env)).collect::<Result<Vec<_>, _>>()?;
            builtin(*f, &args)
        }
    }
}

fn exec(
    steps: &[Step],
    i: usize,
    env: &mut Vec<Value>,
    ctx: &mut Ctx<'_>,
    emit: &mut dyn FnMut(&[Value]) -> Result<(), String>,
) -> Result<(), String> {
    let Some(step) = steps.get(i) else { return emit(env) };
    match step {
        Step::Scan { rel, key_cols, key, assign, same, .. } => {
            let source: &IndexedRel = if ctx.delta_at == Some(i) {
                match ctx.delta.get(rel) {
                    Some(d) => d,
                    None => return Ok(()),
                }
            } else {
                &ctx.rels[*rel]
            };
            // Copy the rows matched so the borrow on ctx ends before recursion.
            let ids: Vec<usize> = if key_cols.is_empty() {
                (0..source.rows.len()).collect()
            } else {
                let k: Vec<Value> = key.iter().map(|o| operand(o, env).clone()).collect();
                match source.indexes.get(key_cols).and_then(|idx| idx.get(&k)) {
                    Some(ids) => ids.clone(),
                    None => return Ok(()),
                }
            };
            let rows: Vec<&Tuple> = ids.iter().map(|&id| &source.rows[id]).collect();
            for row in rows {
                if same.iter().any(|&(a, b)| row[a] != row[b]) {
                    continue;
                }
                for &(col, slot) in assign {
                    env[slot] = row[col].clone();
                }
                ctx.work += 1;
                exec(steps, i + 1, env, ctx, emit)?;
            }
            Ok(())
        }
        Step::Neg { rel, args } => {
            let t: Tuple = args.iter().map(|o| operand(o, env).clone()).collect();
            if ctx.rels[*rel].rows.contains(&t) {
                Ok(())
            } else {
                exec(steps, i + 1, env, ctx, emit)
            }
        }
        Step::Filter { op, left, right } => {
            if compare(*op, &eval(left, env)?, &eval(right, env)?)? {
                exec(steps, i + 1, env, ctx, emit)
            } else {
                Ok(())
            }
        }
        Step::Bind { slot, expr, check } => {
            let v = eval(expr, env)?;
            if *check {
                if env[*slot] != v {
                    return Ok(());
                }
            } else {
                env[*slot] = v;
            }
            exec(steps, i + 1, env, ctx, emit)
        }
        Step::Agg { slot, func, target, locals, steps: body } => {
            let mut seen: HashSet<Vec<Value>> = HashSet::new();
            let mut values: Vec<Value> = Vec::new();
            {
                let mut sub = Ctx { rels: ctx.rels, delta: ctx.delta, delta_at: None, work: 0 };
                let mut scratch = env.clone();
                exec(body, 0, &mut scratch, &mut sub, &mut |e| {
                    let key: Vec<Value> = locals.iter().map(|&s| e[s].clone()).collect();
                    if seen.insert(key) {
                        if let Some(t) = target {
                            values.push(operand(t, e).clone());
                        }
                    }
                    Ok(())
                })?;
                ctx.work += sub.work;
            }
            let result = match func {
                AggFn::Count => Some(Value::Int(seen.len() as i64)),
                AggFn::Sum => {
                    if values.is_empty() {
                        None
                    } else {
                        let mut total: i64 = 0;
                        for v in &values {
                            let n = v.as_int().ok_or("sum over a non-integer")?;
                            total = total.checked_add(n).ok_or("integer overflow in sum")?;
                        }
                        Some(Value::Int(total))
                    }
                }
                AggFn::Min => values.into_iter().min(),
                AggFn::Max => values.into_iter().max(),
            };
            match result {
                Some(v) => {
                    env[*slot] = v;
                    exec(steps, i + 1, env, ctx, emit)
                }
                None => Ok(()),
            }
        }
    }
}

struct Slots {
    map: HashMap<String, usize>,
}

impl Slots {
    fn get(&mut self, v: &str) -> usize {
        let n = self.map.len();
        *self.map.entry(v.to_string()).or_insert(n)
    }
}

fn compile_rule(rule: &Rule, names: &HashMap<String, usize>, members: &BTreeSet<usize>) -> Result<CompiledRule, EvalError> {
    let text = rule.to_string();
    let internal = |message: &str| EvalError::Internal { rule: text.clone(), message: message.to_string() };
    let rel_id = |p: &str| names.get(p).copied().ok_or_else(|| internal(&format!("unknown predicate `{p}`")));
    let mut slots = Slots { map: HashMap::new() };
    let mut bound: HashSet<String> = HashSet::new();
    let steps = compile_body(&rule.body, &mut slots, &mut bound, &rel_id, &internal)?;
    let mut head = Vec::new();
    for t in &rule.head.terms {
        head.push(match t {
            Term::Const(c) => Operand::Const(c.clone()),
            Term::Var(v) if bound.contains(v) => Operand::Slot(slots.get(v)),
            Term::Var(v) => return Err(internal(&format!("head variable `{v}` is unbound"))),
        });
    }
    let recursive = steps
        .iter()
        .enumerate()
        .filter(|(_, s)| matches!(s, Step::Scan { rel, .. } if members.contains(rel)))
        .map(|(i, _)| i)
        .collect();
    let head_rel = rel_id(&rule.head.predicate)?;
    Ok(CompiledRule { text: text.clone(), head_rel, head, slots: slots.map.len(), steps, recursive })
}

/// Emits steps in body order, deferring any literal whose inputs are not
/// yet bound to the earliest point where they are.
fn compile_body(
    body: &[Literal],
    slots: &mut Slots,
    bound: &mut HashSet<String>,
    rel_id: &dyn Fn(&str) -> Result<usize, EvalError>,
    internal: &dyn Fn(&str) -> EvalError,
) -> Result<Vec<Step>, EvalError> {
    let mut pending: Vec<(usize, &Literal)> = body.iter().enumerate().collect();
    let mut steps = Vec::new();
    while !pending.is_empty() {
        let Some(pos) = pending.iter().position(|(_, l)| l.required_vars().iter().all(|v| bound.contains(v))) else {
            return Err(internal("no literal can run with the current bindings"));
        };
        let (origin, lit) = pending.remove(pos);
        let term_op = |t: &Term, slots: &mut Slots| match t {
            Term::Const(c) => Operand::Const(c.clone()),
            Term::Var(v) => Operand::Slot(slots.get(v)),
        };
        match lit {
            Literal::Pos(atom) => {
                let mut key_cols = Vec::new();
                let mut key = Vec::new();
                let mut assign = Vec::new();
                let mut same = Vec::new();
                let mut first_col: HashMap<&str, usize> = HashMap::new();
                for (col, t) in atom.terms.iter().enumerate() {
                    match t {
                        Term::Var(v) if !bound.contains(v) => {
                            if let Some(&c) = first_col.get(v.as_str()) {
                                same.push((c, col));
                            } else {
                                first_col.insert(v, col);
                                assign.push((col, slots.get(v)));
                            }
                        }
                        _ => {
                            key_cols.push(col);
                            key.push(term_op(t, slots));
                        }
                    }
                }
                bound.extend(atom.vars().map(str::to_string));
                steps.push(Step::Scan { rel: rel_id(&atom.predicate)?, origin, key_cols, key, assign, same });
            }
            Literal::Neg(atom) => {
                let args = atom.terms.iter().map(|t| term_op(t, slots)).collect();
                steps.push(Step::Neg { rel: rel_id(&atom.predicate)?, args });
            }
            Literal::Cmp { op, left, right } => {
                steps.push(Step::Filter { op: *op, left: cexpr(left, slots), right: cexpr(right, slots) });
            }
            Literal::Bind { var, expr } => {
                let check = bound.contains(var);
                let expr = cexpr(expr, slots);
                bound.insert(var.clone());
                steps.push(Step::Bind { slot: slots.get(var), expr, check });
            }
            Literal::Agg(agg) => {
                let mut inner_bound: HashSet<String> = agg.group_vars.iter().cloned().collect();
                let inner = compile_body(&agg.body, slots, &mut inner_bound, rel_id, internal)?;
                let mut locals: Vec<String> = inner_bound.into_iter().filter(|v| !agg.group_vars.contains(v)).collect();
                locals.sort();
                let locals = locals.iter().map(|v| slots.get(v)).collect();
                let target = agg.target.as_ref().map(|t| term_op(t, slots));
                bound.insert(agg.result.clone());
                steps.push(Step::Agg { slot: slots.get(&agg.result), func: agg.func, target, locals, steps: inner });
            }
        }
    }
    Ok(steps)
}

fn cexpr(e: &Expr, slots: &mut Slots) -> CExpr {
    match e {
        Expr::Term(Term::Const(c)) => CExpr::Op(Operand::Const(c.clone())),
        Expr::Term(Term::Var(v)) => CExpr::Op(Operand::Slot(slots.get(v))),
        Expr::Binary(op, l, r) => CExpr::Bin(*op, Box::new(cexpr(l, slots)), Box::new(cexpr(r, slots))),
        Expr::Call(f, args) => CExpr::Call(*f, args.iter().map(|a| cexpr(a, slots)).collect()),
    }
}

/// Evaluates all strata in order, using rule bodies as written.
pub fn evaluate_seminaive(program: &Program, edb: &BTreeMap<String, Relation>) -> Result<Evaluation, EvalError> {
    let strat = prepare(program, edb)?;
    let mut engine = Engine::new(program, edb);
    let mut stats = EvalStats::default();
    for members in &strat.strata {
        let rules: Vec<Rule> = program.rules.iter().filter(|r| members.contains(&r.head.predicate)).cloned().collect();
        let compiled = engine.compile(&rules, members)?;
        stats.strata.push(engine.run_stratum(&compiled)?);
    }
    stats.peak_bytes = engine.peak_bytes();
    let relations = engine.relations(program.idb_names())?;
    Ok(Evaluation { relations, stats })
}

/// One semi-naive step for a single rule: the head tuples derivable when
/// the body literal at `delta_position` reads `deltas` and every other
/// atom reads `totals`, minus those already in `totals`.
pub fn apply_rule(
    rule: &Rule,
    delta_position: usize,
    totals: &BTreeMap<String, Relation>,
    deltas: &BTreeMap<String, Relation>,
) -> Result<BTreeSet<Tuple>, EvalError> {
    let mut engine = Engine { names: HashMap::new(), schemas: Vec::new(), rels: Vec::new(), parallel: false, peak_bytes: 0 };
    for (name, rel) in totals {
        let id = engine.add(name, rel.schema().columns.clone());
        for t in rel.iter() {
            engine.rels[id].insert(t.clone());
        }
    }
    if !engine.names.contains_key(&rule.head.predicate) {
        let arity = rule.head.terms.len();
        engine.add(&rule.head.predicate, (0..arity).map(|i| Column::int(format!("c{i}"))).collect());
    }
    let compiled = compile_rule(rule, &engine.names, &BTreeSet::new())?;
    let at = compiled
        .steps
        .iter()
        .position(|s| matches!(s, Step::Scan { origin, .. } if *origin == delta_position))
        .ok_or_else(|| EvalError::Internal { rule: compiled.text.clone(), message: format!("literal {delta_position} is not a positive atom") })?;
    let Step::Scan { rel: delta_rel, .. } = compiled.steps[at] else { unreachable!() };
    let delta_rel = &delta_rel;
    let delta_name = &engine.schemas[*delta_rel].0;
    let mut delta_map = HashMap::new();
    let mut d = IndexedRel::default();
    if let Some(rel) = deltas.get(delta_name) {
        for t in rel.iter() {
            d.insert(t.clone());
        }
    }
    let stratum = CompiledStratum { rules: vec![compiled], members: BTreeSet::new() };
    engine.prepare_indexes(&stratum);
    for cols in engine.rels[*delta_rel].indexes.keys() {
        d.ensure_index(cols);
    }
    delta_map.insert(*delta_rel, d);
    let mut stats = StratumStats::default();
    let new = engine.round(&stratum, &[(0, Some(at))], &delta_map, &mut stats)?;
    Ok(new.into_values().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datalog::testing::{ancestor_program, chain_edb};
    use crate::datalog::{evaluate_naive, Atom, Predicate, PredicateKind};

    #[test]
    fn chain_matches_naive_and_counts_rounds() {
        let p = ancestor_program();
        let edb = chain_edb(100);
        let eval = evaluate_seminaive(&p, &edb).unwrap();
        assert_eq!(eval.relations["ancestorclass"].len(), 4950);
        assert_eq!(eval.relations, evaluate_naive(&p, &edb).unwrap());
        let it = eval.stats.strata[0].iterations;
        assert!((99..=101).contains(&it), "iterations = {it}");
    }

    #[test]
    fn apply_rule_single_join() {
        let rule = ancestor_program().rules[2].clone();
        let pair = |name: &str, rows: &[(i64, i64)]| {
            let schema = RelationSchema::new(name, vec![Column::int("c0"), Column::int("c1")], 0).unwrap();
            Relation::from_tuples(schema, rows.iter().map(|&(a, b)| vec![Value::Int(a), Value::Int(b)])).unwrap()
        };
        let mut totals = BTreeMap::new();
        totals.insert("parent".to_string(), pair("parent", &[(1, 2)]));
        totals.insert("ancestorclass".to_string(), pair("ancestorclass", &[(2, 3)]));
        let mut deltas = BTreeMap::new();
        deltas.insert("ancestorclass".to_string(), pair("ancestorclass", &[(2, 3)]));
        let out = apply_rule(&rule, 1, &totals, &deltas).unwrap();
        assert_eq!(out, [vec![Value::Int(1), Value::Int(3)]].into_iter().collect());

        deltas.insert("ancestorclass".to_string(), pair("ancestorclass", &[]));
        assert!(apply_rule(&rule, 1, &totals, &deltas).unwrap().is_empty());
    }

    #[test]
    fn count_over_empty_group_is_zero() {
        let mut p = Program::new();
        p.declare(Predicate::ints("f", 1, PredicateKind::Edb));
        p.declare(Predicate::ints("call", 2, PredicateKind::Edb));
        p.declare(Predicate::ints("fanout", 2, PredicateKind::Idb));
        let v = Term::var;
        p.rules.push(Rule::new(
            Atom::new("fanout", vec![v("x"), v("n")]),
            vec![
                Literal::Pos(Atom::new("f", vec![v("x")])),
                Literal::Agg(super::super::Aggregate {
                    result: "n".into(),
                    func: AggFn::Count,
                    target: None,
                    group_vars: vec!["x".into()],
                    body: vec![Literal::Pos(Atom::new("call", vec![v("x"), v("y")]))],
                }),
            ],
        ));
        let f = RelationSchema::new("f", vec![Column::int("c0")], 0).unwrap();
        let c = RelationSchema::new("call", vec![Column::int("c0"), Column::int("c1")], 0).unwrap();
        let mut edb = BTreeMap::new();
        edb.insert("f".into(), Relation::from_tuples(f, [vec![Value::Int(1)], vec![Value::Int(2)]]).unwrap());
        edb.insert(
            "call".into(),
            Relation::from_tuples(c, [vec![Value::Int(1), Value::Int(5)], vec![Value::Int(1), Value::Int(6)]]).unwrap(),
        );
        let out = evaluate_seminaive(&p, &edb).unwrap().relations;
        let rows: Vec<_> = out["fanout"].iter().cloned().collect();
        assert_eq!(rows, vec![vec![Value::Int(1), Value::Int(2)], vec![Value::Int(2), Value::Int(0)]]);
        assert_eq!(out, evaluate_naive(&p, &edb).unwrap());
    }

    #[test]
    fn division_by_zero_names_the_rule() {
        let mut p = Program::new();
        p.declare(Predicate::ints("e", 1, PredicateKind::Edb));
        p.declare(Predicate::ints("r", 1, PredicateKind::Idb));
        p.rules.push(Rule::new(
            Atom::new("r", vec![Term::var("y")]),
            vec![
                Literal::Pos(Atom::new("e", vec![Term::var("x")])),
                Literal::Bind { var: "y".into(), expr: Expr::binary(ArithOp::Div, Expr::int(10), Expr::var("x")) },
            ],
        ));
        let schema = RelationSchema::new("e", vec![Column::int("c0")], 0).unwrap();
        let mut edb = BTreeMap::new();
        edb.insert("e".into(), Relation::from_tuples(schema, [vec![Value::Int(0)]]).unwrap());
        let err = evaluate_seminaive(&p, &edb).unwrap_err().to_string();
        assert!(err.contains("division by zero") && err.contains("r(y)"), "{err}");
        assert!(evaluate_naive(&p, &edb).unwrap_err().to_string().contains("division by zero"));
    }
}
