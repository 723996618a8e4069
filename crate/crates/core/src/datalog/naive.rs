//! Reference evaluator: repeated full rule application with nested-loop
//! joins and no indexes. Kept simple so it can serve as a test oracle.

use std::collections::{BTreeMap, BTreeSet};

use crate::facts::{Relation, Value};

use super::expr::{compare, eval_expr};
use super::{prepare, into_relations, AggFn, Aggregate, Atom, EvalError, Literal, Program, Rule, Term};

type Env = BTreeMap<String, Value>;
type Db = BTreeMap<String, BTreeSet<Vec<Value>>>;

pub fn evaluate_naive(program: &Program, edb: &BTreeMap<String, Relation>) -> Result<BTreeMap<String, Relation>, EvalError> {
    let strat = prepare(program, edb)?;
    let mut db: Db = BTreeMap::new();
    for name in program.edb_names() {
        let tuples = edb.get(name).map(|r| r.tuples().clone()).unwrap_or_default();
        db.insert(name.to_string(), tuples);
    }
    for name in program.idb_names() {
        db.insert(name.to_string(), BTreeSet::new());
    }
    for stratum in &strat.strata {
        let rules: Vec<&Rule> = program.rules.iter().filter(|r| stratum.contains(&r.head.predicate)).collect();
        loop {
            let mut new: Vec<(String, Vec<Value>)> = Vec::new();
            for rule in &rules {
                let mut out = Vec::new();
                solve(rule, &rule.body, &mut vec![false; rule.body.len()], &db, Env::new(), &mut out)?;
                for env in out {
                    let tuple = rule
                        .head
                        .terms
                        .iter()
                        .map(|t| term_value(t, &env).ok_or_else(|| internal(rule, "head variable unbound")))
                        .collect::<Result<Vec<_>, _>>()?;
                    new.push((rule.head.predicate.clone(), tuple));
                }
            }
            let mut grew = false;
            for (p, t) in new {
                grew |= db.get_mut(&p).unwrap().insert(t);
            }
            if !grew {
                break;
            }
        }
    }
    let derived = db.into_iter().filter(|(k, _)| program.is_idb(k)).collect();
    into_relations(program, derived)
}

fn internal(rule: &Rule, message: &str) -> EvalError {
    EvalError::Internal { rule: rule.to_string(), message: message.to_string() }
}

fn term_value(t: &Term, env: &Env) -> Option<Value> {
    match t {
        Term::Const(c) => Some(c.clone()),
        Term::Var(v) => env.get(v).cloned(),
    }
}

fn ready(lit: &Literal, env: &Env) -> bool {
    lit.required_vars().iter().all(|v| env.contains_key(v))
}

/// Enumerates every extension of `env` satisfying `remaining`, running the
/// first literal (in body order) whose inputs are bound.
fn solve(rule: &Rule, body: &[Literal], done: &mut Vec<bool>, db: &Db, env: Env, out: &mut Vec<Env>) -> Result<(), EvalError> {
    if done.iter().all(|d| *d) {
        out.push(env);
        return Ok(());
    }
    let Some(pos) = (0..body.len()).find(|&i| !done[i] && ready(&body[i], &env)) else {
        return Err(internal(rule, "no literal can run with the current bindings"));
    };
    done[pos] = true;
    let result = solve_one(rule, body, pos, done, db, env, out);
    done[pos] = false;
    result
}

fn solve_one(rule: &Rule, body: &[Literal], pos: usize, done: &mut Vec<bool>, db: &Db, env: Env, out: &mut Vec<Env>) -> Result<(), EvalError> {
    let lit = &body[pos];
    let rule_err = |message: String| EvalError::Rule { rule: rule.to_string(), message };
    match lit {
        Literal::Pos(atom) => {
            for tuple in db.get(&atom.predicate).into_iter().flatten() {
                if let Some(e) = unify(atom, tuple, &env) {
                    solve(rule, body, done, db, e, out)?;
                }
            }
        }
        Literal::Neg(atom) => {
            let hit = db.get(&atom.predicate).into_iter().flatten().any(|t| unify(atom, t, &env).is_some());
            if !hit {
                solve(rule, body, done, db, env, out)?;
            }
        }
        Literal::Cmp { op, left, right } => {
            let l = eval_expr(left, &|v| env.get(v)).map_err(rule_err)?;
            let r = eval_expr(right, &|v| env.get(v)).map_err(rule_err)?;
            if compare(*op, &l, &r).map_err(rule_err)? {
                solve(rule, body, done, db, env, out)?;
            }
        }
        Literal::Bind { var, expr } => {
            let v = eval_expr(expr, &|v| env.get(v)).map_err(rule_err)?;
            let mut e = env;
            match e.get(var) {
                Some(existing) if *existing != v => return Ok(()),
                Some(_) => {}
                None => {
                    e.insert(var.clone(), v);
                }
            }
            solve(rule, body, done, db, e, out)?;
        }
        Literal::Agg(agg) => {
            if let Some(v) = aggregate(rule, agg, db, &env)? {
                let mut e = env;
                e.insert(agg.result.clone(), v);
                solve(rule, body, done, db, e, out)?;
            }
        }
    }
    Ok(())
}

fn aggregate(rule: &Rule, agg: &Aggregate, db: &Db, env: &Env) -> Result<Option<Value>, EvalError> {
    let inner: Env = agg.group_vars.iter().filter_map(|g| env.get(g).map(|v| (g.clone(), v.clone()))).collect();
    let mut bindings = Vec::new();
    solve(rule, &agg.body, &mut vec![false; agg.body.len()], db, inner, &mut bindings)?;
    let distinct: BTreeSet<Env> = bindings.into_iter().collect();
    if agg.func == AggFn::Count {
        return Ok(Some(Value::Int(distinct.len() as i64)));
    }
    let target = agg.target.as_ref().ok_or_else(|| internal(rule, "aggregate without a target"))?;
    let values: Vec<Value> = distinct.iter().filter_map(|e| term_value(target, e)).collect();
    if values.is_empty() {
        return Ok(None);
    }
    Ok(Some(match agg.func {
        AggFn::Sum => {
            let mut total: i64 = 0;
            for v in &values {
                let i = v.as_int().ok_or_else(|| internal(rule, "sum over a non-integer"))?;
                total = total
                    .checked_add(i)
                    .ok_or_else(|| EvalError::Rule { rule: rule.to_string(), message: "integer overflow in sum".into() })?;
            }
            Value::Int(total)
        }
        AggFn::Min => values.into_iter().min().unwrap(),
        AggFn::Max => values.into_iter().max().unwrap(),
        AggFn::Count => unreachable!(),
    }))
}

fn unify(atom: &Atom, tuple: &[Value], env: &Env) -> Option<Env> {
    if atom.terms.len() != tuple.len() {
        return None;
    }
    let matches = atom.terms.iter().zip(tuple).all(|(t, v)| match t {
        Term::Const(c) => c == v,
        Term::Var(name) => env.get(name).map_or(true, |b| b == v),
    });
    if !matches {
        return None;
    }
    let mut e = env.clone();
    for (t, v) in atom.terms.iter().zip(tuple) {
        match t {
            Term::Const(c) => {
                if c != v {
                    return None;
                }
            }
            Term::Var(name) => match e.get(name) {
                Some(bound) if bound != v => return None,
                Some(_) => {}
                None => {
                    e.insert(name.clone(), v.clone());
                }
            },
        }
    }
    Some(e)
}
