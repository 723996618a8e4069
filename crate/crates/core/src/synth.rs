//! Seeded generators for synthetic repositories and Datalog programs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::datalog::{AggFn, Aggregate, Atom, CmpOp, Expr, Literal, Predicate, PredicateKind, Program, Rule, Term};
use crate::facts::{Column, Relation, RelationSchema, Value};

fn int_relation(name: &str, arity: usize, rows: impl IntoIterator<Item = Vec<i64>>) -> Relation {
    let cols = (0..arity).map(|i| Column::int(format!("c{i}"))).collect();
    let schema = RelationSchema::new(name, cols, arity).expect("valid schema");
    Relation::from_tuples(schema, rows.into_iter().map(|r| r.into_iter().map(Value::Int).collect())).expect("int rows")
}

/// `parent` and the transitive `ancestorclass` over `class/1` and
/// `extends/2`.
pub fn ancestor_program() -> Program {
    let mut p = Program::new();
    p.declare(Predicate::ints("class", 1, PredicateKind::Edb));
    p.declare(Predicate::ints("extends", 2, PredicateKind::Edb));
    p.declare(Predicate::ints("parent", 2, PredicateKind::Idb));
    p.declare(Predicate::ints("ancestorclass", 2, PredicateKind::Idb));
    let v = Term::var;
    let pos = |name: &str, terms: Vec<Term>| Literal::Pos(Atom::new(name, terms));
    p.rules.push(Rule::new(
        Atom::new("parent", vec![v("a"), v("b")]),
        vec![pos("class", vec![v("a")]), pos("extends", vec![v("a"), v("b")]), pos("class", vec![v("b")])],
    ));
    p.rules.push(Rule::new(Atom::new("ancestorclass", vec![v("a"), v("b")]), vec![pos("parent", vec![v("a"), v("b")])]));
    p.rules.push(Rule::new(
        Atom::new("ancestorclass", vec![v("a"), v("c")]),
        vec![pos("parent", vec![v("a"), v("b")]), pos("ancestorclass", vec![v("b"), v("c")])],
    ));
    p.outputs.insert("ancestorclass".into());
    p
}

/// Classes `0..n` where class `i` extends class `i + 1`.
pub fn class_chain(n: i64) -> BTreeMap<String, Relation> {
    let mut m = BTreeMap::new();
    m.insert("class".into(), int_relation("class", 1, (0..n).map(|i| vec![i])));
    m.insert("extends".into(), int_relation("extends", 2, (0..n.max(1) - 1).map(|i| vec![i, i + 1])));
    m
}

/// A random safe, stratified program over small integer relations.
///
/// Derived predicates come in groups; rules may use any predicate of their
/// own or an earlier group positively (so recursion, including mutual
/// recursion, occurs) but negate or aggregate only earlier groups.
pub fn random_program(seed: u64) -> (Program, BTreeMap<String, Relation>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut program = Program::new();
    let mut edb = BTreeMap::new();
    let domain = rng.gen_range(3..7i64);
    let mut preds: Vec<(String, usize, usize)> = Vec::new(); // (name, arity, group)
    for i in 0..rng.gen_range(2..4) {
        let name = format!("e{i}");
        let arity = rng.gen_range(1..3);
        let rows: Vec<Vec<i64>> =
            (0..rng.gen_range(0..12)).map(|_| (0..arity).map(|_| rng.gen_range(0..domain)).collect()).collect();
        program.declare(Predicate::ints(&name, arity, PredicateKind::Edb));
        edb.insert(name.clone(), int_relation(&name, arity, rows));
        preds.push((name, arity, 0));
    }
    let groups = rng.gen_range(1..4);
    let mut idb = Vec::new();
    for g in 1..=groups {
        for _ in 0..rng.gen_range(1..3) {
            let name = format!("p{}", idb.len());
            let arity = rng.gen_range(1..3);
            program.declare(Predicate::ints(&name, arity, PredicateKind::Idb));
            idb.push((name.clone(), arity, g));
        }
    }
    preds.extend(idb.iter().cloned());
    let vars = ["x", "y", "z", "w"];
    for (head, arity, group) in &idb {
        for _ in 0..rng.gen_range(1..4) {
            let positive: Vec<&(String, usize, usize)> = preds.iter().filter(|p| p.2 <= *group).collect();
            let lower: Vec<&(String, usize, usize)> = preds.iter().filter(|p| p.2 < *group).collect();
            let mut body = Vec::new();
            let mut bound: Vec<&str> = Vec::new();
            // The first atom reads a lower group so every rule has a chance to fire.
            for k in 0..rng.gen_range(1..4) {
                let pool = if k == 0 { &lower } else { &positive };
                let (name, a, _) = pool.choose(&mut rng).expect("edb predicates exist");
                let terms: Vec<Term> = (0..*a)
                    .map(|_| {
                        if rng.gen_bool(0.1) {
                            Term::int(rng.gen_range(0..domain))
                        } else {
                            let v = *vars.choose(&mut rng).expect("vars");
                            if !bound.contains(&v) {
                                bound.push(v);
                            }
                            Term::var(v)
                        }
                    })
                    .collect();
                body.push(Literal::Pos(Atom::new(name.clone(), terms)));
            }
            if bound.is_empty() {
                bound.push("x");
                body.push(Literal::Pos(Atom::new(lower[0].0.clone(), (0..lower[0].1).map(|_| Term::var("x")).collect())));
            }
            if rng.gen_bool(0.3) {
                let (name, a, _) = lower.choose(&mut rng).expect("lower predicates exist");
                let terms = (0..*a).map(|_| Term::var(*bound.choose(&mut rng).expect("bound"))).collect();
                body.push(Literal::Neg(Atom::new(name.clone(), terms)));
            }
            if rng.gen_bool(0.3) {
                let ops = [CmpOp::Lt, CmpOp::Le, CmpOp::Ne, CmpOp::Eq, CmpOp::Gt, CmpOp::Ge];
                let l = *bound.choose(&mut rng).expect("bound");
                let right = if rng.gen_bool(0.5) {
                    Expr::var(bound.choose(&mut rng).expect("bound"))
                } else {
                    Expr::int(rng.gen_range(0..domain))
                };
                body.push(Literal::cmp(*ops.choose(&mut rng).expect("ops"), Expr::var(l), right));
            }
            let mut head_terms: Vec<Term> = (0..*arity).map(|_| Term::var(*bound.choose(&mut rng).expect("bound"))).collect();
            if rng.gen_bool(0.2) {
                if let Some((name, 2, _)) = lower.iter().copied().filter(|p| p.1 == 2).collect::<Vec<_>>().choose(&mut rng).copied() {
                    let g = *bound.choose(&mut rng).expect("bound");
                    let func = *[AggFn::Count, AggFn::Sum, AggFn::Min, AggFn::Max].choose(&mut rng).expect("fns");
                    body.push(Literal::Agg(Aggregate {
                        result: "n".into(),
                        func,
                        target: Some(Term::var("t")),
                        group_vars: vec![g.to_string()],
                        body: vec![Literal::Pos(Atom::new(name.clone(), vec![Term::var(g), Term::var("t")]))],
                    }));
                    head_terms[0] = Term::var("n");
                }
            }
            program.rules.push(Rule::new(Atom::new(head.clone(), head_terms), body));
        }
    }
    for (name, _, _) in &idb {
        program.outputs.insert(name.clone());
    }
    (program, edb)
}

/// A library of `total` rules in which `out` depends on exactly `reached`
/// of them (a chain `out <- q1 <- ... <- e`). The remaining rules derive
/// other predicates, some of which read the chain.
pub fn layered_library(total: usize, reached: usize, seed: u64) -> Program {
    assert!(reached >= 1 && total >= reached);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = Program::new();
    p.declare(Predicate::ints("e", 2, PredicateKind::Edb));
    p.declare(Predicate::ints("f", 2, PredicateKind::Edb));
    let v = Term::var;
    let chain: Vec<String> = (0..reached).map(|i| if i == 0 { "out".to_string() } else { format!("q{i}") }).collect();
    for name in &chain {
        p.declare(Predicate::ints(name, 2, PredicateKind::Idb));
    }
    for (i, name) in chain.iter().enumerate() {
        let src = chain.get(i + 1).cloned().unwrap_or_else(|| "e".to_string());
        let body = if i % 2 == 0 {
            vec![Literal::Pos(Atom::new(src, vec![v("a"), v("b")]))]
        } else {
            vec![Literal::Pos(Atom::new(src, vec![v("a"), v("b")])), Literal::Pos(Atom::new("e", vec![v("b"), v("c")]))]
        };
        let head = if i % 2 == 0 { vec![v("a"), v("b")] } else { vec![v("a"), v("c")] };
        p.rules.push(Rule::new(Atom::new(name.clone(), head), body));
    }
    let others = total - reached;
    let names: Vec<String> = (0..others.div_ceil(2).max(1)).map(|i| format!("r{i}")).collect();
    for n in &names {
        p.declare(Predicate::ints(n, 2, PredicateKind::Idb));
    }
    for k in 0..others {
        let head = names[k % names.len()].clone();
        let mut sources: Vec<String> = vec!["e".into(), "f".into()];
        sources.extend(chain.iter().cloned());
        sources.extend(names.iter().cloned());
        let a = sources.choose(&mut rng).expect("sources").clone();
        let b = sources.choose(&mut rng).expect("sources").clone();
        p.rules.push(Rule::new(
            Atom::new(head, vec![v("x"), v("z")]),
            vec![Literal::Pos(Atom::new(a, vec![v("x"), v("y")])), Literal::Pos(Atom::new(b, vec![v("y"), v("z")]))],
        ));
    }
    p.outputs.insert("out".into());
    p
}

/// Random edges for the `e` and `f` relations of [`layered_library`].
pub fn layered_edb(nodes: i64, edges: usize, seed: u64) -> BTreeMap<String, Relation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = BTreeMap::new();
    for name in ["e", "f"] {
        let rows: Vec<Vec<i64>> = (0..edges).map(|_| vec![rng.gen_range(0..nodes), rng.gen_range(0..nodes)]).collect();
        m.insert(name.to_string(), int_relation(name, 2, rows));
    }
    m
}

/// Source of one synthetic module. `version` changes the body so edits
/// can be simulated; the same (index, files, version, seed) always yields
/// the same text.
pub fn python_module(index: usize, files: usize, version: u32, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((index as u64) << 20) ^ u64::from(version).wrapping_mul(0x9e37_79b9));
    let mut s = String::new();
    let _ = writeln!(s, "\"\"\"Synthetic module {index}.\"\"\"");
    let _ = writeln!(s);
    let _ = writeln!(s, "import os");
    if index > 0 {
        let _ = writeln!(s, "from mod_{} import helper_{}", (index - 1) % files.max(1), (index - 1) % files.max(1));
    }
    let _ = writeln!(s);
    let base = if index > 0 && rng.gen_bool(0.5) { format!("(Class{})", rng.gen_range(0..index)) } else { String::new() };
    let _ = writeln!(s, "\n# version {version}");
    let _ = writeln!(s, "class Class{index}{base}:");
    let _ = writeln!(s, "    \"\"\"Holds state for module {index}.\"\"\"");
    let _ = writeln!(s);
    let _ = writeln!(s, "    def __init__(self, size):");
    let _ = writeln!(s, "        self.size = size");
    let _ = writeln!(s, "        self.items = []");
    for m in 0..rng.gen_range(2..5) {
        let _ = writeln!(s);
        let _ = writeln!(s, "    def method_{m}(self, value, limit=10):");
        let _ = writeln!(s, "        total = 0");
        let _ = writeln!(s, "        for i in range(limit):");
        let _ = writeln!(s, "            if i % {} == 0 and value > i:", m + 2);
        let _ = writeln!(s, "                total += self.method_{}(i)", (m + 1) % 2);
        let _ = writeln!(s, "            elif value < 0:");
        let _ = writeln!(s, "                break");
        let _ = writeln!(s, "        # accumulate");
        let _ = writeln!(s, "        self.items.append(total)");
        let _ = writeln!(s, "        return total + {}", rng.gen_range(0..100));
    }
    for f in 0..rng.gen_range(2..5) {
        let target = rng.gen_range(0..files.max(1));
        let _ = writeln!(s);
        let _ = writeln!(s);
        let _ = writeln!(s, "def function_{f}(xs):");
        let _ = writeln!(s, "    result = []");
        let _ = writeln!(s, "    while xs:");
        let _ = writeln!(s, "        x = xs.pop()");
        let _ = writeln!(s, "        try:");
        let _ = writeln!(s, "            result.append(helper_{target}(x))");
        let _ = writeln!(s, "        except ValueError:");
        let _ = writeln!(s, "            continue");
        let _ = writeln!(s, "    return sorted(result, key=lambda r: r or 0)");
    }
    let _ = writeln!(s);
    let _ = writeln!(s);
    let _ = writeln!(s, "def helper_{index}(x):");
    let _ = writeln!(s, "    obj = Class{index}(x)");
    let _ = writeln!(s, "    return obj.method_0(x) + function_0([x])");
    s
}

/// Writes a synthetic Python repository of `files` modules under `dir`.
pub fn write_python_repo(dir: &Path, files: usize, seed: u64) -> io::Result<Vec<String>> {
    std::fs::create_dir_all(dir)?;
    let mut names = Vec::new();
    for i in 0..files {
        let name = format!("mod_{i}.py");
        std::fs::write(dir.join(&name), python_module(i, files, 0, seed))?;
        names.push(name);
    }
    names.sort();
    Ok(names)
}

/// Rewrites module `index` of a synthetic repository at a new version.
pub fn edit_python_module(dir: &Path, index: usize, files: usize, version: u32, seed: u64) -> io::Result<String> {
    let name = format!("mod_{index}.py");
    std::fs::write(dir.join(&name), python_module(index, files, version, seed))?;
    Ok(name)
}

/// A Python file declaring classes `C0` to `C{n-1}`, each extending the
/// next one.
pub fn python_class_chain(n: usize) -> String {
    let mut s = String::new();
    for i in (0..n).rev() {
        if i + 1 < n {
            let _ = writeln!(s, "class C{i}(C{}):\n    pass\n", i + 1);
        } else {
            let _ = writeln!(s, "class C{i}:\n    pass\n");
        }
    }
    s
}
