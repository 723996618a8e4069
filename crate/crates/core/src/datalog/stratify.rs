use std::collections::{BTreeMap, BTreeSet};

use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};

use super::{Literal, Program};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Polarity {
    Positive,
    Negative,
    Aggregate,
}

impl Polarity {
    pub fn name(self) -> &'static str {
        match self {
            Polarity::Positive => "positive",
            Polarity::Negative => "negative",
            Polarity::Aggregate => "aggregate",
        }
    }
}

/// Deduplicated `(from, to, polarity)` edges: `from` occurs in a body of a
/// rule whose head is `to`.
pub fn dependency_edges(program: &Program) -> BTreeSet<(String, String, Polarity)> {
    let mut edges = BTreeSet::new();
    for rule in &program.rules {
        for lit in &rule.body {
            for (p, pol) in lit.predicates() {
                edges.insert((p.to_string(), rule.head.predicate.clone(), pol));
            }
        }
    }
    edges
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stratification {
    pub strata: Vec<BTreeSet<String>>,
    /// IDB strongly connected components in an evaluation order, each with
    /// its recursion flag. Components of a lower stratum come first.
    pub components: Vec<(BTreeSet<String>, bool)>,
}

impl Stratification {
    pub fn stratum_of(&self, predicate: &str) -> Option<usize> {
        self.strata.iter().position(|s| s.contains(predicate))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StratifyError {
    #[error("program is not stratifiable: negation or aggregation inside the cycle {{{}}}", .cycle.join(", "))]
    NotStratifiable { cycle: Vec<String> },
    #[error("rule `{rule}` computes `{var}` from its own recursive predicates; arithmetic is not allowed inside recursion")]
    RecursiveArithmetic { rule: String, var: String },
}

/// Assigns every IDB predicate to the lowest stratum compatible with its
/// dependencies, so the stratum count is minimal.
pub fn stratify(program: &Program) -> Result<Stratification, StratifyError> {
    let mut graph: DiGraph<&str, Polarity> = DiGraph::new();
    let mut index: BTreeMap<&str, NodeIndex> = BTreeMap::new();
    for name in program.predicates.keys() {
        index.insert(name, graph.add_node(name));
    }
    let edges = dependency_edges(program);
    for (from, to, pol) in &edges {
        if let (Some(&a), Some(&b)) = (index.get(from.as_str()), index.get(to.as_str())) {
            graph.add_edge(a, b, *pol);
        }
    }

    // tarjan_scc yields components in reverse topological order.
    let mut sccs = tarjan_scc(&graph);
    sccs.reverse();
    let mut comp_of = vec![0usize; graph.node_count()];
    for (c, members) in sccs.iter().enumerate() {
        for n in members {
            comp_of[n.index()] = c;
        }
    }

    for e in graph.edge_indices() {
        let (a, b) = graph.edge_endpoints(e).unwrap();
        if comp_of[a.index()] == comp_of[b.index()] && graph[e] != Polarity::Positive {
            let mut cycle: Vec<String> = sccs[comp_of[a.index()]].iter().map(|n| graph[*n].to_string()).collect();
            cycle.sort();
            return Err(StratifyError::NotStratifiable { cycle });
        }
    }

    let recursive: Vec<bool> = sccs
        .iter()
        .map(|members| members.len() > 1 || graph.find_edge(members[0], members[0]).is_some())
        .collect();
    for rule in &program.rules {
        let Some(&head) = index.get(rule.head.predicate.as_str()) else { continue };
        let hc = comp_of[head.index()];
        if !recursive[hc] {
            continue;
        }
        let mut tainted: BTreeSet<String> = BTreeSet::new();
        for lit in &rule.body {
            if let Literal::Pos(a) = lit {
                if index.get(a.predicate.as_str()).is_some_and(|n| comp_of[n.index()] == hc) {
                    tainted.extend(a.vars().map(str::to_string));
                }
            }
        }
        // Values computed from tainted inputs are tainted too.
        loop {
            let before = tainted.len();
            for lit in &rule.body {
                if let Literal::Bind { var, expr } = lit {
                    let mut vs = Vec::new();
                    expr.vars(&mut vs);
                    if vs.iter().any(|v| tainted.contains(v)) {
                        if expr.is_computed() {
                            return Err(StratifyError::RecursiveArithmetic { rule: rule.to_string(), var: var.clone() });
                        }
                        tainted.insert(var.clone());
                    }
                }
            }
            if tainted.len() == before {
                break;
            }
        }
    }

    let mut level = vec![0usize; sccs.len()];
    for (c, members) in sccs.iter().enumerate() {
        for n in members {
            for e in graph.edges_directed(*n, petgraph::Direction::Incoming) {
                use petgraph::visit::EdgeRef;
                let src = comp_of[e.source().index()];
                if src == c {
                    continue;
                }
                let step = usize::from(*e.weight() != Polarity::Positive);
                level[c] = level[c].max(level[src] + step);
            }
        }
    }

    let mut by_level: BTreeMap<usize, BTreeSet<String>> = BTreeMap::new();
    let mut comp_members: BTreeMap<usize, BTreeSet<String>> = BTreeMap::new();
    for name in program.idb_names() {
        let c = comp_of[index[name].index()];
        by_level.entry(level[c]).or_default().insert(name.to_string());
        comp_members.entry(c).or_default().insert(name.to_string());
    }
    // Component indices are topological; a stable sort by level keeps that.
    let mut order: Vec<usize> = comp_members.keys().copied().collect();
    order.sort_by_key(|&c| level[c]);
    let components = order.into_iter().map(|c| (comp_members.remove(&c).unwrap(), recursive[c])).collect();
    Ok(Stratification { strata: by_level.into_values().collect(), components })
}
