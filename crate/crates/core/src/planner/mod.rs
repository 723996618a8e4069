//! Turns a Datalog program into a pruned, join-ordered, staged plan.

mod exec;
mod order;

pub use exec::{evaluate_plan, PlanExecution, StageReport};
pub use order::{order_joins, order_program};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::datalog::{dependency_edges, stratify, EvalError, Literal, Polarity, Program, Rule};
use crate::facts::Manifest;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DependencyGraph {
    pub nodes: BTreeSet<String>,
    pub edges: BTreeSet<(String, String, Polarity)>,
}

impl DependencyGraph {
    /// Predicates the given ones depend on, transitively, including themselves.
    pub fn backward_reachable<'a>(&self, from: impl IntoIterator<Item = &'a str>) -> BTreeSet<String> {
        let mut preds: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for (a, b, _) in &self.edges {
            preds.entry(b.as_str()).or_default().push(a.as_str());
        }
        let mut seen: BTreeSet<String> = BTreeSet::new();
        let mut stack: Vec<&str> = from.into_iter().collect();
        while let Some(p) = stack.pop() {
            if seen.insert(p.to_string()) {
                stack.extend(preds.get(p).into_iter().flatten());
            }
        }
        seen
    }
}

pub fn build_dependency_graph(program: &Program) -> DependencyGraph {
    let edges = dependency_edges(program);
    let mut nodes: BTreeSet<String> = program.predicates.keys().cloned().collect();
    for (a, b, _) in &edges {
        nodes.insert(a.clone());
        nodes.insert(b.clone());
    }
    DependencyGraph { nodes, edges }
}

/// Keeps only the rules (and declarations) for predicates the outputs
/// depend on.
pub fn prune_unreachable(program: &Program) -> Program {
    let graph = build_dependency_graph(program);
    let keep = graph.backward_reachable(program.outputs.iter().map(String::as_str));
    Program {
        predicates: program.predicates.iter().filter(|(k, _)| keep.contains(*k)).map(|(k, v)| (k.clone(), v.clone())).collect(),
        rules: program.rules.iter().filter(|r| keep.contains(&r.head.predicate)).cloned().collect(),
        outputs: program.outputs.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Operator {
    Scan(String),
    Join(Vec<String>),
    Filter(String),
    Project(String),
    Union(String),
    Difference(String),
    Aggregate(String),
    FixpointLoop(Vec<String>),
}

impl Operator {
    fn label(&self) -> String {
        match self {
            Operator::Scan(s) => format!("scan {s}"),
            Operator::Join(on) if on.is_empty() => "join (cross)".to_string(),
            Operator::Join(on) => format!("join on {}", on.join(", ")),
            Operator::Filter(s) => format!("filter {s}"),
            Operator::Project(s) => format!("project {s}"),
            Operator::Union(s) => format!("union {s}"),
            Operator::Difference(s) => format!("difference {s}"),
            Operator::Aggregate(s) => format!("aggregate {s}"),
            Operator::FixpointLoop(p) => format!("fixpoint {}", p.join(", ")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanNode {
    pub id: usize,
    pub op: Operator,
    pub inputs: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stage {
    pub id: usize,
    pub targets: BTreeSet<String>,
    /// Rules with bodies in execution order.
    pub rules: Vec<Rule>,
    pub nodes: Vec<PlanNode>,
    pub recursive: bool,
}

impl Stage {
    /// Relations read by this stage that it does not define itself.
    pub fn inputs(&self) -> BTreeSet<String> {
        fn walk(body: &[Literal], out: &mut BTreeSet<String>) {
            for l in body {
                match l {
                    Literal::Pos(a) | Literal::Neg(a) => {
                        out.insert(a.predicate.clone());
                    }
                    Literal::Agg(agg) => walk(&agg.body, out),
                    _ => {}
                }
            }
        }
        let mut out = BTreeSet::new();
        for r in &self.rules {
            walk(&r.body, &mut out);
        }
        out.retain(|p| !self.targets.contains(p));
        out
    }
}

#[derive(Debug, Clone)]
pub struct ExecutionPlan {
    pub stages: Vec<Stage>,
    pub node_count_before: usize,
    pub node_count_after: usize,
    pub rule_count_before: usize,
    pub rule_count_after: usize,
    /// The pruned program with reordered bodies.
    pub program: Program,
}

impl ExecutionPlan {
    pub fn outputs(&self) -> &BTreeSet<String> {
        &self.program.outputs
    }

    /// Relations the plan reads but never derives.
    pub fn edb_inputs(&self) -> BTreeSet<String> {
        self.program.edb_names().map(str::to_string).collect()
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for stage in &self.stages {
            let kind = if stage.recursive { " (recursive)" } else { "" };
            let targets: Vec<&str> = stage.targets.iter().map(String::as_str).collect();
            let _ = writeln!(s, "stage {}{}: {}", stage.id, kind, targets.join(", "));
            for r in &stage.rules {
                let _ = writeln!(s, "  {r}");
            }
            for n in &stage.nodes {
                let inputs = if n.inputs.is_empty() {
                    String::new()
                } else {
                    format!(" <- {}", n.inputs.iter().map(|i| format!("#{i}")).collect::<Vec<_>>().join(" "))
                };
                let _ = writeln!(s, "    #{} {}{}", n.id, n.op.label(), inputs);
            }
        }
        let _ = writeln!(s, "rules: {} -> {}", self.rule_count_before, self.rule_count_after);
        let _ = writeln!(s, "nodes: {} -> {}", self.node_count_before, self.node_count_after);
        s
    }
}

/// Prunes, orders and stages `program`. Operator counts are reported for
/// the program as given and for the pruned one.
pub fn lower_to_plan(program: &Program, stats: Option<&Manifest>) -> Result<ExecutionPlan, EvalError> {
    program.validate()?;
    let before = operator_count(program, stats)?;
    let pruned = order_program(&prune_unreachable(program), stats);
    let strat = stratify(&pruned)?;
    let by_head = pruned.rules_by_head();
    let mut stages = Vec::new();
    let mut next_id = 0;
    for (i, (members, _)) in strat.components.iter().enumerate() {
        let rules: Vec<Rule> = members
            .iter()
            .flat_map(|m| by_head.get(m.as_str()).into_iter().flatten())
            .map(|&ri| pruned.rules[ri].clone())
            .collect();
        let (nodes, recursive) = stage_nodes(&rules, members, &mut next_id);
        stages.push(Stage { id: i, targets: members.clone(), rules, nodes, recursive });
    }
    let after: usize = stages.iter().map(|s| s.nodes.len()).sum();
    Ok(ExecutionPlan {
        stages,
        node_count_before: before,
        node_count_after: after,
        rule_count_before: program.rules.len(),
        rule_count_after: pruned.rules.len(),
        program: pruned,
    })
}

/// Operators needed to run every rule of `program`, pruned or not.
pub fn operator_count(program: &Program, stats: Option<&Manifest>) -> Result<usize, EvalError> {
    let ordered = order_program(program, stats);
    let strat = stratify(&ordered)?;
    let by_head = ordered.rules_by_head();
    let mut next_id = 0;
    let mut total = 0;
    for (members, _) in &strat.components {
        let rules: Vec<Rule> =
            members.iter().flat_map(|m| by_head.get(m.as_str()).into_iter().flatten()).map(|&ri| ordered.rules[ri].clone()).collect();
        total += stage_nodes(&rules, members, &mut next_id).0.len();
    }
    Ok(total)
}

fn stage_nodes(rules: &[Rule], members: &BTreeSet<String>, next_id: &mut usize) -> (Vec<PlanNode>, bool) {
    let mut nodes = Vec::new();
    let mut push = |op: Operator, inputs: Vec<usize>, nodes: &mut Vec<PlanNode>| {
        let id = *next_id;
        *next_id += 1;
        nodes.push(PlanNode { id, op, inputs });
        id
    };
    let mut recursive = false;
    let mut heads: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for rule in rules {
        let mut bound: BTreeSet<String> = BTreeSet::new();
        let cur = body_nodes(&rule.body, &mut bound, None, &mut nodes, &mut push, members, &mut recursive);
        let head = push(Operator::Project(rule.head.to_string()), cur.into_iter().collect(), &mut nodes);
        heads.entry(rule.head.predicate.as_str()).or_default().push(head);
    }
    let mut finals = Vec::new();
    for (pred, ids) in heads {
        if ids.len() > 1 {
            finals.push(push(Operator::Union(pred.to_string()), ids, &mut nodes));
        } else {
            finals.extend(ids);
        }
    }
    if recursive {
        push(Operator::FixpointLoop(members.iter().cloned().collect()), finals, &mut nodes);
    }
    (nodes, recursive)
}

#[allow(clippy::too_many_arguments)]
fn body_nodes(
    body: &[Literal],
    bound: &mut BTreeSet<String>,
    mut cur: Option<usize>,
    nodes: &mut Vec<PlanNode>,
    push: &mut dyn FnMut(Operator, Vec<usize>, &mut Vec<PlanNode>) -> usize,
    members: &BTreeSet<String>,
    recursive: &mut bool,
) -> Option<usize> {
    for lit in body {
        match lit {
            Literal::Pos(a) => {
                *recursive |= members.contains(&a.predicate);
                let scan = push(Operator::Scan(a.to_string()), vec![], nodes);
                cur = Some(match cur {
                    None => scan,
                    Some(c) => {
                        let on: Vec<String> = a.vars().filter(|v| bound.contains(*v)).map(str::to_string).collect();
                        push(Operator::Join(on), vec![c, scan], nodes)
                    }
                });
                bound.extend(a.vars().map(str::to_string));
            }
            Literal::Neg(a) => {
                let scan = push(Operator::Scan(a.to_string()), vec![], nodes);
                let inputs = cur.into_iter().chain([scan]).collect();
                cur = Some(push(Operator::Difference(a.to_string()), inputs, nodes));
            }
            Literal::Cmp { .. } => cur = Some(push(Operator::Filter(lit.to_string()), cur.into_iter().collect(), nodes)),
            Literal::Bind { var, .. } => {
                bound.insert(var.clone());
                cur = Some(push(Operator::Project(lit.to_string()), cur.into_iter().collect(), nodes));
            }
            Literal::Agg(agg) => {
                let mut inner_bound: BTreeSet<String> = agg.group_vars.iter().cloned().collect();
                let sub = body_nodes(&agg.body, &mut inner_bound, None, nodes, push, members, recursive);
                let inputs = cur.into_iter().chain(sub).collect();
                bound.insert(agg.result.clone());
                cur = Some(push(Operator::Aggregate(format!("{} := {}", agg.result, agg.func)), inputs, nodes));
            }
        }
    }
    cur
}
