use std::collections::BTreeSet;

use crate::datalog::{Literal, Program, Rule, Term};
use crate::facts::Manifest;

/// Greedy body reordering.
///
/// At each step the positive atom with the most bound argument positions
/// goes next, ties broken by `rank` (estimated cardinality, then
/// declaration order) and finally by original position. Every other
/// literal is placed as soon as all of its inputs are bound.
pub fn order_joins(rule: &Rule, rank: &dyn Fn(&str) -> (usize, usize)) -> Rule {
    Rule { head: rule.head.clone(), body: order_body(&rule.body, BTreeSet::new(), rank) }
}

fn order_body(body: &[Literal], mut bound: BTreeSet<String>, rank: &dyn Fn(&str) -> (usize, usize)) -> Vec<Literal> {
    let mut pending: Vec<&Literal> = body.iter().collect();
    let mut out = Vec::with_capacity(body.len());
    loop {
        // Flush every ready non-atom literal, in original order; a Bind may
        // unlock others, so repeat until nothing moves.
        loop {
            let ready = pending
                .iter()
                .position(|l| !matches!(l, Literal::Pos(_)) && l.required_vars().iter().all(|v| bound.contains(v)));
            let Some(i) = ready else { break };
            let lit = pending.remove(i);
            bound.extend(lit.bound_vars());
            out.push(match lit {
                Literal::Agg(agg) => {
                    let mut agg = agg.clone();
                    agg.body = order_body(&agg.body, agg.group_vars.iter().cloned().collect(), rank);
                    Literal::Agg(agg)
                }
                other => other.clone(),
            });
        }
        let best = pending
            .iter()
            .enumerate()
            .filter_map(|(i, l)| match l {
                Literal::Pos(a) => {
                    let bound_positions = a
                        .terms
                        .iter()
                        .filter(|t| match t {
                            Term::Const(_) => true,
                            Term::Var(v) => bound.contains(v),
                        })
                        .count();
                    Some((std::cmp::Reverse(bound_positions), rank(&a.predicate), i))
                }
                _ => None,
            })
            .min();
        let Some((_, _, i)) = best else { break };
        let lit = pending.remove(i);
        bound.extend(lit.bound_vars());
        out.push(lit.clone());
    }
    // Anything left can never become ready; keep it so evaluation reports it.
    out.extend(pending.into_iter().cloned());
    out
}

/// Reorders every rule body, using manifest row counts where available.
pub fn order_program(program: &Program, stats: Option<&Manifest>) -> Program {
    let rank = |p: &str| {
        let card = stats.and_then(|m| m.row_count(p)).unwrap_or(usize::MAX);
        let decl = program.predicates.get_index_of(p).unwrap_or(usize::MAX);
        (card, decl)
    };
    Program {
        predicates: program.predicates.clone(),
        rules: program.rules.iter().map(|r| order_joins(r, &rank)).collect(),
        outputs: program.outputs.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datalog::{Atom, CmpOp, Expr};

    fn atom(p: &str, vs: &[&str]) -> Literal {
        Literal::Pos(Atom::new(p, vs.iter().map(|v| Term::var(*v)).collect()))
    }

    fn names(r: &Rule) -> Vec<String> {
        r.body
            .iter()
            .map(|l| match l {
                Literal::Pos(a) => a.predicate.clone(),
                other => other.to_string(),
            })
            .collect()
    }

    #[test]
    fn smallest_relation_first_then_most_bound() {
        let rule = Rule::new(
            Atom::new("h", vec![Term::var("x"), Term::var("z")]),
            vec![atom("q", &["x", "y"]), atom("big", &["y", "z"]), atom("tiny", &["x"])],
        );
        let rank = |p: &str| match p {
            "tiny" => (1, 0),
            "q" => (100, 1),
            _ => (10_000, 2),
        };
        assert_eq!(names(&order_joins(&rule, &rank)), vec!["tiny", "q", "big"]);
    }

    #[test]
    fn single_literal_unchanged() {
        let rule = Rule::new(Atom::new("h", vec![Term::var("x")]), vec![atom("q", &["x"])]);
        assert_eq!(order_joins(&rule, &|_| (0, 0)), rule);
    }

    #[test]
    fn comparison_right_after_its_last_binding() {
        let rule = Rule::new(
            Atom::new("h", vec![Term::var("x")]),
            vec![
                Literal::cmp(CmpOp::Lt, Expr::var("x"), Expr::var("y")),
                atom("a", &["x"]),
                atom("b", &["z"]),
                atom("c", &["y"]),
            ],
        );
        // Declaration order a, b, c keeps the atoms in place.
        let rank = |p: &str| (usize::MAX, p.as_bytes()[0] as usize);
        let ordered = order_joins(&rule, &rank);
        assert_eq!(names(&ordered), vec!["a", "b", "c", "x < y"]);
    }
}
