use std::collections::BTreeSet;
use std::fmt;

use super::{Literal, Program};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SafetyDiagnostic {
    pub rule: usize,
    pub var: String,
    pub reason: &'static str,
}

impl fmt::Display for SafetyDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "rule {}: variable `{}` {}", self.rule, self.var, self.reason)
    }
}

/// Checks every rule; an empty result means the program is safe.
pub fn check_safety(program: &Program) -> Vec<SafetyDiagnostic> {
    let mut diags = Vec::new();
    for (i, rule) in program.rules.iter().enumerate() {
        let bound = check_body(i, &rule.body, &BTreeSet::new(), &mut diags);
        let mut seen = BTreeSet::new();
        for v in rule.head.vars() {
            if !bound.contains(v) && seen.insert(v) {
                diags.push(SafetyDiagnostic { rule: i, var: v.to_string(), reason: "appears in the head but is never bound" });
            }
        }
    }
    diags
}

/// Returns the variables bound by `body` given `outer` pre-bound ones.
fn check_body(rule: usize, body: &[Literal], outer: &BTreeSet<String>, diags: &mut Vec<SafetyDiagnostic>) -> BTreeSet<String> {
    let mut bound: BTreeSet<String> = outer.clone();

    // Binds may only introduce a variable nobody else binds earlier.
    let mut bound_so_far: BTreeSet<String> = outer.clone();
    for lit in body {
        if let Literal::Bind { var, .. } = lit {
            if bound_so_far.contains(var) {
                diags.push(SafetyDiagnostic { rule, var: var.clone(), reason: "is bound again by an assignment" });
            }
        }
        bound_so_far.extend(lit.bound_vars());
    }

    for lit in body {
        if let Literal::Pos(a) = lit {
            bound.extend(a.vars().map(str::to_string));
        }
    }
    // Binds and aggregates can chain, so iterate to a fixpoint.
    loop {
        let before = bound.len();
        for lit in body {
            match lit {
                Literal::Bind { .. } | Literal::Agg(_) => {
                    if lit.required_vars().iter().all(|v| bound.contains(v)) {
                        bound.extend(lit.bound_vars());
                    }
                }
                _ => {}
            }
        }
        if bound.len() == before {
            break;
        }
    }

    let mut reported = BTreeSet::new();
    let mut report = |var: &str, reason: &'static str, diags: &mut Vec<SafetyDiagnostic>| {
        if reported.insert(var.to_string()) {
            diags.push(SafetyDiagnostic { rule, var: var.to_string(), reason });
        }
    };
    for lit in body {
        let reason = match lit {
            Literal::Neg(_) => "appears only in a negated atom",
            Literal::Cmp { .. } => "appears only in a comparison",
            Literal::Bind { .. } => "is used in an assignment but never bound",
            Literal::Agg(_) => "is an aggregate group variable but never bound",
            Literal::Pos(_) => continue,
        };
        for v in lit.required_vars() {
            if !bound.contains(&v) {
                report(&v, reason, diags);
            }
        }
        if let Literal::Agg(agg) = lit {
            let groups: BTreeSet<String> = agg.group_vars.iter().cloned().collect();
            let mut outside: BTreeSet<String> = BTreeSet::new();
            for other in body {
                if !std::ptr::eq(other, lit) {
                    outside.extend(other.vars());
                }
            }
            let inner = check_body(rule, &agg.body, &groups, diags);
            for l in &agg.body {
                for v in l.vars() {
                    if !groups.contains(&v) && outside.contains(&v) {
                        report(&v, "is shared with an aggregate body without being a group variable", diags);
                    }
                }
            }
            if let Some(t) = agg.target.as_ref().and_then(|t| t.as_var()) {
                if !inner.contains(t) {
                    report(t, "is an aggregate target but never bound in its body", diags);
                }
            }
            if groups.contains(&agg.result) {
                report(&agg.result, "is an aggregate result that clashes with a group variable", diags);
            }
        }
    }
    bound
}
