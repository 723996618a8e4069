//! A 200-rule library where the output depends on five predicates: the
//! planner drops everything else before building stages.

use codefacts::planner::{lower_to_plan, operator_count, prune_unreachable};
use codefacts::synth::layered_library;

fn main() {
    let library = layered_library(200, 5, 11);
    let pruned = prune_unreachable(&library);
    println!("rules: {} -> {}", library.rules.len(), pruned.rules.len());

    let plan = lower_to_plan(&library, None).expect("library plans");
    println!("plan nodes: {} -> {}", operator_count(&library, None).unwrap(), plan.node_count_after);
    print!("{}", plan.render());
}
