//! Transitive ancestor classes over a 100-class inheritance chain,
//! evaluated semi-naively and checked against naive re-evaluation.

use codefacts::datalog::{evaluate_naive, evaluate_seminaive};
use codefacts::synth::{ancestor_program, class_chain};

fn main() {
    let program = ancestor_program();
    let edb = class_chain(100);
    println!("{program}");

    let eval = evaluate_seminaive(&program, &edb).expect("ancestor program evaluates");
    let fast = &eval.relations["ancestorclass"];
    let slow = &evaluate_naive(&program, &edb).expect("naive evaluation")["ancestorclass"];
    assert_eq!(fast, slow);

    println!("ancestorclass: {} pairs", fast.len());
    println!("rule evaluations: {}", eval.stats.rule_evaluations());
}
