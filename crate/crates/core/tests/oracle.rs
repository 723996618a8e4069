mod support;

use std::collections::BTreeSet;
use std::path::Path;

use codefacts::extract::{extract, scan_worktree};
use codefacts::facts::{FactsArchive, Value};
use codefacts::query::run_query;
use codefacts::Language;
use support::oracle::Db;

fn shop() -> FactsArchive {
    let dir = Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/shop"));
    let (root, files) = scan_worktree(dir, Language::Python).unwrap();
    extract(Language::Python, &root, &files, "shop", "c1").unwrap()
}

fn rows(a: &FactsArchive, query: &str) -> Vec<Vec<Value>> {
    let path = Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/queries")).join(query);
    let out = run_query(&std::fs::read_to_string(path).unwrap(), a).unwrap();
    out.tables[0].rows.clone()
}

fn strs(a: &FactsArchive, query: &str) -> BTreeSet<String> {
    rows(a, query).into_iter().map(|r| r[0].as_str().unwrap().to_string()).collect()
}

fn pairs(a: &FactsArchive, query: &str) -> BTreeSet<(String, String)> {
    rows(a, query).into_iter().map(|r| (r[0].as_str().unwrap().to_string(), r[1].as_str().unwrap().to_string())).collect()
}

fn str_int(a: &FactsArchive, query: &str) -> BTreeSet<(String, i64)> {
    rows(a, query).into_iter().map(|r| (r[0].as_str().unwrap().to_string(), r[1].as_int().unwrap())).collect()
}

#[test]
fn queries_agree_with_direct_evaluation() {
    let a = shop();
    let db = Db::new(&a);

    let want = db.listing_unused_method();
    assert!(!want.is_empty());
    assert_eq!(strs(&a, "unused_method_listing.gdl"), want);

    let want = db.uncalled();
    assert!(!want.is_empty());
    assert_eq!(strs(&a, "unused_function.gdl"), want);

    let want = db.call_edges();
    assert!(want.len() > 20);
    assert_eq!(pairs(&a, "call_graph.gdl"), want);

    let want = db.ancestors();
    assert!(want.len() >= 3);
    assert_eq!(pairs(&a, "class_hierarchy.gdl"), want);

    let want = db.mutual_pairs();
    assert!(want.contains(&("is_even".to_string(), "is_odd".to_string())));
    assert_eq!(pairs(&a, "mutual_recursion.gdl"), want);

    assert_eq!(str_int(&a, "param_count.gdl"), db.many_params(4));
    assert_eq!(str_int(&a, "long_functions.gdl"), db.long_functions(12));

    let cc: BTreeSet<_> = rows(&a, "cyclomatic.gdl")
        .into_iter()
        .map(|r| (r[0].as_str().unwrap().to_string(), r[1].as_str().unwrap().to_string(), r[2].as_int().unwrap(), r[3].as_int().unwrap()))
        .collect();
    let want = db.complexity();
    assert!(want.iter().any(|x| x.3 > 3));
    assert_eq!(cc, want);

    let todo: BTreeSet<_> = rows(&a, "todo_comments.gdl")
        .into_iter()
        .map(|r| (r[0].as_str().unwrap().to_string(), r[1].as_int().unwrap(), r[2].as_str().unwrap().to_string()))
        .collect();
    assert_eq!(todo, db.todo_comments());

    let lines: BTreeSet<_> = rows(&a, "comment_ratio.gdl")
        .into_iter()
        .map(|r| {
            let n = |i: usize| r[i].as_int().unwrap();
            (r[0].as_str().unwrap().to_string(), n(1), n(2), n(3), n(4))
        })
        .collect();
    assert_eq!(lines, db.line_counts());
}
