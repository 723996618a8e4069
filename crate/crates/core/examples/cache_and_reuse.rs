//! One extraction serving several queries: repeats are answered from the
//! result cache, and the metrics log yields the reuse report.

use std::path::Path;

use codefacts::orchestrator::{reuse_report, Config, ExtractRequest, Orchestrator, QueryRequest, Target};
use codefacts::Language;

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let orch = Orchestrator::open(tmp.path(), Config::default()).unwrap();
    let shop = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/shop");
    orch.extract(&ExtractRequest { worktree: shop, repo: "shop".into(), commit: "c1".into(), language: Language::Python, baseline: None })
        .unwrap();

    let queries = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/queries");
    for name in ["find_all_classes.gdl", "call_graph.gdl", "find_all_classes.gdl"] {
        let src = std::fs::read_to_string(queries.join(name)).unwrap();
        let run = orch.query(&QueryRequest::new(src, Target::Snapshot { repo: "shop".into(), commit: "c1".into() })).unwrap();
        println!(
            "{name:<22} rows {:>4}  cache hit {:<5}  rule evaluations {}",
            run.output.row_count(),
            run.record.cache_hit,
            run.record.rule_evaluations
        );
    }

    let records = orch.metrics().read().unwrap();
    print!("{}", reuse_report(&records, None).render());
}
