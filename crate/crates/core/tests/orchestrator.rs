use std::fmt::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use codefacts::orchestrator::{
    Clock, Config, ExtractRequest, Orchestrator, OrchestratorError, QueryRequest, Target, TaskKind, TaskStatus,
};
use codefacts::Language;

/// Moves one second forward every time it is read.
#[derive(Default)]
struct TickClock(AtomicU64);

impl Clock for TickClock {
    fn now(&self) -> Duration {
        Duration::from_secs(self.0.fetch_add(1, Ordering::SeqCst))
    }
}

/// A chain of `n` predicates, each its own stage.
fn chain(n: usize) -> String {
    let mut s = String::from("use coref::python::*\n\n");
    s.push_str("fn p0(x: string) -> bool {\n    for (f in File(PythonDB::load(\"db\"))) {\n        if (x = f.getRelativePath()) {\n            return true\n        }\n    }\n}\n\n");
    for i in 1..n {
        let _ = write!(s, "fn p{i}(x: string) -> bool {{\n    if (p{}(x)) {{\n        return true\n    }}\n}}\n\n", i - 1);
    }
    let _ = write!(s, "fn main() {{\n    output(p{}())\n}}\n", n - 1);
    s
}

fn setup(config: Config) -> (tempfile::TempDir, Orchestrator) {
    let tmp = tempfile::tempdir().unwrap();
    let orch = Orchestrator::open(&tmp.path().join("store"), config).unwrap().with_clock(Arc::new(TickClock::default()));
    let req = ExtractRequest {
        worktree: Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/shop"),
        repo: "shop".into(),
        commit: "c1".into(),
        language: Language::Python,
        baseline: None,
    };
    orch.extract(&req).unwrap();
    (tmp, orch)
}

fn request(stages: usize) -> QueryRequest {
    let mut req = QueryRequest::new(chain(stages), Target::Snapshot { repo: "shop".into(), commit: "c1".into() }).no_cache();
    req.time_limit = Some(Duration::from_secs(5));
    req
}

#[test]
fn stage_heavy_query_moves_to_the_long_pool() {
    let mut config = Config::default();
    config.pools.standard.time_limit = 5.0;
    config.pools.longrun.time_limit = 1000.0;
    let (_tmp, orch) = setup(config);
    let run = orch.query(&request(30)).unwrap();
    assert_eq!(run.record.pools, vec!["standard", "longrun"]);
    assert_eq!(run.output.row_count(), 20);
    assert_eq!(run.record.status, TaskStatus::Ok);

    let short = orch.query(&request(2)).unwrap();
    assert_eq!(short.record.pools, vec!["standard"]);
    assert_eq!(short.output.row_count(), 20);
}

#[test]
fn timeout_on_both_pools_is_recorded() {
    let mut config = Config::default();
    config.pools.standard.time_limit = 5.0;
    config.pools.longrun.time_limit = 8.0;
    let (_tmp, orch) = setup(config);
    let err = orch.query(&request(30)).unwrap_err();
    assert!(matches!(err, OrchestratorError::Timeout { attempts: 2, .. }), "{err}");
    let last = orch.metrics().read().unwrap().pop().unwrap();
    assert_eq!((last.requested, last.status), (TaskKind::Fra, TaskStatus::Timeout));
    assert_eq!(last.pools, vec!["standard", "longrun"]);
}

#[test]
fn costly_repositories_start_on_the_long_pool() {
    let mut config = Config::default();
    config.pools.standard.time_limit = 5.0;
    config.pools.longrun.time_limit = 1000.0;
    config.hdt_threshold = 10.0;
    let (_tmp, orch) = setup(config);
    let run = orch.query(&request(30)).unwrap();
    assert_eq!(run.record.pools, vec!["longrun"]);
    assert!(run.record.estimated_cost.unwrap() >= 10.0);
}

#[test]
fn without_a_long_pool_the_task_times_out_once() {
    let mut config = Config::default();
    config.pools.standard.time_limit = 5.0;
    config.pools.longrun.workers = 0;
    let (_tmp, orch) = setup(config);
    let err = orch.query(&request(30)).unwrap_err();
    assert!(matches!(err, OrchestratorError::Timeout { attempts: 1, .. }), "{err}");
}

#[test]
fn re_extracting_a_commit_replaces_the_loaded_archive() {
    let tmp = tempfile::tempdir().unwrap();
    let work = tmp.path().join("w");
    std::fs::create_dir_all(&work).unwrap();
    std::fs::write(work.join("a.py"), "x = 1\n").unwrap();
    let orch = Orchestrator::open(&tmp.path().join("store"), Config::default()).unwrap();
    let extract = ExtractRequest { worktree: work.clone(), repo: "r".into(), commit: "c".into(), language: Language::Python, baseline: None };
    orch.extract(&extract).unwrap();
    let req = QueryRequest::new(chain(1), Target::Snapshot { repo: "r".into(), commit: "c".into() }).no_cache();
    assert_eq!(orch.query(&req).unwrap().output.row_count(), 1);
    assert_eq!(orch.query(&req).unwrap().output.row_count(), 1);

    std::thread::sleep(Duration::from_millis(20));
    std::fs::write(work.join("b.py"), "y = 2\n").unwrap();
    orch.extract(&extract).unwrap();
    assert_eq!(orch.query(&req).unwrap().output.row_count(), 2);
}
