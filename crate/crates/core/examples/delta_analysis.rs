//! Full analysis versus analysis restricted to one changed file, through
//! the orchestrator.

use codefacts::orchestrator::{Config, ExtractRequest, Orchestrator, QueryRequest, Target};
use codefacts::synth::write_python_repo;
use codefacts::Language;

const QUERY: &str = r#"
use coref::python::*

fn long(path: string, name: string, lines: int) -> bool {
    for (f in Function(PythonDB::load("src.db"))) {
        if (path = f.getFile().getRelativePath() && name = f.getName() &&
            lines = f.getLocation().getEndLineNumber() - f.getLocation().getStartLineNumber() + 1 && lines > 3) {
            return true
        }
    }
}

fn main() {
    output(long())
}
"#;

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let work = tmp.path().join("repo");
    write_python_repo(&work, 50, 5).unwrap();
    let orch = Orchestrator::open(&tmp.path().join("store"), Config::default()).unwrap();
    let req = ExtractRequest { worktree: work, repo: "demo".into(), commit: "c1".into(), language: Language::Python, baseline: None };
    orch.extract(&req).unwrap();

    let target = || Target::Snapshot { repo: "demo".into(), commit: "c1".into() };
    let fra = orch.query(&QueryRequest::new(QUERY, target()).no_cache()).unwrap();
    let dca = orch.query(&QueryRequest::new(QUERY, target()).no_cache().changed(["mod_7.py".to_string()].into())).unwrap();
    println!("FRA: {} rows in {:.1} ms", fra.output.row_count(), fra.record.wall_ms);
    println!("DCA: {} rows in {:.1} ms", dca.output.row_count(), dca.record.wall_ms);
    print!("{}", dca.output.to_tsv());
}
