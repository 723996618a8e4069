//! Extracts the bundled shop project and runs a cyclomatic complexity
//! query over it.

use std::path::Path;

use codefacts::extract::scan_worktree;
use codefacts::incremental::full_build;
use codefacts::query::run_query;
use codefacts::Language;

const QUERY: &str = r#"
use coref::python::*

fn complexity(path: string, name: string, cc: int) -> bool {
    for (f in Function(PythonDB::load("src.db"))) {
        if (path = f.getFile().getRelativePath() && name = f.getName() &&
            cc = f.getCyclomaticComplexity() && cc > 2) {
            return true
        }
    }
}

fn main() {
    output(complexity())
}
"#;

fn main() {
    let shop = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/shop");
    let (root, files) = scan_worktree(&shop, Language::Python).expect("fixture is readable");
    let (archive, report) = full_build(Language::Python, &root, &files, "shop", "demo").expect("extraction");
    println!("extracted {} files in {:?}", report.extracted, report.elapsed);

    let out = run_query(QUERY, &archive).expect("query runs");
    print!("{}", out.to_tsv());
}
