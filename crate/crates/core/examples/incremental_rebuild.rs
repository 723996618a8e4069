//! Rebuilds a 200-file repository after one module changes, extracting
//! only that file, and checks the result against a full build.

use std::time::Instant;

use codefacts::incremental::{full_build, incremental_build};
use codefacts::synth::{edit_python_module, write_python_repo};
use codefacts::Language;

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let root = dir.path();
    let files = write_python_repo(root, 200, 3).expect("write repo");
    let (baseline, _) = full_build(Language::Python, root, &files, "demo", "v0").unwrap();

    let edited = edit_python_module(root, 17, 200, 1, 3).unwrap();
    println!("edited {edited}");

    let t = Instant::now();
    let (full, _) = full_build(Language::Python, root, &files, "demo", "v1").unwrap();
    let full_time = t.elapsed();
    let t = Instant::now();
    let (inc, report) = incremental_build(baseline, root, &files, "v1").unwrap();
    let inc_time = t.elapsed();

    assert_eq!(inc, full);
    println!("extracted {}, carried {}, removed {}", report.extracted, report.carried, report.removed);
    println!("full {full_time:?}, incremental {inc_time:?}");
}
