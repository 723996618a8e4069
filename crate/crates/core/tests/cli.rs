use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

struct Out {
    code: i32,
    stdout: String,
    stderr: String,
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn query_file(name: &str) -> String {
    fixtures().join("queries").join(name).display().to_string()
}

fn cf(store: &Path, args: &[&str]) -> Out {
    let o = Command::new(env!("CARGO_BIN_EXE_codefacts"))
        .arg("--store")
        .arg(store)
        .args(args)
        .env_remove("CODEFACTS_STORE")
        .output()
        .unwrap();
    Out {
        code: o.status.code().unwrap_or(-1),
        stdout: String::from_utf8(o.stdout).unwrap(),
        stderr: String::from_utf8(o.stderr).unwrap(),
    }
}

fn copy_dir(from: &Path, to: &Path) {
    for e in walkdir::WalkDir::new(from) {
        let e = e.unwrap();
        let dest = to.join(e.path().strip_prefix(from).unwrap());
        if e.file_type().is_dir() {
            fs::create_dir_all(&dest).unwrap();
        } else {
            fs::copy(e.path(), &dest).unwrap();
        }
    }
}

/// A store holding an extraction of a copy of the shop fixture at `c1`.
fn shop_store() -> (tempfile::TempDir, PathBuf, PathBuf) {
    let tmp = tempfile::tempdir().unwrap();
    let work = tmp.path().join("shop");
    copy_dir(&fixtures().join("shop"), &work);
    let store = tmp.path().join("store");
    let o = cf(&store, &["extract", "--lang", "python", "--repo", work.to_str().unwrap(), "--commit", "c1"]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert!(o.stdout.contains("files: 20, re-extracted: 20, carried: 0, removed: 0"), "{}", o.stdout);
    (tmp, store, work)
}

#[test]
fn incremental_extract_reparses_only_the_edited_file() {
    let (_tmp, store, work) = shop_store();
    let f = work.join("shop/util/text.py");
    let mut body = fs::read_to_string(&f).unwrap();
    body.push_str("\n\ndef shout(s):\n    return s.upper()\n");
    fs::write(&f, body).unwrap();
    let o = cf(&store, &["extract", "--lang", "python", "--repo", work.to_str().unwrap(), "--commit", "c2", "--baseline", "c1"]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert!(o.stdout.contains("files: 20, re-extracted: 1, carried: 19, removed: 0"), "{}", o.stdout);

    let q = query_file("unused_function.gdl");
    let o = cf(&store, &["query", "--script", &q, "--repo", "shop", "--commit", "c2"]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert!(o.stdout.contains("shop/util/text.py:"), "{}", o.stdout);
    assert!(o.stdout.contains(":shout\n"), "{}", o.stdout);
}

#[test]
fn repeated_query_is_served_from_the_cache() {
    let (_tmp, store, _work) = shop_store();
    let q = query_file("call_graph.gdl");
    let args = ["query", "--script", &q, "--repo", "shop", "--commit", "c1"];
    let first = cf(&store, &args);
    assert_eq!(first.code, 0, "{}", first.stderr);
    assert!(!first.stderr.contains("cache hit"));
    let second = cf(&store, &args);
    assert_eq!(second.code, 0);
    assert!(second.stderr.contains("cache hit"), "{}", second.stderr);
    assert_eq!(first.stdout, second.stdout);

    let mut verify = args.to_vec();
    verify.push("--verify");
    let third = cf(&store, &verify);
    assert_eq!(third.code, 0, "{}", third.stderr);
    assert_eq!(third.stdout, first.stdout);

    let mut fresh = args.to_vec();
    fresh.push("--no-cache");
    let fourth = cf(&store, &fresh);
    assert!(!fourth.stderr.contains("cache hit"));
    assert_eq!(fourth.stdout, first.stdout);
}

#[test]
fn json_output_is_keyed_by_column() {
    let (_tmp, store, _work) = shop_store();
    let q = query_file("param_count.gdl");
    let o = cf(&store, &["query", "--script", &q, "--repo", "shop", "--commit", "c1", "--format", "json"]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let v: serde_json::Value = serde_json::from_str(&o.stdout).unwrap();
    let rows = v.as_array().expect("single output is an array");
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r["n"].as_i64().unwrap() >= 4 && r["signature"].is_string()));
}

#[test]
fn type_errors_report_a_position() {
    let tmp = tempfile::tempdir().unwrap();
    let script = tmp.path().join("bad.gdl");
    fs::write(
        &script,
        "use coref::python::*\n\nfn f(n: int) -> bool {\n    for (c in Class(PythonDB::load(\"x\"))) {\n        if (n = c.getName()) {\n            return true\n        }\n    }\n}\n\nfn main() {\n    output(f())\n}\n",
    )
    .unwrap();
    let o = cf(&tmp.path().join("store"), &["plan", "--script", script.to_str().unwrap()]);
    assert_eq!(o.code, 2, "{}", o.stderr);
    assert!(o.stderr.contains("5:13"), "{}", o.stderr);
}

#[test]
fn delta_matches_full_run_filtered_to_the_changed_file() {
    let (tmp, store, _work) = shop_store();
    let q = query_file("cyclomatic.gdl");
    let full = cf(&store, &["query", "--script", &q, "--repo", "shop", "--commit", "c1"]);
    assert_eq!(full.code, 0, "{}", full.stderr);

    let changed = tmp.path().join("changed.txt");
    fs::write(&changed, "shop/services/pricing.py\n").unwrap();
    let delta = cf(&store, &["delta", "--script", &q, "--repo", "shop", "--commit", "c1", "--changed", changed.to_str().unwrap()]);
    assert_eq!(delta.code, 0, "{}", delta.stderr);
    let want: String =
        full.stdout.lines().filter(|l| l.starts_with("shop/services/pricing.py\t")).map(|l| format!("{l}\n")).collect();
    assert!(!want.is_empty());
    assert_eq!(delta.stdout, want);
    assert!(delta.stderr.starts_with("DCA"), "{}", delta.stderr);

    fs::write(&changed, "").unwrap();
    let empty = cf(&store, &["delta", "--script", &q, "--repo", "shop", "--commit", "c1", "--changed", changed.to_str().unwrap()]);
    assert_eq!(empty.code, 0, "{}", empty.stderr);
    assert_eq!(empty.stdout, "");

    fs::write(&changed, "shop/nowhere.py\n").unwrap();
    let missing = cf(&store, &["delta", "--script", &q, "--repo", "shop", "--commit", "c1", "--changed", changed.to_str().unwrap()]);
    assert_eq!(missing.code, 2);
    assert!(missing.stderr.contains("shop/nowhere.py"), "{}", missing.stderr);
}

#[test]
fn plan_prunes_the_library() {
    let tmp = tempfile::tempdir().unwrap();
    let store = tmp.path().join("store");
    let o = cf(&store, &["plan", "--script", &query_file("unused_function.gdl")]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let nodes = o.stdout.lines().find_map(|l| l.strip_prefix("nodes: ")).unwrap();
    let (before, after) = nodes.split_once(" -> ").unwrap();
    let (before, after): (usize, usize) = (before.parse().unwrap(), after.parse().unwrap());
    assert!(after < before, "{nodes}");

    let nomain = tmp.path().join("nomain.gdl");
    fs::write(&nomain, "use coref::python::*\n\nfn f(x: int) -> bool {\n    if (x = 1) {\n        return true\n    }\n}\n").unwrap();
    let o = cf(&store, &["plan", "--script", nomain.to_str().unwrap()]);
    assert_eq!(o.code, 2);
    assert!(o.stderr.contains("main"), "{}", o.stderr);
}

#[test]
fn plain_projection_needs_no_fixpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let script = tmp.path().join("paths.gdl");
    fs::write(
        &script,
        "use coref::python::*\n\nfn paths(p: string) -> bool {\n    for (f in file(PythonDB::load(\"x\"))) {\n        if (p = f.relative_path) {\n            return true\n        }\n    }\n}\n\nfn main() {\n    output(paths())\n}\n",
    )
    .unwrap();
    let o = cf(&tmp.path().join("store"), &["plan", "--script", script.to_str().unwrap()]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert!(!o.stdout.contains("fixpoint"), "{}", o.stdout);
    assert_eq!(o.stdout.lines().filter(|l| l.starts_with("stage ")).count(), 1, "{}", o.stdout);
}

#[test]
fn busy_lease_exits_five() {
    let (_tmp, store, work) = shop_store();
    let now = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).unwrap().as_secs();
    fs::write(store.join("leases/shop@python@c9.lock"), format!("pid=1\nacquired={now}\n")).unwrap();
    let o = cf(&store, &["extract", "--lang", "python", "--repo", work.to_str().unwrap(), "--commit", "c9"]);
    assert_eq!(o.code, 5, "{}", o.stderr);
}

#[test]
fn report_counts_queries_per_extraction() {
    let (_tmp, store, _work) = shop_store();
    for q in ["call_graph.gdl", "cyclomatic.gdl", "imports.gdl"] {
        let o = cf(&store, &["query", "--script", &query_file(q), "--repo", "shop", "--commit", "c1"]);
        assert_eq!(o.code, 0, "{}", o.stderr);
    }
    let o = cf(&store, &["report"]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let avg = o.stdout.lines().find(|l| l.starts_with("average")).unwrap();
    assert!(avg.ends_with("3.00"), "{}", o.stdout);
}

#[test]
fn missing_snapshot_is_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = cf(&tmp.path().join("store"), &["query", "--script", &query_file("imports.gdl"), "--repo", "none", "--commit", "c1"]);
    assert_eq!(o.code, 2, "{}", o.stderr);
}
