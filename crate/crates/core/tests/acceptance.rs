//! One line per acceptance criterion. Run with
//! `cargo test --test acceptance`.

mod support;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use codefacts::datalog::{evaluate_naive, evaluate_seminaive};
use codefacts::extract::{check_references, extract, scan_worktree};
use codefacts::facts::{read_archive, serialize_relation, FactsArchive, Value};
use codefacts::godel::compile;
use codefacts::incremental::{extractor_calls, full_build, incremental_build};
use codefacts::orchestrator::sim::{simulate, SimPools, Strategy, Workload, WorkloadSpec};
use codefacts::orchestrator::{read_metrics, Config, ExtractRequest, Orchestrator, QueryRequest, Target};
use codefacts::planner::{evaluate_plan, lower_to_plan};
use codefacts::query::run_query;
use codefacts::synth::{ancestor_program, class_chain, edit_python_module, layered_edb, layered_library, random_program, write_python_repo};
use codefacts::Language;
use support::oracle::Db;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn manifest_dir() -> &'static Path {
    Path::new(env!("CARGO_MANIFEST_DIR"))
}

fn fixtures() -> PathBuf {
    manifest_dir().join("tests/fixtures")
}

fn query_path(name: &str) -> PathBuf {
    fixtures().join("queries").join(name)
}

fn query_src(name: &str) -> String {
    fs::read_to_string(query_path(name)).unwrap()
}

fn archive_of(dir: &Path, lang: Language) -> FactsArchive {
    let (root, files) = scan_worktree(dir, lang).unwrap();
    extract(lang, &root, &files, "fixture", "c1").unwrap()
}

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn cli(store: &Path, args: &[&str]) -> Run {
    let o = Command::new(env!("CARGO_BIN_EXE_codefacts"))
        .arg("--store")
        .arg(store)
        .args(args)
        .env_remove("CODEFACTS_STORE")
        .output()
        .unwrap();
    Run {
        code: o.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&o.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&o.stderr).into_owned(),
    }
}

fn median(mut xs: Vec<Duration>) -> Duration {
    xs.sort();
    xs[xs.len() / 2]
}

fn c1_datalog() -> Outcome {
    let start = Instant::now();
    let eval = evaluate_seminaive(&ancestor_program(), &class_chain(100)).map_err(|e| e.to_string())?;
    let n = eval.relations["ancestorclass"].len();
    ensure!(n == 100 * 99 / 2, "|ancestorclass| = {n}, want 4950");
    let programs = 200;
    for seed in 0..programs {
        let (p, edb) = random_program(seed);
        let fast = evaluate_seminaive(&p, &edb).map_err(|e| e.to_string())?;
        let slow = evaluate_naive(&p, &edb).map_err(|e| e.to_string())?;
        for o in &p.outputs {
            ensure!(fast.relations[o].tuples() == slow[o].tuples(), "seed {seed}: `{o}` differs from the naive result");
        }
    }
    let took = start.elapsed();
    ensure!(took < Duration::from_secs(10), "took {took:?}");
    Ok(format!("|ancestorclass| = {n}; {programs} random programs agree with naive; {:.2}s", took.as_secs_f64()))
}

fn c2_pruning() -> Outcome {
    let p = layered_library(200, 5, 11);
    ensure!(p.rules.len() == 200, "library has {} rules", p.rules.len());
    let plan = lower_to_plan(&p, None).map_err(|e| e.to_string())?;
    let heads: BTreeSet<&str> = plan.program.rules.iter().map(|r| r.head.predicate.as_str()).collect();
    let want: BTreeSet<&str> = ["out", "q1", "q2", "q3", "q4"].into();
    ensure!(plan.program.rules.len() == 5 && heads == want, "kept {} rules for {heads:?}", plan.program.rules.len());
    let edb = layered_edb(40, 120, 3);
    let pruned = evaluate_plan(&plan, &edb).map_err(|e| e.to_string())?;
    let full = evaluate_seminaive(&p, &edb).map_err(|e| e.to_string())?;
    ensure!(pruned.relations["out"].tuples() == full.relations["out"].tuples(), "pruned output differs");
    ensure!(!full.relations["out"].is_empty(), "empty output proves nothing");
    Ok(format!(
        "200 rules -> 5; plan nodes {} -> {}; {} output rows identical",
        plan.node_count_before,
        plan.node_count_after,
        full.relations["out"].len()
    ))
}

fn c3_corpus() -> Outcome {
    let start = Instant::now();
    for (name, lang) in [
        ("unused_method_listing.gdl", Language::Python),
        ("effectuated_functions.gdl", Language::Python),
        ("pom_dependencies.gdl", Language::Xml),
    ] {
        compile(&query_src(name), lang, true).map_err(|e| format!("{name}: {e}"))?;
    }
    let pom = archive_of(&fixtures().join("pom"), Language::Xml);
    let out = run_query(&query_src("pom_dependencies.gdl"), &pom).map_err(|e| e.to_string())?;
    let rows: Vec<Vec<&str>> = out.tables[0].rows.iter().map(|r| r.iter().map(|v| v.as_str().unwrap_or("?")).collect()).collect();
    ensure!(rows == vec![vec!["pom.xml", "g", "1", "a"]], "pom rows {rows:?}");

    let shop = archive_of(&fixtures().join("shop"), Language::Python);
    ensure!(shop.manifest().files.len() == 20, "shop has {} files", shop.manifest().files.len());
    run_query(&query_src("effectuated_functions.gdl"), &shop).map_err(|e| e.to_string())?;
    let got: BTreeSet<String> = run_query(&query_src("unused_method_listing.gdl"), &shop)
        .map_err(|e| e.to_string())?
        .tables[0]
        .rows
        .iter()
        .map(|r| r[0].as_str().unwrap().to_string())
        .collect();
    let want = Db::new(&shop).listing_unused_method();
    ensure!(got == want && !want.is_empty(), "unused_method_listing gave {} rows, oracle {}", got.len(), want.len());
    let took = start.elapsed();
    ensure!(took < Duration::from_secs(30), "took {took:?}");
    Ok(format!("corpus compiles; pom row exact; unused_method_listing = oracle ({} rows); {:.2}s", want.len(), took.as_secs_f64()))
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

fn relation_bytes(a: &FactsArchive) -> BTreeMap<String, Vec<u8>> {
    a.relations().iter().map(|(n, r)| (n.clone(), serialize_relation(r))).collect()
}

/// Applies step `step` of edit sequence `seq` to the shop worktree.
fn scripted_edit(root: &Path, seq: usize, step: usize) {
    let files = scan_worktree(root, Language::Python).unwrap().1;
    let pick = |k: usize| root.join(&files[(seq * 7 + step * 3 + k) % files.len()]);
    match (seq + step) % 5 {
        0 => {
            let p = pick(0);
            let mut s = fs::read_to_string(&p).unwrap();
            s.push_str(&format!("\n\ndef added_{seq}_{step}(x):\n    if x:\n        return x\n    return None\n"));
            fs::write(p, s).unwrap();
        }
        1 => fs::write(root.join(format!("shop/extra_{seq}_{step}.py")), format!("class Extra{step}:\n    pass\n")).unwrap(),
        2 if files.len() > 10 => fs::remove_file(pick(1)).unwrap(),
        3 => {
            let p = pick(2);
            let s = fs::read_to_string(&p).unwrap().replacen("return", "return  ", 1);
            fs::write(p, s).unwrap();
        }
        _ => {
            let p = pick(0);
            let bytes = fs::read(&p).unwrap();
            fs::write(p, bytes).unwrap();
        }
    }
}

fn c4_incremental() -> Outcome {
    let mut steps = 0;
    for seq in 0..10 {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        copy_dir(&fixtures().join("shop"), root);
        let files = scan_worktree(root, Language::Python).unwrap().1;
        let (mut baseline, _) = full_build(Language::Python, root, &files, "shop", "s0").map_err(|e| e.to_string())?;
        for step in 0..3 {
            scripted_edit(root, seq, step);
            steps += 1;
            let files = scan_worktree(root, Language::Python).unwrap().1;
            let commit = format!("s{}", step + 1);
            let (full, _) = full_build(Language::Python, root, &files, "shop", &commit).map_err(|e| e.to_string())?;
            let before = extractor_calls();
            let (inc, _) = incremental_build(baseline.clone(), root, &files, &commit).map_err(|e| e.to_string())?;
            let calls = extractor_calls() - before;
            ensure!(relation_bytes(&inc) == relation_bytes(&full), "sequence {seq} step {step}: archives differ");
            let d = codefacts::facts::diff_manifests(baseline.manifest(), full.manifest()).unwrap();
            ensure!(calls == d.added.len() + d.changed.len(), "sequence {seq} step {step}: {calls} extractor calls");
            baseline = inc;
        }
    }

    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let files = write_python_repo(root, 500, 5).unwrap();
    let (baseline, _) = full_build(Language::Python, root, &files, "syn", "v0").map_err(|e| e.to_string())?;
    edit_python_module(root, 250, 500, 1, 5).unwrap();
    let mut full_t = Vec::new();
    let mut inc_t = Vec::new();
    for _ in 0..3 {
        let t = Instant::now();
        let (full, _) = full_build(Language::Python, root, &files, "syn", "v1").map_err(|e| e.to_string())?;
        full_t.push(t.elapsed());
        let base = baseline.clone();
        let t = Instant::now();
        let (inc, report) = incremental_build(base, root, &files, "v1").map_err(|e| e.to_string())?;
        inc_t.push(t.elapsed());
        ensure!(report.extracted == 1 && relation_bytes(&inc) == relation_bytes(&full), "500-file edit mismatch");
    }
    let (f, i) = (median(full_t), median(inc_t));
    let speedup = f.as_secs_f64() / i.as_secs_f64();
    ensure!(speedup >= 5.0, "1-of-500 speedup {speedup:.1}x (full {f:?}, incremental {i:?})");
    Ok(format!("10 sequences, {steps} builds byte-identical; 1-of-500 edit {speedup:.1}x faster"))
}

fn c5_dca() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let work = tmp.path().join("syn");
    write_python_repo(&work, 100, 9).unwrap();
    let orch = Orchestrator::open(&tmp.path().join("store"), Config::default()).map_err(|e| e.to_string())?;
    let req = ExtractRequest { worktree: work, repo: "syn".into(), commit: "c1".into(), language: Language::Python, baseline: None };
    orch.extract(&req).map_err(|e| e.to_string())?;
    let target = || Target::Snapshot { repo: "syn".into(), commit: "c1".into() };
    let changed = "mod_42.py".to_string();

    // File-local queries: every output row is keyed by the file it comes from.
    let mut checked = 0;
    for (name, path_of) in [("cyclomatic.gdl", 0usize), ("comment_ratio.gdl", 0), ("long_functions.gdl", 0)] {
        let src = query_src(name);
        let fra = orch.query(&QueryRequest::new(src.clone(), target()).no_cache()).map_err(|e| e.to_string())?;
        let dca = orch
            .query(&QueryRequest::new(src, target()).no_cache().changed([changed.clone()].into()))
            .map_err(|e| e.to_string())?;
        let file_of = |v: &Value| v.as_str().unwrap().split(':').next().unwrap().to_string();
        let want: Vec<_> = fra.output.tables[0].rows.iter().filter(|r| file_of(&r[path_of]) == changed).cloned().collect();
        ensure!(!want.is_empty() || name == "long_functions.gdl", "{name}: no rows for the changed file");
        ensure!(dca.output.tables[0].rows == want, "{name}: DCA rows differ from filtered FRA");
        checked += 1;
    }

    let src = query_src("cyclomatic.gdl");
    let mut fra_t = Vec::new();
    let mut dca_t = Vec::new();
    for _ in 0..5 {
        let t = Instant::now();
        orch.query(&QueryRequest::new(src.clone(), target()).no_cache()).map_err(|e| e.to_string())?;
        fra_t.push(t.elapsed());
        let t = Instant::now();
        orch.query(&QueryRequest::new(src.clone(), target()).no_cache().changed([changed.clone()].into()))
            .map_err(|e| e.to_string())?;
        dca_t.push(t.elapsed());
    }
    let (f, d) = (median(fra_t), median(dca_t));
    let share = d.as_secs_f64() / f.as_secs_f64();
    ensure!(share <= 0.20, "DCA took {:.1}% of FRA ({d:?} vs {f:?})", share * 100.0);
    Ok(format!("{checked} file-local queries match filtered FRA; DCA at {:.1}% of FRA wall time", share * 100.0))
}

fn c6_scheduling() -> Outcome {
    let spec = WorkloadSpec::default();
    let w = Workload::generate(&spec);
    let pools = SimPools::for_workload(&spec);
    let c = simulate(&w, &pools, Strategy::Coordinator);
    let f = simulate(&w, &pools, Strategy::Fifo);
    let r = simulate(&w, &pools, Strategy::Random { seed: spec.seed });
    let ratio = c.makespan / f.makespan;
    ensure!(c.timeouts == 0 && c.completed == spec.tasks, "coordinator: {} timeouts, {} completed", c.timeouts, c.completed);
    ensure!(ratio <= 0.6, "makespan ratio {ratio:.3}");
    ensure!(c.makespan <= 0.6 * r.makespan, "random makespan {:.1}", r.makespan);
    Ok(format!(
        "coordinator {:.1}s, 0 timeouts; FIFO {:.1}s ({} timeouts); random {:.1}s; ratio {ratio:.3}",
        c.makespan, f.makespan, f.timeouts, r.makespan
    ))
}

const PYTHON_QUERIES: [&str; 13] = [
    "call_graph.gdl",
    "class_hierarchy.gdl",
    "comment_ratio.gdl",
    "cyclomatic.gdl",
    "decorated_functions.gdl",
    "find_all_classes.gdl",
    "imports.gdl",
    "long_functions.gdl",
    "mutual_recursion.gdl",
    "param_count.gdl",
    "statement_kinds.gdl",
    "todo_comments.gdl",
    "unused_function.gdl",
];

fn c7_reuse() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let store = tmp.path().join("store");
    let shop = fixtures().join("shop");
    let e = cli(&store, &["extract", "--lang", "python", "--repo", shop.to_str().unwrap(), "--commit", "c1"]);
    ensure!(e.code == 0, "extract failed: {}", e.stderr);
    let mut first = BTreeMap::new();
    for q in PYTHON_QUERIES {
        let r = cli(&store, &["query", "--script", query_path(q).to_str().unwrap(), "--repo", "shop", "--commit", "c1"]);
        ensure!(r.code == 0, "{q}: {}", r.stderr);
        first.insert(q, r.stdout);
    }
    let report = cli(&store, &["report"]);
    let avg = report.stdout.lines().find(|l| l.starts_with("average")).unwrap_or_default().to_string();
    let cols: Vec<&str> = avg.split_whitespace().collect();
    ensure!(cols == ["average", "13", "1", "13.00"], "report: {}", report.stdout);

    for q in PYTHON_QUERIES {
        let r = cli(&store, &["query", "--script", query_path(q).to_str().unwrap(), "--repo", "shop", "--commit", "c1"]);
        ensure!(r.code == 0 && r.stdout == first[q], "{q}: repeat output differs");
        let last = read_metrics(&store.join("metrics.jsonl")).map_err(|e| e.to_string())?.pop().unwrap();
        ensure!(last.cache_hit && last.rule_evaluations == 0, "{q}: repeat was not served from the cache");
    }
    Ok("13 queries / 1 extraction = 13.00; 13 repeats hit the cache with 0 rule evaluations and identical stdout".into())
}

fn c8_robustness() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let store = tmp.path().join("store");
    let repo = fixtures().join("malformed");
    let r = cli(&store, &["extract", "--lang", "python", "--repo", repo.to_str().unwrap(), "--commit", "c1"]);
    ensure!(r.code == 0, "exit {}: {}", r.code, r.stderr);
    let a = read_archive(&store.join("malformed/python/c1")).map_err(|e| e.to_string())?;
    a.check().map_err(|e| e.to_string())?;
    check_references(&a).map_err(|e| e.join("; "))?;
    let diags = a.relation("diagnostic").map_or(0, |r| r.len());
    let bad: BTreeSet<i64> = a.relation("diagnostic").unwrap().iter().map(|t| t[1].as_int().unwrap()).collect();
    let files = a.relation("file").unwrap();
    let clean = files.iter().filter(|t| !bad.contains(&t[0].as_int().unwrap())).count();
    ensure!(files.len() == 20 && clean == 17 && diags == 3, "{} files, {clean} clean, {diags} diagnostics", files.len());
    Ok("exit 0; 20 files, 17 clean, 3 diagnostic rows; archive valid".into())
}

fn snapshot_bytes(store: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for e in walkdir::WalkDir::new(store).sort_by_file_name() {
        let e = e.unwrap();
        let rel = e.path().strip_prefix(store).unwrap().to_string_lossy().to_string();
        // An archive is its manifest plus relations; snapshot.json carries a timestamp.
        let in_archive = rel.ends_with("/manifest.json") || rel.contains("/relations/");
        if e.file_type().is_file() && in_archive {
            out.insert(rel, fs::read(e.path()).unwrap());
        }
    }
    out
}

fn pipeline(store: &Path) -> Result<(BTreeMap<String, Vec<u8>>, Vec<String>), String> {
    let mut stdout = Vec::new();
    let corpora = [("shop", "python"), ("calc", "python"), ("malformed", "python"), ("pom", "xml")];
    for (dir, lang) in corpora {
        let repo = fixtures().join(dir);
        let r = cli(store, &["extract", "--lang", lang, "--repo", repo.to_str().unwrap(), "--commit", "c1"]);
        ensure!(r.code == 0, "{dir}: {}", r.stderr);
        let queries: Vec<&str> = if lang == "xml" {
            vec!["pom_dependencies.gdl"]
        } else {
            PYTHON_QUERIES.iter().copied().chain(["unused_method_listing.gdl", "effectuated_functions.gdl"]).collect()
        };
        for q in queries {
            for format in ["tsv", "json"] {
                let r = cli(
                    store,
                    &["query", "--script", query_path(q).to_str().unwrap(), "--repo", dir, "--commit", "c1", "--format", format, "--no-cache"],
                );
                ensure!(r.code == 0, "{dir}/{q}: {}", r.stderr);
                stdout.push(r.stdout);
            }
        }
    }
    Ok((snapshot_bytes(store), stdout))
}

fn c9_determinism() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (arch_a, out_a) = pipeline(&a.path().join("store"))?;
    let (arch_b, out_b) = pipeline(&b.path().join("store"))?;
    ensure!(arch_a.len() > 4, "only {} archive files", arch_a.len());
    ensure!(arch_a == arch_b, "archives differ");
    ensure!(out_a == out_b, "query output differs");
    Ok(format!("{} archive files and {} query outputs byte-identical across two runs", arch_a.len(), out_a.len()))
}

fn main() {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("datalog correctness", c1_datalog),
        ("plan pruning", c2_pruning),
        ("query corpus", c3_corpus),
        ("incremental = full", c4_incremental),
        ("delta analysis", c5_dca),
        ("scheduling", c6_scheduling),
        ("cache and reuse", c7_reuse),
        ("extraction robustness", c8_robustness),
        ("determinism", c9_determinism),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|x| name.contains(x.as_str())) {
            continue;
        }
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("criterion {} PASS {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} FAIL {name}: {detail}", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
