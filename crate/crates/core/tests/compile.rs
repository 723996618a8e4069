use codefacts::datalog::Literal;
use codefacts::godel::{compile, CompileError};
use codefacts::Language;

fn fixture(name: &str) -> String {
    std::fs::read_to_string(format!("{}/tests/fixtures/queries/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

fn rules_for<'a>(q: &'a codefacts::godel::CompiledQuery, head: &str) -> Vec<&'a codefacts::datalog::Rule> {
    q.program().rules.iter().filter(|r| r.head.predicate == head).collect()
}

#[test]
fn unused_method_listing_lowers_to_one_rule() {
    let q = compile(&fixture("unused_method_listing.gdl"), Language::Python, true).unwrap_or_else(|e| panic!("{e}"));
    let rules = rules_for(&q, "unused_method");
    for r in &rules {
        eprintln!("{r}");
    }
    assert_eq!(rules.len(), 1);
    let body = &rules[0].body;
    let count = |p: &str| body.iter().filter(|l| matches!(l, Literal::Pos(a) if a.predicate == p)).count();
    assert_eq!(count("Callable"), 3);
    assert_eq!(count("Function.getCaller"), 1);
    assert_eq!(count("Function.getSignature"), 1);
    assert_eq!(body.iter().filter(|l| matches!(l, Literal::Cmp { .. })).count(), 1);
}

#[test]
fn effectuated_functions_is_recursive() {
    let q = compile(&fixture("effectuated_functions.gdl"), Language::Python, true).unwrap_or_else(|e| panic!("{e}"));
    let rules = rules_for(&q, "getAnEffectuatedFunction");
    for r in &rules {
        eprintln!("{r}");
    }
    assert_eq!(rules.len(), 2);
    assert!(rules[1].body.iter().any(|l| matches!(l, Literal::Pos(a) if a.predicate == "getAnEffectuatedFunction")));
    assert_eq!(q.outputs()[0].1.len(), 10);
}

#[test]
fn pom_dependencies_compiles() {
    let q = compile(&fixture("pom_dependencies.gdl"), Language::Xml, true).unwrap_or_else(|e| panic!("{e}"));
    for r in rules_for(&q, "out") {
        eprintln!("{r}");
    }
    assert_eq!(q.outputs(), vec![("out".to_string(), vec!["fileName".into(), "m1".into(), "m2".into(), "m3".into()])]);
    for s in ["DependencyElement", "GroupElement", "VersionElement", "ArtifactElement", "PomFile"] {
        assert_eq!(rules_for(&q, s).len(), 1, "{s}");
    }
}

#[test]
fn type_errors_carry_positions() {
    let src = "use coref::xml::*\nfn f(n: string) -> bool {\n    for (x in XmlFile()) {\n        if (x.file_name = 3 && n = x.relative_path) { return true }\n    }\n}\nfn main() { output(f()) }\n";
    let err = compile(src, Language::Xml, true).unwrap_err();
    let CompileError::Type(d) = &err else { panic!("{err}") };
    assert_eq!(d[0].pos.line, 4, "{err}");
}
