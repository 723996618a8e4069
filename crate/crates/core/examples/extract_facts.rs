//! Per-file extraction of Python and XML sources, including a file that
//! does not parse.

use codefacts::extract::extract_file;
use codefacts::Language;

fn show(language: Language, path: &str, src: &str) {
    let facts = extract_file(language, path, src.as_bytes());
    println!("{path}: {} lines, id {}, malformed {}", facts.line_count, facts.file_id, facts.malformed);
    for (relation, rows) in &facts.rows {
        println!("  {relation:<16} {}", rows.len());
    }
}

fn main() {
    show(
        Language::Python,
        "geometry.py",
        "class Shape:\n    def area(self):\n        return 0\n\n\nclass Square(Shape):\n    # TODO: validate\n    def area(self):\n        return self.side * self.side\n",
    );
    show(Language::Python, "broken.py", "def f(:\n    return\n");
    show(
        Language::Xml,
        "pom.xml",
        "<project><dependencies><dependency><groupId>g</groupId><artifactId>a</artifactId></dependency></dependencies></project>\n",
    );
}
