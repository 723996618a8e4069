//! XML extractor.

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use crate::facts::Value;

use super::{FileFacts, NodePath};

struct Open {
    path: NodePath,
    id: i64,
    name: String,
    start: usize,
    parent: i64,
    index: i64,
    children: i64,
    chars: i64,
}

struct Lines {
    starts: Vec<usize>,
}

impl Lines {
    fn new(src: &str) -> Self {
        let mut starts = vec![0];
        starts.extend(src.match_indices('\n').map(|(i, _)| i + 1));
        Lines { starts }
    }

    /// 1-based (line, column) of a byte offset; columns count chars.
    fn pos(&self, src: &str, offset: usize) -> (i64, i64) {
        let offset = offset.min(src.len());
        let line = self.starts.partition_point(|s| *s <= offset) - 1;
        let col = src[self.starts[line]..offset].chars().count() + 1;
        (line as i64 + 1, col as i64)
    }
}

/// Extracts one XML file. Malformed input yields the `xml_file` row and a
/// `diagnostic` row only.
pub fn extract_file(rel_path: &str, bytes: &[u8]) -> FileFacts {
    let mut facts = FileFacts::new(rel_path, bytes);
    let name = rel_path.rsplit('/').next().unwrap_or(rel_path).to_string();
    let row = vec![Value::Int(facts.file_id), Value::str(name), Value::str(rel_path), Value::str(&facts.content_hash)];
    facts.push("xml_file", row);
    let root = facts.root();
    let Ok(src) = std::str::from_utf8(bytes) else {
        facts.diagnostic(&root, 1, "file is not valid UTF-8");
        return facts;
    };
    let lines = Lines::new(src);
    let mut body = FileFacts::new(rel_path, bytes);
    match walk(src, &lines, &mut body, root.clone()) {
        Ok(()) => {
            for (rel, rows) in body.rows {
                facts.rows.entry(rel).or_default().extend(rows);
            }
        }
        Err((offset, message)) => {
            let (line, col) = lines.pos(src, offset);
            facts.diagnostic(&root, line, &format!("malformed XML at {line}:{col}: {message}"));
        }
    }
    facts
}

fn walk(src: &str, lines: &Lines, facts: &mut FileFacts, mut root: NodePath) -> Result<(), (usize, String)> {
    let mut reader = Reader::from_str(src);
    let mut stack: Vec<Open> = Vec::new();
    let mut roots = 0i64;
    loop {
        let before = reader.buffer_position() as usize;
        let event = reader.read_event().map_err(|e| (reader.error_position() as usize, e.to_string()))?;
        let after = reader.buffer_position() as usize;
        match event {
            Event::Start(e) => {
                let open = open_element(facts, &mut stack, &mut root, &mut roots, &e, before)?;
                stack.push(open);
            }
            Event::Empty(e) => {
                let open = open_element(facts, &mut stack, &mut root, &mut roots, &e, before)?;
                close_element(facts, lines, src, open, after);
            }
            Event::End(_) => {
                let open = stack.pop().ok_or((before, "unexpected closing tag".to_string()))?;
                close_element(facts, lines, src, open, after);
            }
            Event::Text(t) => {
                let text = t.unescape().map_err(|e| (before, e.to_string()))?;
                character(facts, &mut stack, &text, before)?;
            }
            Event::CData(c) => {
                let raw = c.into_inner();
                let text = String::from_utf8_lossy(&raw).to_string();
                character(facts, &mut stack, &text, before)?;
            }
            Event::Eof => break,
            _ => {}
        }
    }
    if let Some(open) = stack.last() {
        return Err((src.len(), format!("element <{}> is not closed", open.name)));
    }
    Ok(())
}

fn open_element(
    facts: &mut FileFacts,
    stack: &mut [Open],
    root: &mut NodePath,
    roots: &mut i64,
    e: &BytesStart<'_>,
    offset: usize,
) -> Result<Open, (usize, String)> {
    let name = String::from_utf8_lossy(e.name().as_ref()).to_string();
    let (mut path, parent, index) = match stack.last_mut() {
        Some(p) => {
            p.children += 1;
            (p.path.child("element"), p.id, p.children - 1)
        }
        None => {
            *roots += 1;
            (root.child("element"), 0, *roots - 1)
        }
    };
    let id = path.id();
    for attr in e.attributes() {
        let attr = attr.map_err(|err| (offset, err.to_string()))?;
        let value = attr.unescape_value().map_err(|err| (offset, err.to_string()))?;
        let key = String::from_utf8_lossy(attr.key.as_ref()).to_string();
        let aid = path.child("attribute").id();
        facts.push("xml_attribute", vec![Value::Int(aid), Value::Int(id), Value::str(key), Value::str(value.as_ref())]);
    }
    Ok(Open { path, id, name, start: offset, parent, index, children: 0, chars: 0 })
}

fn close_element(facts: &mut FileFacts, lines: &Lines, src: &str, open: Open, end: usize) {
    let loc = open.path.fixed("location").id();
    let (sl, sc) = lines.pos(src, open.start);
    let (el, ec) = lines.pos(src, end.saturating_sub(1));
    let file_id = facts.file_id;
    facts.push(
        "xml_location",
        vec![Value::Int(loc), Value::Int(file_id), Value::Int(sl), Value::Int(sc), Value::Int(el), Value::Int(ec)],
    );
    facts.push(
        "xml_element",
        vec![Value::Int(open.id), Value::str(open.name), Value::Int(loc), Value::Int(open.parent), Value::Int(open.index)],
    );
}

fn character(facts: &mut FileFacts, stack: &mut [Open], text: &str, offset: usize) -> Result<(), (usize, String)> {
    if text.trim().is_empty() {
        return Ok(());
    }
    let Some(open) = stack.last_mut() else {
        return Err((offset, "text outside the root element".to_string()));
    };
    let id = open.path.child("character").id();
    facts.push("xml_character", vec![Value::Int(id), Value::str(text), Value::Int(open.id), Value::Int(open.chars)]);
    open.chars += 1;
    Ok(())
}
