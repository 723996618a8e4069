//! Tokenizer for the supported Python subset, with INDENT/DEDENT
//! synthesis and implicit line joining inside brackets.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tok {
    Name,
    Number,
    Str,
    Op,
    Newline,
    Indent,
    Dedent,
    Eof,
}

/// 1-based line and column (columns count characters).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

#[derive(Debug, Clone)]
pub struct Token {
    pub kind: Tok,
    /// Byte range in the source.
    pub start: usize,
    pub end: usize,
    pub begin: Pos,
    /// Position of the last character of the token.
    pub last: Pos,
}

#[derive(Debug, Clone)]
pub struct Comment {
    pub text: String,
    pub pos: Pos,
    pub last: Pos,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexError {
    pub pos: Pos,
    pub message: String,
}

pub struct Lexed {
    pub tokens: Vec<Token>,
    pub comments: Vec<Comment>,
}

const OPS: &[&str] = &[
    "**=", "//=", ">>=", "<<=", "...", "->", ":=", "**", "//", "==", "!=", "<=", ">=", "<<", ">>", "+=", "-=", "*=", "/=", "%=",
    "&=", "|=", "^=", "@=", "(", ")", "[", "]", "{", "}", ",", ":", ".", ";", "@", "=", "+", "-", "*", "/", "%", "<", ">", "&",
    "|", "^", "~",
];

struct Cursor<'a> {
    src: &'a str,
    i: usize,
    line: u32,
    col: u32,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<char> {
        self.src[self.i..].chars().next()
    }

    fn peek_at(&self, n: usize) -> Option<char> {
        self.src[self.i..].chars().nth(n)
    }

    fn pos(&self) -> Pos {
        Pos { line: self.line, col: self.col }
    }

    fn bump(&mut self) -> Option<(Pos, char)> {
        let c = self.peek()?;
        let p = self.pos();
        self.i += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some((p, c))
    }
}

pub fn tokenize(src: &str) -> Result<Lexed, LexError> {
    let mut cur = Cursor { src, i: 0, line: 1, col: 1 };
    let mut tokens: Vec<Token> = Vec::new();
    let mut comments = Vec::new();
    let mut indents: Vec<u32> = vec![0];
    let mut depth: usize = 0;
    let mut at_line_start = true;

    loop {
        if at_line_start && depth == 0 {
            // Measure indentation; blank and comment-only lines do not count.
            let mut width = 0u32;
            while let Some(c) = cur.peek() {
                match c {
                    ' ' => width += 1,
                    '\t' => width = (width / 8 + 1) * 8,
                    '\x0c' => width = 0,
                    _ => break,
                }
                cur.bump();
            }
            match cur.peek() {
                None => break,
                Some('\n') | Some('\r') | Some('#') => {}
                Some('\\') if matches!(cur.peek_at(1), Some('\n')) => {}
                Some(_) => {
                    let p = cur.pos();
                    let top = *indents.last().unwrap();
                    if width > top {
                        indents.push(width);
                        tokens.push(Token { kind: Tok::Indent, start: cur.i, end: cur.i, begin: p, last: p });
                    } else {
                        while width < *indents.last().unwrap() {
                            indents.pop();
                            tokens.push(Token { kind: Tok::Dedent, start: cur.i, end: cur.i, begin: p, last: p });
                        }
                        if width != *indents.last().unwrap() {
                            return Err(LexError { pos: p, message: "unindent does not match any outer indentation level".into() });
                        }
                    }
                    at_line_start = false;
                }
            }
        }
        let Some(c) = cur.peek() else { break };
        let start = cur.i;
        let begin = cur.pos();
        match c {
            ' ' | '\t' | '\x0c' | '\r' => {
                cur.bump();
            }
            '\n' => {
                cur.bump();
                let significant = depth == 0 && !at_line_start && tokens.last().is_some_and(|t| t.kind != Tok::Newline);
                if significant {
                    tokens.push(Token { kind: Tok::Newline, start, end: start + 1, begin, last: begin });
                }
                if depth == 0 {
                    at_line_start = true;
                }
            }
            '#' => {
                let mut last = begin;
                while let Some(c) = cur.peek() {
                    if c == '\n' {
                        break;
                    }
                    last = cur.bump().unwrap().0;
                }
                comments.push(Comment { text: src[start..cur.i].trim_end_matches('\r').to_string(), pos: begin, last });
            }
            '\\' => {
                cur.bump();
                match cur.peek() {
                    Some('\n') => {
                        cur.bump();
                    }
                    Some('\r') if cur.peek_at(1) == Some('\n') => {
                        cur.bump();
                        cur.bump();
                    }
                    _ => return Err(LexError { pos: begin, message: "unexpected character after line continuation".into() }),
                }
            }
            c if c.is_alphabetic() || c == '_' => {
                let mut last = begin;
                while let Some(c) = cur.peek() {
                    if c.is_alphanumeric() || c == '_' {
                        last = cur.bump().unwrap().0;
                    } else {
                        break;
                    }
                }
                let word = &src[start..cur.i];
                let is_prefix = word.len() <= 2 && word.chars().all(|c| matches!(c.to_ascii_lowercase(), 'r' | 'b' | 'u' | 'f'));
                if is_prefix && matches!(cur.peek(), Some('"') | Some('\'')) {
                    let last = string_body(&mut cur)?;
                    tokens.push(Token { kind: Tok::Str, start, end: cur.i, begin, last });
                } else {
                    tokens.push(Token { kind: Tok::Name, start, end: cur.i, begin, last });
                }
            }
            '"' | '\'' => {
                let last = string_body(&mut cur)?;
                tokens.push(Token { kind: Tok::Str, start, end: cur.i, begin, last });
            }
            c if c.is_ascii_digit() || (c == '.' && cur.peek_at(1).is_some_and(|d| d.is_ascii_digit())) => {
                let mut last = begin;
                let mut prev = ' ';
                while let Some(c) = cur.peek() {
                    let exp_sign = (c == '+' || c == '-') && (prev == 'e' || prev == 'E') && !src[start..cur.i].starts_with("0x");
                    if c.is_ascii_alphanumeric() || c == '_' || c == '.' || exp_sign {
                        prev = c;
                        last = cur.bump().unwrap().0;
                    } else {
                        break;
                    }
                }
                tokens.push(Token { kind: Tok::Number, start, end: cur.i, begin, last });
            }
            _ => {
                let rest = &src[cur.i..];
                let Some(op) = OPS.iter().find(|op| rest.starts_with(**op)) else {
                    return Err(LexError { pos: begin, message: format!("unexpected character {c:?}") });
                };
                let mut last = begin;
                for _ in 0..op.chars().count() {
                    last = cur.bump().unwrap().0;
                }
                match *op {
                    "(" | "[" | "{" => depth += 1,
                    ")" | "]" | "}" => {
                        if depth == 0 {
                            return Err(LexError { pos: begin, message: format!("unmatched {op:?}") });
                        }
                        depth -= 1;
                    }
                    _ => {}
                }
                tokens.push(Token { kind: Tok::Op, start, end: cur.i, begin, last });
            }
        }
    }
    let end = src.len();
    let p = cur.pos();
    if depth > 0 {
        return Err(LexError { pos: p, message: "unexpected end of file inside brackets".into() });
    }
    if tokens.last().is_some_and(|t| !matches!(t.kind, Tok::Newline | Tok::Dedent)) {
        tokens.push(Token { kind: Tok::Newline, start: end, end, begin: p, last: p });
    }
    while indents.len() > 1 {
        indents.pop();
        tokens.push(Token { kind: Tok::Dedent, start: end, end, begin: p, last: p });
    }
    tokens.push(Token { kind: Tok::Eof, start: end, end, begin: p, last: p });
    Ok(Lexed { tokens, comments })
}

/// Consumes a quoted string starting at the opening quote; returns the
/// position of the closing quote.
fn string_body(cur: &mut Cursor<'_>) -> Result<Pos, LexError> {
    let (open, q) = cur.bump().unwrap();
    let triple = cur.peek() == Some(q) && cur.peek_at(1) == Some(q);
    if triple {
        cur.bump();
        cur.bump();
    }
    loop {
        let Some((p, c)) = cur.bump() else {
            return Err(LexError { pos: open, message: "unterminated string literal".into() });
        };
        match c {
            '\\' => {
                cur.bump();
            }
            '\n' if !triple => return Err(LexError { pos: open, message: "unterminated string literal".into() }),
            c if c == q => {
                if !triple {
                    return Ok(p);
                }
                if cur.peek() == Some(q) && cur.peek_at(1) == Some(q) {
                    cur.bump();
                    return Ok(cur.bump().unwrap().0);
                }
            }
            _ => {}
        }
    }
}
