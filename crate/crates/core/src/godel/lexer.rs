use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    Str(String),
    /// Punctuation and operators.
    Sym(&'static str),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Int(v) => write!(f, "`{v}`"),
            Tok::Str(s) => write!(f, "{s:?}"),
            Tok::Sym(s) => write!(f, "`{s}`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexError {
    pub pos: Pos,
    pub message: String,
}

const SYMS: &[&str] = &[
    "::", "->", "&&", "||", "!=", "<=", ">=", "==", "{", "}", "(", ")", ",", ":", ".", "*", "@", "=", "<", ">", "!", "+", "-", "/",
    "%", ";",
];

pub fn tokenize(src: &str) -> Result<Vec<Token>, LexError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);
    let advance = |i: &mut usize, line: &mut u32, col: &mut u32, c: char| {
        *i += 1;
        if c == '\n' {
            *line += 1;
            *col = 1;
        } else {
            *col += 1;
        }
    };
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, col };
        if c.is_whitespace() {
            advance(&mut i, &mut line, &mut col, c);
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                {
                    let c = chars[i];
                    advance(&mut i, &mut line, &mut col, c);
                }
            }
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'*') {
            advance(&mut i, &mut line, &mut col, '/');
            advance(&mut i, &mut line, &mut col, '*');
            loop {
                if i >= chars.len() {
                    return Err(LexError { pos, message: "unterminated block comment".into() });
                }
                if chars[i] == '*' && chars.get(i + 1) == Some(&'/') {
                    advance(&mut i, &mut line, &mut col, '*');
                    advance(&mut i, &mut line, &mut col, '/');
                    break;
                }
                {
                    let c = chars[i];
                    advance(&mut i, &mut line, &mut col, c);
                }
            }
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let mut s = String::new();
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                s.push(chars[i]);
                {
                    let c = chars[i];
                    advance(&mut i, &mut line, &mut col, c);
                }
            }
            out.push(Token { tok: Tok::Ident(s), pos });
            continue;
        }
        if c.is_ascii_digit() {
            let mut s = String::new();
            while i < chars.len() && chars[i].is_ascii_digit() {
                s.push(chars[i]);
                {
                    let c = chars[i];
                    advance(&mut i, &mut line, &mut col, c);
                }
            }
            let v = s.parse().map_err(|_| LexError { pos, message: format!("integer literal {s} is out of range") })?;
            out.push(Token { tok: Tok::Int(v), pos });
            continue;
        }
        if c == '"' {
            advance(&mut i, &mut line, &mut col, c);
            let mut s = String::new();
            loop {
                let Some(&d) = chars.get(i) else {
                    return Err(LexError { pos, message: "unterminated string literal".into() });
                };
                if d == '\n' {
                    return Err(LexError { pos, message: "unterminated string literal".into() });
                }
                advance(&mut i, &mut line, &mut col, d);
                match d {
                    '"' => break,
                    '\\' => {
                        let e = chars.get(i).copied().ok_or(LexError { pos, message: "unterminated string literal".into() })?;
                        advance(&mut i, &mut line, &mut col, e);
                        s.push(match e {
                            'n' => '\n',
                            't' => '\t',
                            '\\' => '\\',
                            '"' => '"',
                            other => {
                                return Err(LexError {
                                    pos: Pos { line, col: col - 2 },
                                    message: format!("unknown escape `\\{other}`"),
                                })
                            }
                        });
                    }
                    d => s.push(d),
                }
            }
            out.push(Token { tok: Tok::Str(s), pos });
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
        let Some(sym) = SYMS.iter().find(|s| rest.starts_with(**s)) else {
            return Err(LexError { pos, message: format!("unexpected character `{c}`") });
        };
        for ch in sym.chars() {
            advance(&mut i, &mut line, &mut col, ch);
        }
        out.push(Token { tok: Tok::Sym(sym), pos });
    }
    out.push(Token { tok: Tok::Eof, pos: Pos { line, col } });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens_and_positions() {
        let toks = tokenize("fn f() -> bool {\n  // c\n  return a::b(\"x\\n\") /* y */ != 3\n}").unwrap();
        let kinds: Vec<String> = toks.iter().map(|t| t.tok.to_string()).collect();
        assert_eq!(
            kinds,
            vec![
                "`fn`", "`f`", "`(`", "`)`", "`->`", "`bool`", "`{`", "`return`", "`a`", "`::`", "`b`", "`(`", "\"x\\n\"", "`)`", "`!=`",
                "`3`", "`}`", "end of input"
            ]
        );
        assert_eq!(toks[7].pos, Pos { line: 3, col: 3 });
    }

    #[test]
    fn errors() {
        assert!(tokenize("\"abc").is_err());
        assert!(tokenize("/* x").is_err());
        assert_eq!(tokenize("a # b").unwrap_err().pos, Pos { line: 1, col: 3 });
    }
}
