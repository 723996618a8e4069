//! Recursive-descent parser producing a light AST: enough structure for
//! definitions, statements, calls, lambdas and boolean operators.

use super::lexer::{tokenize, Comment, LexError, Pos, Tok, Token};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub begin: Pos,
    pub last: Pos,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone)]
pub enum ExprKind {
    Call { callee: Box<Expr>, args: Vec<Expr> },
    Lambda { params: Vec<String>, body: Box<Expr>, defaults: Vec<Expr> },
    /// `ops` is the number of `and`/`or` operators joining the operands.
    BoolOp { ops: usize, operands: Vec<Expr> },
    Other(Vec<Expr>),
}

#[derive(Debug, Clone)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

#[derive(Debug, Clone)]
pub struct Decorator {
    pub text: String,
    pub expr: Expr,
}

#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub default: Option<Expr>,
    pub annotation: Option<Expr>,
}

#[derive(Debug, Clone)]
pub enum StmtKind {
    Def { name: String, params: Vec<Param>, returns: Option<Expr>, decorators: Vec<Decorator>, body: Vec<Stmt> },
    Class { name: String, bases: Vec<Expr>, keywords: Vec<Expr>, decorators: Vec<Decorator>, body: Vec<Stmt> },
    /// `(imported_name, alias)` pairs; alias is empty when absent.
    Import { names: Vec<(String, String)> },
    Simple { kind: &'static str, exprs: Vec<Expr> },
    Compound { kind: &'static str, exprs: Vec<Expr>, body: Vec<Stmt> },
}

#[derive(Debug, Clone)]
pub struct Stmt {
    pub kind: StmtKind,
    pub span: Span,
}

#[derive(Debug)]
pub struct Module {
    pub body: Vec<Stmt>,
    pub comments: Vec<Comment>,
    /// Spans of string literals that act as docstrings.
    pub docstrings: Vec<Span>,
    pub tokens: Vec<Token>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub pos: Pos,
    pub message: String,
}

impl From<LexError> for ParseError {
    fn from(e: LexError) -> Self {
        ParseError { pos: e.pos, message: e.message }
    }
}

const KEYWORDS: &[&str] = &[
    "False", "None", "True", "and", "as", "assert", "async", "await", "break", "class", "continue", "def", "del", "elif",
    "else", "except", "finally", "for", "from", "global", "if", "import", "in", "is", "lambda", "nonlocal", "not", "or",
    "pass", "raise", "return", "try", "while", "with", "yield",
];

type PResult<T> = Result<T, ParseError>;

pub fn parse_module(src: &str) -> PResult<Module> {
    let lexed = tokenize(src)?;
    let mut p = Parser { src, toks: &lexed.tokens, i: 0, docstrings: Vec::new() };
    let mut body = Vec::new();
    while !p.at(Tok::Eof) {
        if p.at(Tok::Newline) {
            p.i += 1;
            continue;
        }
        body.extend(p.statement()?);
    }
    p.note_docstring(&body);
    let docstrings = p.docstrings;
    Ok(Module { body, comments: lexed.comments, docstrings, tokens: lexed.tokens })
}

struct Parser<'a> {
    src: &'a str,
    toks: &'a [Token],
    i: usize,
    docstrings: Vec<Span>,
}

impl<'a> Parser<'a> {
    fn tok(&self) -> &'a Token {
        &self.toks[self.i.min(self.toks.len() - 1)]
    }

    fn text(&self) -> &'a str {
        let t = self.tok();
        &self.src[t.start..t.end]
    }

    fn at(&self, kind: Tok) -> bool {
        self.tok().kind == kind
    }

    fn at_op(&self, op: &str) -> bool {
        self.at(Tok::Op) && self.text() == op
    }

    fn at_kw(&self, kw: &str) -> bool {
        self.at(Tok::Name) && self.text() == kw
    }

    fn peek_op(&self, n: usize, op: &str) -> bool {
        self.toks.get(self.i + n).is_some_and(|t| t.kind == Tok::Op && &self.src[t.start..t.end] == op)
    }

    fn err<T>(&self, message: impl Into<String>) -> PResult<T> {
        let t = self.tok();
        let found = match t.kind {
            Tok::Newline => "end of line".to_string(),
            Tok::Indent => "indent".to_string(),
            Tok::Dedent => "dedent".to_string(),
            Tok::Eof => "end of file".to_string(),
            _ => format!("{:?}", &self.src[t.start..t.end]),
        };
        Err(ParseError { pos: t.begin, message: format!("{}, found {found}", message.into()) })
    }

    fn expect_op(&mut self, op: &str) -> PResult<&'a Token> {
        if self.at_op(op) {
            self.i += 1;
            Ok(&self.toks[self.i - 1])
        } else {
            self.err(format!("expected {op:?}"))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<()> {
        if self.at_kw(kw) {
            self.i += 1;
            Ok(())
        } else {
            self.err(format!("expected `{kw}`"))
        }
    }

    fn eat_op(&mut self, op: &str) -> bool {
        if self.at_op(op) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.at_kw(kw) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> PResult<String> {
        if self.at(Tok::Name) && !KEYWORDS.contains(&self.text()) {
            self.i += 1;
            Ok(self.src[self.toks[self.i - 1].start..self.toks[self.i - 1].end].to_string())
        } else {
            self.err("expected a name")
        }
    }

    fn span_from(&self, first: usize) -> Span {
        let a = &self.toks[first];
        // The last consumed token that is not synthetic.
        let mut j = self.i.saturating_sub(1).max(first);
        while j > first && matches!(self.toks[j].kind, Tok::Newline | Tok::Indent | Tok::Dedent) {
            j -= 1;
        }
        let b = &self.toks[j];
        Span { begin: a.begin, last: b.last, start: a.start, end: b.end }
    }

    fn expr_at(&self, first: usize, kind: ExprKind) -> Expr {
        Expr { kind, span: self.span_from(first) }
    }

    // ---- statements -------------------------------------------------

    fn statement(&mut self) -> PResult<Vec<Stmt>> {
        let first = self.i;
        if self.at(Tok::Indent) {
            return self.err("unexpected indent");
        }
        if self.at(Tok::Name) {
            match self.text() {
                "if" => return Ok(vec![self.if_stmt()?]),
                "while" => {
                    self.i += 1;
                    let cond = self.named_test()?;
                    let mut body = self.block()?;
                    if self.eat_kw("else") {
                        body.extend(self.block()?);
                    }
                    return Ok(vec![self.compound(first, "while", vec![cond], body)]);
                }
                "for" => return Ok(vec![self.for_stmt(first)?]),
                "try" => return Ok(vec![self.try_stmt()?]),
                "with" => return Ok(vec![self.with_stmt(first)?]),
                "def" => return Ok(vec![self.def_stmt(first, Vec::new())?]),
                "class" => return Ok(vec![self.class_stmt(first, Vec::new())?]),
                "async" => {
                    self.i += 1;
                    return match self.text() {
                        "def" => Ok(vec![self.def_stmt(first, Vec::new())?]),
                        "for" => Ok(vec![self.for_stmt(first)?]),
                        "with" => Ok(vec![self.with_stmt(first)?]),
                        _ => self.err("expected `def`, `for` or `with` after `async`"),
                    };
                }
                "match" => {
                    if let Some(s) = self.try_match()? {
                        return Ok(vec![s]);
                    }
                }
                _ => {}
            }
        }
        if self.at_op("@") {
            return Ok(vec![self.decorated()?]);
        }
        self.simple_line()
    }

    fn compound(&self, first: usize, kind: &'static str, exprs: Vec<Expr>, body: Vec<Stmt>) -> Stmt {
        Stmt { kind: StmtKind::Compound { kind, exprs, body }, span: self.span_from(first) }
    }

    /// `:` followed by an indented block or simple statements on one line.
    fn block(&mut self) -> PResult<Vec<Stmt>> {
        self.expect_op(":")?;
        if self.at(Tok::Newline) {
            self.i += 1;
            if !self.at(Tok::Indent) {
                return self.err("expected an indented block");
            }
            self.i += 1;
            let mut body = Vec::new();
            while !self.at(Tok::Dedent) && !self.at(Tok::Eof) {
                if self.at(Tok::Newline) {
                    self.i += 1;
                    continue;
                }
                body.extend(self.statement()?);
            }
            if self.at(Tok::Dedent) {
                self.i += 1;
            }
            self.note_docstring(&body);
            Ok(body)
        } else {
            self.simple_line()
        }
    }

    fn note_docstring(&mut self, body: &[Stmt]) {
        if let Some(Stmt { kind: StmtKind::Simple { kind: "expr", exprs }, span }) = body.first() {
            let from = self.toks.partition_point(|t| t.start < span.start);
            let is_str = exprs.len() == 1
                && self.toks[from..]
                    .iter()
                    .take_while(|t| t.end <= span.end)
                    .filter(|t| !matches!(t.kind, Tok::Newline | Tok::Indent | Tok::Dedent))
                    .all(|t| t.kind == Tok::Str);
            if is_str {
                self.docstrings.push(*span);
            }
        }
    }

    fn if_stmt(&mut self) -> PResult<Stmt> {
        let first = self.i;
        self.i += 1; // `if` or `elif`
        let cond = self.named_test()?;
        let mut body = self.block()?;
        if self.at_kw("elif") {
            body.push(self.if_stmt()?);
        } else if self.eat_kw("else") {
            body.extend(self.block()?);
        }
        Ok(self.compound(first, "if", vec![cond], body))
    }

    fn for_stmt(&mut self, first: usize) -> PResult<Stmt> {
        self.expect_kw("for")?;
        let target = self.target_list()?;
        self.expect_kw("in")?;
        let iter = self.star_expressions()?;
        let mut body = self.block()?;
        if self.eat_kw("else") {
            body.extend(self.block()?);
        }
        Ok(self.compound(first, "for", vec![target, iter], body))
    }

    fn try_stmt(&mut self) -> PResult<Stmt> {
        let first = self.i;
        self.i += 1;
        let mut body = self.block()?;
        let mut handlers = 0;
        while self.at_kw("except") {
            let hfirst = self.i;
            self.i += 1;
            self.eat_op("*");
            let mut exprs = Vec::new();
            if !self.at_op(":") {
                exprs.push(self.test()?);
                if self.eat_op(",") {
                    exprs.push(self.test()?);
                }
                if self.eat_kw("as") {
                    self.ident()?;
                }
            }
            let hbody = self.block()?;
            body.push(self.compound(hfirst, "except", exprs, hbody));
            handlers += 1;
        }
        if handlers > 0 && self.eat_kw("else") {
            body.extend(self.block()?);
        }
        if self.eat_kw("finally") {
            body.extend(self.block()?);
        } else if handlers == 0 {
            return self.err("expected `except` or `finally`");
        }
        Ok(self.compound(first, "try", Vec::new(), body))
    }

    fn with_stmt(&mut self, first: usize) -> PResult<Stmt> {
        self.expect_kw("with")?;
        let mut exprs = Vec::new();
        let parenthesized = self.at_op("(") && {
            // `with (a as b, c):` versus `with (a).b():`
            let mut depth = 0;
            let mut j = self.i;
            let mut found_as = false;
            while j < self.toks.len() {
                let t = &self.toks[j];
                let s = &self.src[t.start..t.end];
                if t.kind == Tok::Op && (s == "(" || s == "[" || s == "{") {
                    depth += 1;
                } else if t.kind == Tok::Op && (s == ")" || s == "]" || s == "}") {
                    depth -= 1;
                    if depth == 0 {
                        break;
                    }
                } else if depth == 1 && t.kind == Tok::Name && s == "as" {
                    found_as = true;
                }
                j += 1;
            }
            found_as && self.toks.get(j + 1).is_some_and(|t| t.kind == Tok::Op && &self.src[t.start..t.end] == ":")
        };
        if parenthesized {
            self.i += 1;
        }
        loop {
            exprs.push(self.test()?);
            if self.eat_kw("as") {
                exprs.push(self.target_item()?);
            }
            if !self.eat_op(",") {
                break;
            }
            if parenthesized && self.at_op(")") {
                break;
            }
        }
        if parenthesized {
            self.expect_op(")")?;
        }
        let body = self.block()?;
        Ok(self.compound(first, "with", exprs, body))
    }

    fn decorated(&mut self) -> PResult<Stmt> {
        let mut decorators = Vec::new();
        while self.at_op("@") {
            self.i += 1;
            let e = self.named_test()?;
            let text = self.src[e.span.start..e.span.end].to_string();
            decorators.push(Decorator { text, expr: e });
            if !self.at(Tok::Newline) {
                return self.err("expected end of line after decorator");
            }
            self.i += 1;
        }
        let first = self.i;
        if self.at_kw("def") {
            self.def_stmt(first, decorators)
        } else if self.at_kw("class") {
            self.class_stmt(first, decorators)
        } else if self.at_kw("async") {
            self.i += 1;
            self.def_stmt(first, decorators)
        } else {
            self.err("expected `def` or `class` after decorators")
        }
    }

    fn def_stmt(&mut self, first: usize, decorators: Vec<Decorator>) -> PResult<Stmt> {
        self.expect_kw("def")?;
        let name = self.ident()?;
        if self.at_op("[") {
            self.skip_brackets()?;
        }
        self.expect_op("(")?;
        let params = self.params(")")?;
        self.expect_op(")")?;
        let returns = if self.eat_op("->") { Some(self.test()?) } else { None };
        let body = self.block()?;
        Ok(Stmt { kind: StmtKind::Def { name, params, returns, decorators, body }, span: self.span_from(first) })
    }

    fn class_stmt(&mut self, first: usize, decorators: Vec<Decorator>) -> PResult<Stmt> {
        self.expect_kw("class")?;
        let name = self.ident()?;
        if self.at_op("[") {
            self.skip_brackets()?;
        }
        let mut bases = Vec::new();
        let mut keywords = Vec::new();
        if self.eat_op("(") {
            while !self.at_op(")") {
                if self.at(Tok::Name) && self.peek_op(1, "=") {
                    self.i += 2;
                    keywords.push(self.test()?);
                } else if self.at_op("*") || self.at_op("**") {
                    self.i += 1;
                    keywords.push(self.test()?);
                } else {
                    bases.push(self.test()?);
                }
                if !self.eat_op(",") {
                    break;
                }
            }
            self.expect_op(")")?;
        }
        let body = self.block()?;
        Ok(Stmt { kind: StmtKind::Class { name, bases, keywords, decorators, body }, span: self.span_from(first) })
    }

    fn skip_brackets(&mut self) -> PResult<()> {
        let mut depth = 0;
        loop {
            if self.at(Tok::Eof) {
                return self.err("unclosed bracket");
            }
            if self.at_op("[") || self.at_op("(") || self.at_op("{") {
                depth += 1;
            } else if self.at_op("]") || self.at_op(")") || self.at_op("}") {
                depth -= 1;
            }
            self.i += 1;
            if depth == 0 {
                return Ok(());
            }
        }
    }

    /// Parameters up to (not including) `close`. Bare `*` and `/` markers
    /// are accepted and not recorded.
    fn params(&mut self, close: &str) -> PResult<Vec<Param>> {
        let mut params = Vec::new();
        while !self.at_op(close) {
            if self.eat_op("/") {
            } else if self.at_op("*") || self.at_op("**") {
                self.i += 1;
                if self.at(Tok::Name) {
                    let name = self.ident()?;
                    let annotation = if close == ")" && self.eat_op(":") { Some(self.test()?) } else { None };
                    params.push(Param { name, default: None, annotation });
                }
            } else {
                let name = self.ident()?;
                let annotation = if close == ")" && self.eat_op(":") { Some(self.test()?) } else { None };
                let default = if self.eat_op("=") { Some(self.test()?) } else { None };
                params.push(Param { name, default, annotation });
            }
            if !self.eat_op(",") {
                break;
            }
        }
        Ok(params)
    }

    /// `match` is a soft keyword: only a statement if the line parses as
    /// `match <subject>:` followed by an indented block of `case`s.
    fn try_match(&mut self) -> PResult<Option<Stmt>> {
        let first = self.i;
        self.i += 1;
        let subject = match self.star_expressions() {
            Ok(e) if self.at_op(":") && self.peek_is(1, Tok::Newline) && self.peek_is(2, Tok::Indent) => e,
            _ => {
                self.i = first;
                return Ok(None);
            }
        };
        self.i += 3;
        let mut cases = Vec::new();
        while self.at_kw("case") {
            let cfirst = self.i;
            self.i += 1;
            let mut exprs = Vec::new();
            // Patterns are skipped; only a guard carries expressions.
            let mut depth = 0i32;
            loop {
                if self.at(Tok::Eof) || self.at(Tok::Newline) {
                    return self.err("expected `:` after case pattern");
                }
                if depth == 0 && (self.at_op(":") || self.at_kw("if")) {
                    break;
                }
                if self.at_op("(") || self.at_op("[") || self.at_op("{") {
                    depth += 1;
                } else if self.at_op(")") || self.at_op("]") || self.at_op("}") {
                    depth -= 1;
                }
                self.i += 1;
            }
            if self.eat_kw("if") {
                exprs.push(self.named_test()?);
            }
            let body = self.block()?;
            cases.push(self.compound(cfirst, "match_case", exprs, body));
            while self.at(Tok::Newline) {
                self.i += 1;
            }
        }
        if cases.is_empty() {
            return self.err("expected `case`");
        }
        if !self.at(Tok::Dedent) {
            return self.err("expected `case` or end of match block");
        }
        self.i += 1;
        Ok(Some(self.compound(first, "match", vec![subject], cases)))
    }

    fn peek_is(&self, n: usize, kind: Tok) -> bool {
        self.toks.get(self.i + n).is_some_and(|t| t.kind == kind)
    }

    fn simple_line(&mut self) -> PResult<Vec<Stmt>> {
        let mut out = vec![self.simple_stmt()?];
        while self.eat_op(";") {
            if self.at(Tok::Newline) {
                break;
            }
            out.push(self.simple_stmt()?);
        }
        if !self.at(Tok::Newline) {
            return self.err("expected end of statement");
        }
        self.i += 1;
        Ok(out)
    }

    fn simple_stmt(&mut self) -> PResult<Stmt> {
        let first = self.i;
        let simple = |p: &Self, kind: &'static str, exprs: Vec<Expr>| Stmt { kind: StmtKind::Simple { kind, exprs }, span: p.span_from(first) };
        if self.at(Tok::Name) {
            match self.text() {
                "pass" | "break" | "continue" => {
                    let kind = match self.text() {
                        "pass" => "pass",
                        "break" => "break",
                        _ => "continue",
                    };
                    self.i += 1;
                    return Ok(simple(self, kind, Vec::new()));
                }
                "return" => {
                    self.i += 1;
                    let exprs = if self.at_end_of_simple() { Vec::new() } else { vec![self.star_expressions()?] };
                    return Ok(simple(self, "return", exprs));
                }
                "raise" => {
                    self.i += 1;
                    let mut exprs = Vec::new();
                    if !self.at_end_of_simple() {
                        exprs.push(self.test()?);
                        if self.eat_kw("from") {
                            exprs.push(self.test()?);
                        }
                    }
                    return Ok(simple(self, "raise", exprs));
                }
                "global" | "nonlocal" => {
                    let kind = if self.text() == "global" { "global" } else { "nonlocal" };
                    self.i += 1;
                    self.ident()?;
                    while self.eat_op(",") {
                        self.ident()?;
                    }
                    return Ok(simple(self, kind, Vec::new()));
                }
                "del" => {
                    self.i += 1;
                    let e = self.star_expressions()?;
                    return Ok(simple(self, "del", vec![e]));
                }
                "assert" => {
                    self.i += 1;
                    let mut exprs = vec![self.test()?];
                    if self.eat_op(",") {
                        exprs.push(self.test()?);
                    }
                    return Ok(simple(self, "assert", exprs));
                }
                "import" => {
                    self.i += 1;
                    let mut names = Vec::new();
                    loop {
                        let name = self.dotted_name()?;
                        let alias = if self.eat_kw("as") { self.ident()? } else { String::new() };
                        names.push((name, alias));
                        if !self.eat_op(",") {
                            break;
                        }
                    }
                    return Ok(Stmt { kind: StmtKind::Import { names }, span: self.span_from(first) });
                }
                "from" => {
                    self.i += 1;
                    let mut module = String::new();
                    while self.at_op(".") || self.at_op("...") {
                        module.push_str(self.text());
                        self.i += 1;
                    }
                    if !self.at_kw("import") {
                        module.push_str(&self.dotted_name()?);
                    }
                    self.expect_kw("import")?;
                    let mut names = Vec::new();
                    let join = |m: &str, n: &str| if m.is_empty() || m.ends_with('.') { format!("{m}{n}") } else { format!("{m}.{n}") };
                    if self.eat_op("*") {
                        names.push((join(&module, "*"), String::new()));
                    } else {
                        let paren = self.eat_op("(");
                        loop {
                            if paren && self.at_op(")") {
                                break;
                            }
                            let n = self.ident()?;
                            let alias = if self.eat_kw("as") { self.ident()? } else { String::new() };
                            names.push((join(&module, &n), alias));
                            if !self.eat_op(",") {
                                break;
                            }
                        }
                        if paren {
                            self.expect_op(")")?;
                        }
                    }
                    return Ok(Stmt { kind: StmtKind::Import { names }, span: self.span_from(first) });
                }
                _ => {}
            }
        }
        let mut exprs = vec![self.star_expressions_or_yield()?];
        let mut kind = "expr";
        if self.at_op(":") {
            self.i += 1;
            exprs.push(self.test()?);
            if self.eat_op("=") {
                exprs.push(self.star_expressions_or_yield()?);
            }
            kind = "assign";
        } else if self.at(Tok::Op) && is_augassign(self.text()) {
            self.i += 1;
            exprs.push(self.star_expressions_or_yield()?);
            kind = "assign";
        } else {
            while self.eat_op("=") {
                exprs.push(self.star_expressions_or_yield()?);
                kind = "assign";
            }
        }
        Ok(simple(self, kind, exprs))
    }

    fn at_end_of_simple(&self) -> bool {
        self.at(Tok::Newline) || self.at_op(";") || self.at(Tok::Eof)
    }

    fn dotted_name(&mut self) -> PResult<String> {
        let mut s = self.ident()?;
        while self.eat_op(".") {
            s.push('.');
            s.push_str(&self.ident()?);
        }
        Ok(s)
    }

    // ---- expressions ------------------------------------------------

    fn star_expressions_or_yield(&mut self) -> PResult<Expr> {
        if self.at_kw("yield") {
            self.yield_expr()
        } else {
            self.star_expressions()
        }
    }

    fn yield_expr(&mut self) -> PResult<Expr> {
        let first = self.i;
        self.expect_kw("yield")?;
        let mut children = Vec::new();
        if self.eat_kw("from") {
            children.push(self.test()?);
        } else if !self.at_end_of_simple() && !self.at_op(")") && !self.at_op("=") {
            children.push(self.star_expressions()?);
        }
        Ok(self.expr_at(first, ExprKind::Other(children)))
    }

    /// Comma-separated expressions (a tuple when more than one).
    fn star_expressions(&mut self) -> PResult<Expr> {
        let first = self.i;
        let e = self.star_named()?;
        if !self.at_op(",") {
            return Ok(e);
        }
        let mut items = vec![e];
        while self.eat_op(",") {
            if self.at_expr_end() {
                break;
            }
            items.push(self.star_named()?);
        }
        Ok(self.expr_at(first, ExprKind::Other(items)))
    }

    fn at_expr_end(&self) -> bool {
        self.at(Tok::Newline)
            || self.at(Tok::Eof)
            || [")", "]", "}", "=", ":", ";"].iter().any(|op| self.at_op(op))
            || (self.at(Tok::Op) && is_augassign(self.text()))
            || self.at_kw("in")
    }

    fn star_named(&mut self) -> PResult<Expr> {
        if self.at_op("*") {
            let first = self.i;
            self.i += 1;
            let e = self.bitor()?;
            return Ok(self.expr_at(first, ExprKind::Other(vec![e])));
        }
        self.named_test()
    }

    fn target_list(&mut self) -> PResult<Expr> {
        let first = self.i;
        let mut items = vec![self.target_item()?];
        while self.eat_op(",") {
            if self.at_kw("in") || self.at_op("=") {
                break;
            }
            items.push(self.target_item()?);
        }
        if items.len() == 1 {
            return Ok(items.pop().unwrap());
        }
        Ok(self.expr_at(first, ExprKind::Other(items)))
    }

    fn target_item(&mut self) -> PResult<Expr> {
        if self.at_op("*") {
            let first = self.i;
            self.i += 1;
            let e = self.bitor()?;
            return Ok(self.expr_at(first, ExprKind::Other(vec![e])));
        }
        self.bitor()
    }

    fn named_test(&mut self) -> PResult<Expr> {
        if self.at(Tok::Name) && self.peek_op(1, ":=") {
            let first = self.i;
            self.i += 2;
            let v = self.test()?;
            return Ok(self.expr_at(first, ExprKind::Other(vec![v])));
        }
        self.test()
    }

    fn test(&mut self) -> PResult<Expr> {
        if self.at_kw("lambda") {
            return self.lambda();
        }
        let first = self.i;
        let e = self.or_test()?;
        if self.at_kw("if") {
            self.i += 1;
            let cond = self.or_test()?;
            self.expect_kw("else")?;
            let other = self.test()?;
            return Ok(self.expr_at(first, ExprKind::Other(vec![e, cond, other])));
        }
        Ok(e)
    }

    fn test_no_cond(&mut self) -> PResult<Expr> {
        if self.at_kw("lambda") {
            return self.lambda();
        }
        self.or_test()
    }

    fn lambda(&mut self) -> PResult<Expr> {
        let first = self.i;
        self.expect_kw("lambda")?;
        let params = self.params(":")?;
        self.expect_op(":")?;
        let body = self.test()?;
        let defaults = params.iter().filter_map(|p| p.default.clone()).collect();
        let names = params.into_iter().map(|p| p.name).collect();
        Ok(self.expr_at(first, ExprKind::Lambda { params: names, body: Box::new(body), defaults }))
    }

    fn bool_chain(&mut self, kw: &str, next: fn(&mut Self) -> PResult<Expr>) -> PResult<Expr> {
        let first = self.i;
        let e = next(self)?;
        if !self.at_kw(kw) {
            return Ok(e);
        }
        let mut operands = vec![e];
        while self.eat_kw(kw) {
            operands.push(next(self)?);
        }
        let ops = operands.len() - 1;
        Ok(self.expr_at(first, ExprKind::BoolOp { ops, operands }))
    }

    fn or_test(&mut self) -> PResult<Expr> {
        self.bool_chain("or", Self::and_test)
    }

    fn and_test(&mut self) -> PResult<Expr> {
        self.bool_chain("and", Self::not_test)
    }

    fn not_test(&mut self) -> PResult<Expr> {
        if self.at_kw("not") {
            let first = self.i;
            self.i += 1;
            let e = self.not_test()?;
            return Ok(self.expr_at(first, ExprKind::Other(vec![e])));
        }
        self.comparison()
    }

    fn comparison(&mut self) -> PResult<Expr> {
        let first = self.i;
        let e = self.bitor()?;
        let mut items = vec![e];
        loop {
            if self.at(Tok::Op) && ["<", ">", "==", ">=", "<=", "!="].contains(&self.text()) {
                self.i += 1;
            } else if self.at_kw("in") {
                self.i += 1;
            } else if self.at_kw("not") && self.toks.get(self.i + 1).is_some_and(|t| &self.src[t.start..t.end] == "in") {
                self.i += 2;
            } else if self.at_kw("is") {
                self.i += 1;
                self.eat_kw("not");
            } else {
                break;
            }
            items.push(self.bitor()?);
        }
        if items.len() == 1 {
            return Ok(items.pop().unwrap());
        }
        Ok(self.expr_at(first, ExprKind::Other(items)))
    }

    fn binary(&mut self, ops: &[&str], next: fn(&mut Self) -> PResult<Expr>) -> PResult<Expr> {
        let first = self.i;
        let e = next(self)?;
        let mut items = vec![e];
        while self.at(Tok::Op) && ops.contains(&self.text()) {
            self.i += 1;
            items.push(next(self)?);
        }
        if items.len() == 1 {
            return Ok(items.pop().unwrap());
        }
        Ok(self.expr_at(first, ExprKind::Other(items)))
    }

    fn bitor(&mut self) -> PResult<Expr> {
        self.binary(&["|"], Self::bitxor)
    }

    fn bitxor(&mut self) -> PResult<Expr> {
        self.binary(&["^"], Self::bitand)
    }

    fn bitand(&mut self) -> PResult<Expr> {
        self.binary(&["&"], Self::shift)
    }

    fn shift(&mut self) -> PResult<Expr> {
        self.binary(&["<<", ">>"], Self::arith)
    }

    fn arith(&mut self) -> PResult<Expr> {
        self.binary(&["+", "-"], Self::term)
    }

    fn term(&mut self) -> PResult<Expr> {
        self.binary(&["*", "/", "//", "%", "@"], Self::factor)
    }

    fn factor(&mut self) -> PResult<Expr> {
        if self.at_op("+") || self.at_op("-") || self.at_op("~") {
            let first = self.i;
            self.i += 1;
            let e = self.factor()?;
            return Ok(self.expr_at(first, ExprKind::Other(vec![e])));
        }
        self.power()
    }

    fn power(&mut self) -> PResult<Expr> {
        let first = self.i;
        let base = if self.at_kw("await") {
            self.i += 1;
            let e = self.primary()?;
            self.expr_at(first, ExprKind::Other(vec![e]))
        } else {
            self.primary()?
        };
        if self.eat_op("**") {
            let exp = self.factor()?;
            return Ok(self.expr_at(first, ExprKind::Other(vec![base, exp])));
        }
        Ok(base)
    }

    fn primary(&mut self) -> PResult<Expr> {
        let first = self.i;
        let mut e = self.atom()?;
        loop {
            if self.eat_op("(") {
                let args = self.call_args()?;
                self.expect_op(")")?;
                e = self.expr_at(first, ExprKind::Call { callee: Box::new(e), args });
            } else if self.eat_op("[") {
                let mut items = vec![e];
                items.extend(self.subscripts()?);
                self.expect_op("]")?;
                e = self.expr_at(first, ExprKind::Other(items));
            } else if self.at_op(".") {
                self.i += 1;
                if !self.at(Tok::Name) {
                    return self.err("expected attribute name");
                }
                self.i += 1;
                e = self.expr_at(first, ExprKind::Other(vec![e]));
            } else {
                return Ok(e);
            }
        }
    }

    fn call_args(&mut self) -> PResult<Vec<Expr>> {
        let mut args = Vec::new();
        while !self.at_op(")") {
            let first = self.i;
            if self.at_op("*") || self.at_op("**") {
                self.i += 1;
                let e = self.test()?;
                args.push(self.expr_at(first, ExprKind::Other(vec![e])));
            } else if self.at(Tok::Name) && self.peek_op(1, "=") {
                self.i += 2;
                let e = self.test()?;
                args.push(self.expr_at(first, ExprKind::Other(vec![e])));
            } else {
                let e = self.named_test()?;
                if self.at_kw("for") || self.at_kw("async") {
                    let mut parts = vec![e];
                    parts.extend(self.comp_for()?);
                    args.push(self.expr_at(first, ExprKind::Other(parts)));
                } else {
                    args.push(e);
                }
            }
            if !self.eat_op(",") {
                break;
            }
        }
        Ok(args)
    }

    fn subscripts(&mut self) -> PResult<Vec<Expr>> {
        let mut items = Vec::new();
        loop {
            if self.at_op("]") {
                break;
            }
            if self.at_op("*") {
                items.push(self.star_named()?);
            } else {
                if !self.at_op(":") {
                    items.push(self.named_test()?);
                }
                while self.eat_op(":") {
                    if !self.at_op(":") && !self.at_op(",") && !self.at_op("]") {
                        items.push(self.test()?);
                    }
                }
            }
            if !self.eat_op(",") {
                break;
            }
        }
        Ok(items)
    }

    /// One or more `for ... in ... [if ...]` clauses.
    fn comp_for(&mut self) -> PResult<Vec<Expr>> {
        let mut parts = Vec::new();
        while self.at_kw("for") || self.at_kw("async") {
            self.eat_kw("async");
            self.expect_kw("for")?;
            parts.push(self.target_list()?);
            self.expect_kw("in")?;
            parts.push(self.or_test()?);
            while self.eat_kw("if") {
                parts.push(self.test_no_cond()?);
            }
        }
        Ok(parts)
    }

    fn atom(&mut self) -> PResult<Expr> {
        let first = self.i;
        match self.tok().kind {
            Tok::Name => {
                let t = self.text();
                if KEYWORDS.contains(&t) && !matches!(t, "None" | "True" | "False") {
                    return self.err("expected an expression");
                }
                self.i += 1;
                Ok(self.expr_at(first, ExprKind::Other(Vec::new())))
            }
            Tok::Number => {
                self.i += 1;
                Ok(self.expr_at(first, ExprKind::Other(Vec::new())))
            }
            Tok::Str => {
                while self.at(Tok::Str) {
                    self.i += 1;
                }
                Ok(self.expr_at(first, ExprKind::Other(Vec::new())))
            }
            Tok::Op => match self.text() {
                "..." => {
                    self.i += 1;
                    Ok(self.expr_at(first, ExprKind::Other(Vec::new())))
                }
                "(" => {
                    self.i += 1;
                    let mut items = Vec::new();
                    if self.at_kw("yield") {
                        items.push(self.yield_expr()?);
                    } else if !self.at_op(")") {
                        items.push(self.star_named()?);
                        if self.at_kw("for") || self.at_kw("async") {
                            items.extend(self.comp_for()?);
                        } else {
                            while self.eat_op(",") {
                                if self.at_op(")") {
                                    break;
                                }
                                items.push(self.star_named()?);
                            }
                        }
                    }
                    self.expect_op(")")?;
                    Ok(self.expr_at(first, ExprKind::Other(items)))
                }
                "[" => {
                    self.i += 1;
                    let mut items = Vec::new();
                    if !self.at_op("]") {
                        items.push(self.star_named()?);
                        if self.at_kw("for") || self.at_kw("async") {
                            items.extend(self.comp_for()?);
                        } else {
                            while self.eat_op(",") {
                                if self.at_op("]") {
                                    break;
                                }
                                items.push(self.star_named()?);
                            }
                        }
                    }
                    self.expect_op("]")?;
                    Ok(self.expr_at(first, ExprKind::Other(items)))
                }
                "{" => {
                    self.i += 1;
                    let items = self.dict_or_set()?;
                    self.expect_op("}")?;
                    Ok(self.expr_at(first, ExprKind::Other(items)))
                }
                _ => self.err("expected an expression"),
            },
            _ => self.err("expected an expression"),
        }
    }

    fn dict_or_set(&mut self) -> PResult<Vec<Expr>> {
        let mut items = Vec::new();
        let mut first_item = true;
        while !self.at_op("}") {
            if self.eat_op("**") {
                items.push(self.bitor()?);
            } else {
                items.push(self.star_named()?);
                if self.eat_op(":") {
                    items.push(self.test()?);
                }
            }
            if first_item && (self.at_kw("for") || self.at_kw("async")) {
                items.extend(self.comp_for()?);
                break;
            }
            first_item = false;
            if !self.eat_op(",") {
                break;
            }
        }
        Ok(items)
    }
}

fn is_augassign(op: &str) -> bool {
    matches!(op, "+=" | "-=" | "*=" | "/=" | "//=" | "%=" | "**=" | ">>=" | "<<=" | "&=" | "|=" | "^=" | "@=")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(stmts: &[Stmt], out: &mut Vec<String>) {
        for s in stmts {
            match &s.kind {
                StmtKind::Def { name, body, .. } => {
                    out.push(format!("def {name}"));
                    kinds(body, out);
                }
                StmtKind::Class { name, body, .. } => {
                    out.push(format!("class {name}"));
                    kinds(body, out);
                }
                StmtKind::Import { names } => out.push(format!("import {}", names.len())),
                StmtKind::Simple { kind, .. } => out.push(kind.to_string()),
                StmtKind::Compound { kind, body, .. } => {
                    out.push(kind.to_string());
                    kinds(body, out);
                }
            }
        }
    }

    fn parse_kinds(src: &str) -> Vec<String> {
        let m = parse_module(src).unwrap_or_else(|e| panic!("{e:?}"));
        let mut out = Vec::new();
        kinds(&m.body, &mut out);
        out
    }

    #[test]
    fn compound_statements() {
        let src = "\
def f(a, b=1, *args, c, **kw):
    if a:
        pass
    elif b:
        return 1
    else:
        x = 2
    for i in range(3):
        continue
    while True:
        break
    try:
        g()
    except ValueError as e:
        raise
    except:
        pass
    finally:
        del x
";
        assert_eq!(
            parse_kinds(src),
            vec![
                "def f", "if", "pass", "if", "return", "assign", "for", "continue", "while", "break", "try", "expr", "except",
                "raise", "except", "pass", "del"
            ]
        );
    }

    #[test]
    fn classes_decorators_imports_match() {
        let src = "\
import os, sys as system
from .pkg import (a, b as c)
@dataclass
class A(Base, metaclass=M):
    '''doc'''
    x: int = 0
    @staticmethod
    def m(): ...
match cmd:
    case [x, *rest] if x > 0:
        pass
    case _:
        pass
match = 3
";
        assert_eq!(
            parse_kinds(src),
            vec![
                "import 2", "import 2", "class A", "expr", "assign", "def m", "expr", "match", "match_case", "pass", "match_case",
                "pass", "assign"
            ]
        );
        let m = parse_module(src).unwrap();
        assert_eq!(m.docstrings.len(), 1);
    }

    #[test]
    fn expressions() {
        let src = "y = [f(x) for x in xs if x and not g(x) or h]\nz = lambda a, b=2: a + b\nw = {k: v for k, v in d.items()}\nv = a[1:2, ::3]\nprint(*a, **k, sep='')\n";
        assert_eq!(parse_kinds(src), vec!["assign", "assign", "assign", "assign", "expr"]);
    }

    #[test]
    fn syntax_errors() {
        assert!(parse_module("def f(:\n    pass\n").is_err());
        assert!(parse_module("if x\n    pass\n").is_err());
        assert!(parse_module("x = = 1\n").is_err());
        assert!(parse_module("class:\n  pass\n").is_err());
    }
}
