use super::ast::*;
use super::lexer::{tokenize, Pos, Tok, Token};
use super::Diagnostic;

struct Parser {
    toks: Vec<Token>,
    i: usize,
}

type PResult<T> = Result<T, Diagnostic>;

const KEYWORDS: [&str; 13] = ["use", "schema", "extends", "impl", "fn", "pub", "for", "in", "if", "let", "yield", "return", "self"];

/// Parses a module. On syntax errors, parsing resumes at the next
/// top-level declaration so several errors can be reported at once.
pub fn parse(src: &str) -> Result<Module, Vec<Diagnostic>> {
    let toks = tokenize(src).map_err(|e| vec![Diagnostic::new(e.pos, e.message)])?;
    let mut p = Parser { toks, i: 0 };
    let mut module = Module::default();
    let mut errors = Vec::new();
    while !p.at_eof() {
        let start = p.i;
        if let Err(e) = p.decl(&mut module) {
            errors.push(e);
            p.recover(start);
        }
    }
    if errors.is_empty() {
        Ok(module)
    } else {
        Err(errors)
    }
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.i].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        &self.toks[(self.i + n).min(self.toks.len() - 1)].tok
    }

    fn pos(&self) -> Pos {
        self.toks[self.i].pos
    }

    fn at_eof(&self) -> bool {
        matches!(self.peek(), Tok::Eof)
    }

    fn at_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(t) if *t == s)
    }

    fn at_kw(&self, k: &str) -> bool {
        matches!(self.peek(), Tok::Ident(t) if t == k)
    }

    fn bump(&mut self) {
        if !self.at_eof() {
            self.i += 1;
        }
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        let ok = self.at_sym(s);
        if ok {
            self.bump();
        }
        ok
    }

    fn eat_kw(&mut self, k: &str) -> bool {
        let ok = self.at_kw(k);
        if ok {
            self.bump();
        }
        ok
    }

    fn err<T>(&self, expected: &str) -> PResult<T> {
        Err(Diagnostic::new(self.pos(), format!("expected {expected}, found {}", self.peek())))
    }

    fn expect_sym(&mut self, s: &str) -> PResult<()> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            self.err(&format!("`{s}`"))
        }
    }

    fn expect_kw(&mut self, k: &str) -> PResult<()> {
        if self.eat_kw(k) {
            Ok(())
        } else {
            self.err(&format!("`{k}`"))
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                self.bump();
                Ok(s)
            }
            _ => self.err("an identifier"),
        }
    }

    fn recover(&mut self, start: usize) {
        let mut depth = 0i64;
        for t in &self.toks[start..self.i] {
            match t.tok {
                Tok::Sym("{") => depth += 1,
                Tok::Sym("}") => depth -= 1,
                _ => {}
            }
        }
        if self.i == start {
            self.bump();
        }
        while !self.at_eof() {
            if depth <= 0 && ["fn", "schema", "impl", "use"].iter().any(|k| self.at_kw(k)) || depth <= 0 && self.at_sym("@") {
                return;
            }
            match self.peek() {
                Tok::Sym("{") => depth += 1,
                Tok::Sym("}") => depth -= 1,
                _ => {}
            }
            self.bump();
        }
    }

    fn decl(&mut self, m: &mut Module) -> PResult<()> {
        if self.at_kw("use") {
            m.uses.push(self.use_path()?);
        } else if self.at_kw("schema") {
            m.schemas.push(self.schema()?);
        } else if self.at_kw("impl") {
            m.impls.push(self.impl_block()?);
        } else if self.at_kw("fn") || self.at_kw("pub") || self.at_sym("@") {
            m.functions.push(self.function()?);
        } else {
            return self.err("`use`, `schema`, `impl` or `fn`");
        }
        Ok(())
    }

    fn use_path(&mut self) -> PResult<UsePath> {
        let pos = self.pos();
        self.expect_kw("use")?;
        let mut segments = vec![self.ident()?];
        let mut glob = false;
        while self.eat_sym("::") {
            if self.eat_sym("*") {
                glob = true;
                break;
            }
            segments.push(self.ident()?);
        }
        Ok(UsePath { segments, glob, pos })
    }

    fn type_name(&mut self) -> PResult<TypeName> {
        if self.eat_sym("*") {
            return Ok(TypeName::Set(self.ident()?));
        }
        Ok(TypeName::Named(self.ident()?))
    }

    fn schema(&mut self) -> PResult<SchemaDecl> {
        let pos = self.pos();
        self.expect_kw("schema")?;
        let name = self.ident()?;
        let extends = if self.eat_kw("extends") { Some(self.ident()?) } else { None };
        self.expect_sym("{")?;
        let mut fields = Vec::new();
        while !self.at_sym("}") {
            let pos = self.pos();
            let name = self.ident()?;
            self.expect_sym(":")?;
            let ty = self.type_name()?;
            fields.push(Field { name, ty, pos });
            if !self.eat_sym(",") {
                break;
            }
        }
        self.expect_sym("}")?;
        Ok(SchemaDecl { name, extends, fields, pos })
    }

    fn impl_block(&mut self) -> PResult<ImplBlock> {
        let pos = self.pos();
        self.expect_kw("impl")?;
        let target = self.ident()?;
        self.expect_sym("{")?;
        let mut methods = Vec::new();
        while !self.at_sym("}") {
            methods.push(self.function()?);
        }
        self.expect_sym("}")?;
        Ok(ImplBlock { target, methods, pos })
    }

    fn function(&mut self) -> PResult<FnDecl> {
        let mut data_constraint = false;
        while self.eat_sym("@") {
            let pos = self.pos();
            let name = self.ident()?;
            if name != "data_constraint" {
                return Err(Diagnostic::new(pos, format!("unknown annotation `@{name}`")));
            }
            data_constraint = true;
        }
        let public = self.eat_kw("pub");
        let pos = self.pos();
        self.expect_kw("fn")?;
        let name = self.ident()?;
        self.expect_sym("(")?;
        let mut params = Vec::new();
        while !self.at_sym(")") {
            let pos = self.pos();
            if params.is_empty() && self.eat_kw("self") {
                params.push(Param { name: "self".into(), ty: None, pos });
            } else {
                let name = self.ident()?;
                self.expect_sym(":")?;
                let ty = self.type_name()?;
                params.push(Param { name, ty: Some(ty), pos });
            }
            if !self.eat_sym(",") {
                break;
            }
        }
        self.expect_sym(")")?;
        let ret = if self.eat_sym("->") { self.type_name()? } else { TypeName::Unit };
        let body = self.block()?;
        Ok(FnDecl { name, params, ret, body, data_constraint, public, pos })
    }

    fn block(&mut self) -> PResult<Vec<Stmt>> {
        self.expect_sym("{")?;
        let mut body = Vec::new();
        while !self.at_sym("}") {
            if self.at_eof() {
                return self.err("`}`");
            }
            body.extend(self.stmt()?);
        }
        self.expect_sym("}")?;
        Ok(body)
    }

    fn bindings(&mut self, sep: &str) -> PResult<Vec<Binding>> {
        self.expect_sym("(")?;
        let mut out = Vec::new();
        loop {
            let pos = self.pos();
            let name = self.ident()?;
            if sep == "in" {
                self.expect_kw("in")?;
            } else {
                self.expect_sym(sep)?;
            }
            let expr = self.expr()?;
            out.push(Binding { name, expr, pos });
            if !self.eat_sym(",") {
                break;
            }
        }
        self.expect_sym(")")?;
        Ok(out)
    }

    /// One statement; an `if` over a disjunction becomes one `if` per
    /// alternative, all sharing the body.
    fn stmt(&mut self) -> PResult<Vec<Stmt>> {
        let pos = self.pos();
        let kind = if self.eat_kw("for") {
            let b = self.bindings("in")?;
            StmtKind::For(b, self.block()?)
        } else if self.eat_kw("let") {
            let b = self.bindings("=")?;
            StmtKind::Let(b, self.block()?)
        } else if self.eat_kw("if") {
            self.expect_sym("(")?;
            let alternatives = self.disjunction()?;
            self.expect_sym(")")?;
            let body = self.block()?;
            self.eat_sym(";");
            return Ok(alternatives.into_iter().map(|conds| Stmt { kind: StmtKind::If(conds, body.clone()), pos }).collect());
        } else if self.eat_kw("yield") {
            let schema = self.ident()?;
            self.expect_sym("{")?;
            let mut fields = Vec::new();
            while !self.at_sym("}") {
                let name = self.ident()?;
                self.expect_sym(":")?;
                fields.push((name, self.expr()?));
                if !self.eat_sym(",") {
                    break;
                }
            }
            self.expect_sym("}")?;
            StmtKind::Yield { schema, fields }
        } else if self.eat_kw("return") {
            StmtKind::Return(self.expr()?)
        } else {
            let e = self.expr()?;
            if !matches!(e.kind, ExprKind::Call { .. } | ExprKind::Method { .. } | ExprKind::Path { .. }) {
                return Err(Diagnostic::new(pos, "expected a statement".to_string()));
            }
            StmtKind::Expr(e)
        };
        self.eat_sym(";");
        Ok(vec![Stmt { kind, pos }])
    }

    /// Conditions in disjunctive normal form.
    fn disjunction(&mut self) -> PResult<Vec<Vec<Cond>>> {
        let mut out = self.conjunction()?;
        while self.eat_sym("||") {
            out.extend(self.conjunction()?);
        }
        Ok(out)
    }

    fn conjunction(&mut self) -> PResult<Vec<Vec<Cond>>> {
        const MAX_ALTERNATIVES: usize = 64;
        let mut acc: Vec<Vec<Cond>> = vec![Vec::new()];
        loop {
            let pos = self.pos();
            let term = self.cond_term()?;
            if acc.len() * term.len() > MAX_ALTERNATIVES {
                return Err(Diagnostic::new(pos, format!("condition expands to more than {MAX_ALTERNATIVES} alternatives")));
            }
            acc = acc
                .iter()
                .flat_map(|a| term.iter().map(move |t| a.iter().chain(t).cloned().collect()))
                .collect();
            if !self.eat_sym("&&") {
                return Ok(acc);
            }
        }
    }

    /// A condition, or a parenthesised group of them.
    fn cond_term(&mut self) -> PResult<Vec<Vec<Cond>>> {
        if self.at_sym("(") {
            let save = self.i;
            self.bump();
            if let Ok(d) = self.disjunction() {
                if self.eat_sym(")") && (self.at_sym("&&") || self.at_sym("||") || self.at_sym(")")) {
                    return Ok(d);
                }
            }
            self.i = save;
        }
        Ok(vec![vec![self.cond()?]])
    }

    fn cond(&mut self) -> PResult<Cond> {
        let pos = self.pos();
        if self.eat_sym("!") {
            let expr = self.postfix()?;
            return Ok(Cond { kind: CondKind::Test { negated: true, expr }, pos });
        }
        if let (Tok::Ident(name), Tok::Ident(kw)) = (self.peek().clone(), self.peek_at(1)) {
            if kw == "in" && !KEYWORDS.contains(&name.as_str()) {
                self.bump();
                self.bump();
                let expr = self.expr()?;
                return Ok(Cond { kind: CondKind::In { name, expr }, pos });
            }
        }
        let left = self.expr()?;
        let op = match self.peek() {
            Tok::Sym("=") => Some(CmpOp::Eq),
            Tok::Sym("!=") => Some(CmpOp::Ne),
            Tok::Sym("<") => Some(CmpOp::Lt),
            Tok::Sym("<=") => Some(CmpOp::Le),
            Tok::Sym(">") => Some(CmpOp::Gt),
            Tok::Sym(">=") => Some(CmpOp::Ge),
            Tok::Sym("==") => {
                return Err(Diagnostic::new(self.pos(), "expected a comparison operator, found `==` (equality is `=`)".into()))
            }
            _ => None,
        };
        match op {
            Some(op) => {
                self.bump();
                let right = self.expr()?;
                Ok(Cond { kind: CondKind::Cmp(op, left, right), pos })
            }
            None => Ok(Cond { kind: CondKind::Test { negated: false, expr: left }, pos }),
        }
    }

    fn expr(&mut self) -> PResult<Expr> {
        let mut left = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Sym("+") => ArithOp::Add,
                Tok::Sym("-") => ArithOp::Sub,
                _ => return Ok(left),
            };
            let pos = self.pos();
            self.bump();
            let right = self.term()?;
            left = Expr { kind: ExprKind::Binary { op, left: Box::new(left), right: Box::new(right) }, pos };
        }
    }

    fn term(&mut self) -> PResult<Expr> {
        let mut left = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Sym("*") => ArithOp::Mul,
                Tok::Sym("/") => ArithOp::Div,
                _ => return Ok(left),
            };
            let pos = self.pos();
            self.bump();
            let right = self.unary()?;
            left = Expr { kind: ExprKind::Binary { op, left: Box::new(left), right: Box::new(right) }, pos };
        }
    }

    fn unary(&mut self) -> PResult<Expr> {
        let pos = self.pos();
        if self.eat_sym("-") {
            let inner = self.unary()?;
            if let ExprKind::Int(v) = inner.kind {
                return Ok(Expr { kind: ExprKind::Int(-v), pos });
            }
            let zero = Expr { kind: ExprKind::Int(0), pos };
            return Ok(Expr { kind: ExprKind::Binary { op: ArithOp::Sub, left: Box::new(zero), right: Box::new(inner) }, pos });
        }
        self.postfix()
    }

    fn args(&mut self) -> PResult<Vec<Expr>> {
        self.expect_sym("(")?;
        let mut args = Vec::new();
        while !self.at_sym(")") {
            args.push(self.expr()?);
            if !self.eat_sym(",") {
                break;
            }
        }
        self.expect_sym(")")?;
        Ok(args)
    }

    fn postfix(&mut self) -> PResult<Expr> {
        let mut e = self.primary()?;
        while self.at_sym(".") {
            self.bump();
            let pos = self.pos();
            let name = self.ident()?;
            e = if self.at_sym("(") {
                let args = self.args()?;
                Expr { kind: ExprKind::Method { recv: Box::new(e), name, args }, pos }
            } else {
                Expr { kind: ExprKind::Field { recv: Box::new(e), name }, pos }
            };
        }
        Ok(e)
    }

    fn primary(&mut self) -> PResult<Expr> {
        let pos = self.pos();
        let kind = match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                ExprKind::Int(v)
            }
            Tok::Str(s) => {
                self.bump();
                ExprKind::Str(s)
            }
            Tok::Sym("(") => {
                self.bump();
                let e = self.expr()?;
                self.expect_sym(")")?;
                return Ok(e);
            }
            Tok::Ident(s) if s == "true" || s == "false" => {
                self.bump();
                ExprKind::Bool(s == "true")
            }
            Tok::Ident(s) if s == "self" => {
                self.bump();
                ExprKind::SelfRef
            }
            Tok::Ident(_) => {
                let name = self.ident()?;
                if self.at_sym("::") {
                    let mut segments = vec![name];
                    while self.eat_sym("::") {
                        segments.push(self.ident()?);
                    }
                    let args = self.args()?;
                    ExprKind::Path { segments, args }
                } else if self.at_sym("(") {
                    ExprKind::Call { name, args: self.args()? }
                } else {
                    ExprKind::Var(name)
                }
            }
            _ => return self.err("an expression"),
        };
        Ok(Expr { kind, pos })
    }
}
