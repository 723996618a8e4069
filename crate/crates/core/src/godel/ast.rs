//! Untyped syntax tree.

use super::lexer::Pos;
pub use crate::datalog::ArithOp;

#[derive(Debug, Clone, Default)]
pub struct Module {
    pub uses: Vec<UsePath>,
    pub schemas: Vec<SchemaDecl>,
    pub impls: Vec<ImplBlock>,
    pub functions: Vec<FnDecl>,
}

impl Module {
    pub fn main(&self) -> Option<&FnDecl> {
        self.functions.iter().find(|f| f.name == "main")
    }
}

#[derive(Debug, Clone)]
pub struct UsePath {
    pub segments: Vec<String>,
    pub glob: bool,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TypeName {
    Named(String),
    /// `*Schema`: a set of schema values.
    Set(String),
    /// Functions without `->`, such as `main`.
    Unit,
}

#[derive(Debug, Clone)]
pub struct Field {
    pub name: String,
    pub ty: TypeName,
    pub pos: Pos,
}

#[derive(Debug, Clone)]
pub struct SchemaDecl {
    pub name: String,
    pub extends: Option<String>,
    pub fields: Vec<Field>,
    pub pos: Pos,
}

#[derive(Debug, Clone)]
pub struct ImplBlock {
    pub target: String,
    pub methods: Vec<FnDecl>,
    pub pos: Pos,
}

#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    /// `None` for the `self` receiver.
    pub ty: Option<TypeName>,
    pub pos: Pos,
}

#[derive(Debug, Clone)]
pub struct FnDecl {
    pub name: String,
    pub params: Vec<Param>,
    pub ret: TypeName,
    pub body: Vec<Stmt>,
    pub data_constraint: bool,
    pub public: bool,
    pub pos: Pos,
}

impl FnDecl {
    pub fn has_self(&self) -> bool {
        self.params.first().is_some_and(|p| p.ty.is_none())
    }
}

#[derive(Debug, Clone)]
pub struct Binding {
    pub name: String,
    pub expr: Expr,
    pub pos: Pos,
}

#[derive(Debug, Clone)]
pub struct Stmt {
    pub kind: StmtKind,
    pub pos: Pos,
}

#[derive(Debug, Clone)]
pub enum StmtKind {
    For(Vec<Binding>, Vec<Stmt>),
    If(Vec<Cond>, Vec<Stmt>),
    Let(Vec<Binding>, Vec<Stmt>),
    Yield { schema: String, fields: Vec<(String, Expr)> },
    Return(Expr),
    Expr(Expr),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Cond {
    pub kind: CondKind,
    pub pos: Pos,
}

#[derive(Debug, Clone)]
pub enum CondKind {
    Cmp(CmpOp, Expr, Expr),
    /// A bool-valued call, possibly negated.
    Test { negated: bool, expr: Expr },
    In { name: String, expr: Expr },
}

#[derive(Debug, Clone)]
pub struct Expr {
    pub kind: ExprKind,
    pub pos: Pos,
}

#[derive(Debug, Clone)]
pub enum ExprKind {
    Int(i64),
    Str(String),
    Bool(bool),
    Var(String),
    SelfRef,
    Call { name: String, args: Vec<Expr> },
    Method { recv: Box<Expr>, name: String, args: Vec<Expr> },
    Field { recv: Box<Expr>, name: String },
    /// `Type::name(args)`.
    Path { segments: Vec<String>, args: Vec<Expr> },
    Binary { op: ArithOp, left: Box<Expr>, right: Box<Expr> },
}
