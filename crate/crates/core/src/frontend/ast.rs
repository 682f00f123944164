//! Untyped syntax tree produced by the parser.

use std::path::PathBuf;

use super::Loc;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackageAst {
    pub name: String,
    /// Paths of the units, indexed by `Loc::unit`.
    pub units: Vec<PathBuf>,
    pub classes: Vec<ClassDecl>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ClassQuals {
    pub external: bool,
    pub group: bool,
    pub public: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassDecl {
    pub name: String,
    pub quals: ClassQuals,
    pub fields: Vec<FieldDecl>,
    pub methods: Vec<MethodDecl>,
    /// Named integer constants from `enum { ... }` blocks (class scope).
    pub enums: Vec<EnumConst>,
    pub loc: Loc,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnumConst {
    pub name: String,
    pub value: Expr,
    pub loc: Loc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MemberQuals {
    pub public: bool,
    pub private: bool,
    pub is_static: bool,
    pub external: bool,
    pub message: bool,
    pub iterator: bool,
    /// On a method: the return value is passed by deep copy.
    pub copy: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldDecl {
    pub name: String,
    pub ty: TypeExpr,
    pub quals: MemberQuals,
    pub loc: Loc,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Param {
    pub name: String,
    pub ty: TypeExpr,
    pub copy: bool,
    pub loc: Loc,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MethodDecl {
    pub name: String,
    pub quals: MemberQuals,
    pub params: Vec<Param>,
    pub ret: TypeExpr,
    pub is_ctor: bool,
    /// `None` for a bodiless declaration (only legal for intrinsic-backed methods).
    pub body: Option<Vec<Stmt>>,
    pub loc: Loc,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BaseType {
    Void,
    Int,
    Bool,
    Char,
    Host,
    Queue,
    Named(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeExpr {
    pub base: BaseType,
    pub dims: u32,
    pub loc: Loc,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stmt {
    Block(Vec<Stmt>, Loc),
    VarDecl { ty: TypeExpr, name: String, init: Option<Expr>, loc: Loc },
    If { cond: Expr, then: Box<Stmt>, otherwise: Option<Box<Stmt>>, loc: Loc },
    While { cond: Expr, body: Box<Stmt>, loc: Loc },
    For { init: Option<Box<Stmt>>, cond: Option<Expr>, step: Vec<Expr>, body: Box<Stmt>, loc: Loc },
    Return(Option<Expr>, Loc),
    Expr(Expr),
    Empty(Loc),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssignOp {
    Set,
    Add,
    Sub,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Expr {
    pub kind: ExprKind,
    pub loc: Loc,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExprKind {
    Int(i64),
    Bool(bool),
    Char(u8),
    Str(Vec<u8>),
    Null,
    This,
    ThisHost,
    Hosts,
    Name(String),
    Field(Box<Expr>, String),
    Index(Box<Expr>, Box<Expr>),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Cond(Box<Expr>, Box<Expr>, Box<Expr>),
    Assign(AssignOp, Box<Expr>, Box<Expr>),
    /// `++`/`--`, prefix or postfix.
    IncDec { target: Box<Expr>, delta: i64, prefix: bool },
    /// `f(args)` with no receiver.
    Call(String, Vec<Expr>),
    /// `recv.m(args)`
    MethodCall(Box<Expr>, String, Vec<Expr>),
    /// `new C(args)` (heap) or `create [(host)] C(args)` (partition).
    New { class: String, args: Vec<Expr>, create: bool, at: Option<Box<Expr>> },
    /// `create [(host)] queue()`
    NewQueue { at: Option<Box<Expr>> },
    /// `new|create T[n]...[]...`
    NewArray { elem: BaseType, sizes: Vec<Expr>, extra_dims: u32 },
    /// `q <=> expr`
    QueuedEval(Box<Expr>, Box<Expr>),
    /// `q #> (target, m(args))`
    Post { queue: Box<Expr>, target: Box<Expr>, method: String, args: Vec<Expr> },
    /// `group.+m(args)`
    Iterate(Box<Expr>, String, Vec<Expr>),
}

impl Stmt {
    pub fn loc(&self) -> Loc {
        match self {
            Stmt::Block(_, l) | Stmt::Return(_, l) | Stmt::Empty(l) => *l,
            Stmt::VarDecl { loc, .. } | Stmt::If { loc, .. } | Stmt::While { loc, .. } | Stmt::For { loc, .. } => *loc,
            Stmt::Expr(e) => e.loc,
        }
    }
}
