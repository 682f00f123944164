//! Typed intermediate representation stored in runpack images.

use crate::bytes::{ReadError, Reader, Writer};

/// A class reference relative to the image that contains it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ClassRef {
    Own(u32),
    Std(u32),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Ty {
    Void,
    Int,
    Bool,
    Char,
    Null,
    Host,
    Queue,
    Array(Box<Ty>),
    Class(ClassRef),
}

impl Ty {
    pub fn array_of(elem: Ty, dims: u32) -> Ty {
        (0..dims).fold(elem, |t, _| Ty::Array(Box::new(t)))
    }

    pub fn is_ref_like(&self) -> bool {
        matches!(self, Ty::Null | Ty::Host | Ty::Queue | Ty::Array(_) | Ty::Class(_))
    }

    pub fn rank(&self) -> u32 {
        match self {
            Ty::Array(e) => 1 + e.rank(),
            _ => 0,
        }
    }

    pub fn elem(&self) -> Option<&Ty> {
        match self {
            Ty::Array(e) => Some(e),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
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
    /// char[] concatenation; the right operand may be any printable scalar or char[].
    Concat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AssignOp {
    Set,
    Add,
    Sub,
    /// `+=` on char[]: appends in place.
    Append,
}

/// Closed set of intrinsic operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u16)]
pub enum Builtin {
    Print = 1,
    Sizear = 2,
    Hello = 3,
    ExecOpen = 4,
    ExecRead = 5,
    WriteStdout = 6,
    ParseInt = 7,
    HostName = 8,
    HostPrint = 9,
    HostChildren = 10,
}

impl Builtin {
    pub const ALL: [Builtin; 10] = [
        Builtin::Print,
        Builtin::Sizear,
        Builtin::Hello,
        Builtin::ExecOpen,
        Builtin::ExecRead,
        Builtin::WriteStdout,
        Builtin::ParseInt,
        Builtin::HostName,
        Builtin::HostPrint,
        Builtin::HostChildren,
    ];

    pub fn from_id(id: u16) -> Option<Builtin> {
        Builtin::ALL.iter().copied().find(|b| *b as u16 == id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Placement {
    Heap,
    /// Partition 0 of the given host, or of the local host when `None`.
    Partition(Option<Box<Expr>>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Place {
    Local(u32),
    Field { obj: Box<Expr>, class: ClassRef, field: u32 },
    Index { arr: Box<Expr>, idx: Box<Expr> },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Expr {
    pub kind: ExprKind,
    pub ty: Ty,
    pub line: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ExprKind {
    Int(i64),
    Bool(bool),
    Char(u8),
    Null,
    /// Index into the constant pool; evaluates to a fresh char[].
    Str(u32),
    Local(u32),
    This,
    ThisHost,
    Hosts,
    Field { obj: Box<Expr>, class: ClassRef, field: u32 },
    Index { arr: Box<Expr>, idx: Box<Expr> },
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Cond(Box<Expr>, Box<Expr>, Box<Expr>),
    Assign { place: Box<Place>, op: AssignOp, value: Box<Expr> },
    IncDec { place: Box<Place>, delta: i64, prefix: bool },
    /// `recv == None` calls a static method, or an instance method on `this`.
    Call { recv: Option<Box<Expr>>, class: ClassRef, method: u32, args: Vec<Expr> },
    New { class: ClassRef, ctor: Option<u32>, args: Vec<Expr>, placement: Placement },
    NewQueue { at: Option<Box<Expr>> },
    NewArray { elem: Ty, sizes: Vec<Expr>, extra_dims: u32 },
    /// `queue <=> expr`, with `expr` lifted into closure method `method` of `class`.
    QueuedEval { queue: Box<Expr>, class: ClassRef, method: u32, with_this: bool, captures: Vec<Expr> },
    Post { queue: Box<Expr>, target: Box<Expr>, class: ClassRef, method: u32, args: Vec<Expr> },
    Iterate { group: Box<Expr>, class: ClassRef, method: u32, args: Vec<Expr> },
    Builtin { func: Builtin, args: Vec<Expr> },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Stmt {
    Expr(Expr),
    Let(u32, Expr),
    If(Expr, Vec<Stmt>, Vec<Stmt>),
    While(Expr, Vec<Stmt>),
    For { init: Vec<Stmt>, cond: Option<Expr>, step: Vec<Expr>, body: Vec<Stmt> },
    Return(Option<Expr>),
    Block(Vec<Stmt>),
}

pub mod class_flags {
    pub const EXTERNAL: u8 = 1;
    pub const GROUP: u8 = 2;
}

pub mod method_flags {
    pub const PUBLIC: u16 = 1;
    pub const STATIC: u16 = 2;
    pub const EXTERNAL: u16 = 4;
    pub const MESSAGE: u16 = 8;
    pub const ITERATOR: u16 = 16;
    pub const CTOR: u16 = 32;
    pub const CLOSURE: u16 = 64;
    pub const COPY_RET: u16 = 128;
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FieldDesc {
    pub name: String,
    pub ty: Ty,
    pub external: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ParamDesc {
    pub name: String,
    pub ty: Ty,
    pub copy: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MethodBody {
    /// Index into the image's body table.
    Code(u32),
    Intrinsic(Builtin),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MethodDesc {
    pub name: String,
    pub flags: u16,
    pub params: Vec<ParamDesc>,
    pub ret: Ty,
    /// Total local slots, parameters first.
    pub locals: u32,
    pub body: MethodBody,
}

impl MethodDesc {
    pub fn has(&self, flag: u16) -> bool {
        self.flags & flag != 0
    }

    pub fn is_static(&self) -> bool {
        self.has(method_flags::STATIC)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ClassDesc {
    pub name: String,
    pub flags: u8,
    pub fields: Vec<FieldDesc>,
    pub methods: Vec<MethodDesc>,
    pub consts: Vec<(String, i64)>,
}

impl ClassDesc {
    pub fn is_external(&self) -> bool {
        self.flags & class_flags::EXTERNAL != 0
    }

    pub fn is_group(&self) -> bool {
        self.flags & class_flags::GROUP != 0
    }

    pub fn method_index(&self, name: &str) -> Option<u32> {
        self.methods.iter().position(|m| m.name == name).map(|i| i as u32)
    }

    pub fn ctor(&self) -> Option<u32> {
        self.methods.iter().position(|m| m.has(method_flags::CTOR)).map(|i| i as u32)
    }
}

// ---- binary encoding -------------------------------------------------------

pub(crate) fn write_ty(w: &mut Writer, t: &Ty) {
    match t {
        Ty::Void => {
            w.u8(0);
        }
        Ty::Int => {
            w.u8(1);
        }
        Ty::Bool => {
            w.u8(2);
        }
        Ty::Char => {
            w.u8(3);
        }
        Ty::Null => {
            w.u8(4);
        }
        Ty::Host => {
            w.u8(5);
        }
        Ty::Queue => {
            w.u8(6);
        }
        Ty::Array(e) => {
            w.u8(7);
            write_ty(w, e);
        }
        Ty::Class(c) => {
            w.u8(8);
            write_class_ref(w, *c);
        }
    }
}

pub(crate) fn read_ty(r: &mut Reader) -> Result<Ty, ReadError> {
    Ok(match r.u8()? {
        0 => Ty::Void,
        1 => Ty::Int,
        2 => Ty::Bool,
        3 => Ty::Char,
        4 => Ty::Null,
        5 => Ty::Host,
        6 => Ty::Queue,
        7 => Ty::Array(Box::new(read_ty(r)?)),
        8 => Ty::Class(read_class_ref(r)?),
        _ => return Err(ReadError::Invalid("type tag")),
    })
}

fn write_class_ref(w: &mut Writer, c: ClassRef) {
    match c {
        ClassRef::Own(i) => w.u8(0).u32(i),
        ClassRef::Std(i) => w.u8(1).u32(i),
    };
}

fn read_class_ref(r: &mut Reader) -> Result<ClassRef, ReadError> {
    match r.u8()? {
        0 => Ok(ClassRef::Own(r.u32()?)),
        1 => Ok(ClassRef::Std(r.u32()?)),
        _ => Err(ReadError::Invalid("class ref")),
    }
}

const UNOPS: [UnOp; 2] = [UnOp::Neg, UnOp::Not];
const BINOPS: [BinOp; 14] = [
    BinOp::Add,
    BinOp::Sub,
    BinOp::Mul,
    BinOp::Div,
    BinOp::Rem,
    BinOp::Eq,
    BinOp::Ne,
    BinOp::Lt,
    BinOp::Le,
    BinOp::Gt,
    BinOp::Ge,
    BinOp::And,
    BinOp::Or,
    BinOp::Concat,
];
const ASSIGNOPS: [AssignOp; 4] = [AssignOp::Set, AssignOp::Add, AssignOp::Sub, AssignOp::Append];

fn index_of<T: PartialEq>(table: &[T], v: &T) -> u8 {
    table.iter().position(|x| x == v).expect("operator in table") as u8
}

fn from_table<T: Copy>(table: &[T], i: u8) -> Result<T, ReadError> {
    table.get(i as usize).copied().ok_or(ReadError::Invalid("operator"))
}

fn write_exprs(w: &mut Writer, es: &[Expr]) {
    w.len_of(es);
    for e in es {
        write_expr(w, e);
    }
}

fn read_exprs(r: &mut Reader) -> Result<Vec<Expr>, ReadError> {
    let n = r.count(3)?;
    (0..n).map(|_| read_expr(r)).collect()
}

fn write_opt_expr(w: &mut Writer, e: &Option<Box<Expr>>) {
    match e {
        None => {
            w.u8(0);
        }
        Some(e) => {
            w.u8(1);
            write_expr(w, e);
        }
    }
}

fn read_opt_expr(r: &mut Reader) -> Result<Option<Box<Expr>>, ReadError> {
    Ok(match r.u8()? {
        0 => None,
        1 => Some(Box::new(read_expr(r)?)),
        _ => return Err(ReadError::Invalid("option")),
    })
}

fn write_place(w: &mut Writer, p: &Place) {
    match p {
        Place::Local(i) => {
            w.u8(0).u32(*i);
        }
        Place::Field { obj, class, field } => {
            w.u8(1);
            write_expr(w, obj);
            write_class_ref(w, *class);
            w.u32(*field);
        }
        Place::Index { arr, idx } => {
            w.u8(2);
            write_expr(w, arr);
            write_expr(w, idx);
        }
    }
}

fn read_place(r: &mut Reader) -> Result<Place, ReadError> {
    Ok(match r.u8()? {
        0 => Place::Local(r.u32()?),
        1 => Place::Field { obj: Box::new(read_expr(r)?), class: read_class_ref(r)?, field: r.u32()? },
        2 => Place::Index { arr: Box::new(read_expr(r)?), idx: Box::new(read_expr(r)?) },
        _ => return Err(ReadError::Invalid("place tag")),
    })
}

pub(crate) fn write_expr(w: &mut Writer, e: &Expr) {
    use ExprKind as K;
    match &e.kind {
        K::Int(v) => {
            w.u8(0).i64(*v);
        }
        K::Bool(b) => {
            w.u8(1).bool(*b);
        }
        K::Char(c) => {
            w.u8(2).u8(*c);
        }
        K::Null => {
            w.u8(3);
        }
        K::Str(i) => {
            w.u8(4).u32(*i);
        }
        K::Local(i) => {
            w.u8(5).u32(*i);
        }
        K::This => {
            w.u8(6);
        }
        K::ThisHost => {
            w.u8(7);
        }
        K::Hosts => {
            w.u8(8);
        }
        K::Field { obj, class, field } => {
            w.u8(9);
            write_expr(w, obj);
            write_class_ref(w, *class);
            w.u32(*field);
        }
        K::Index { arr, idx } => {
            w.u8(10);
            write_expr(w, arr);
            write_expr(w, idx);
        }
        K::Unary(op, a) => {
            w.u8(11).u8(index_of(&UNOPS, op));
            write_expr(w, a);
        }
        K::Binary(op, a, b) => {
            w.u8(12).u8(index_of(&BINOPS, op));
            write_expr(w, a);
            write_expr(w, b);
        }
        K::Cond(c, a, b) => {
            w.u8(13);
            write_expr(w, c);
            write_expr(w, a);
            write_expr(w, b);
        }
        K::Assign { place, op, value } => {
            w.u8(14).u8(index_of(&ASSIGNOPS, op));
            write_place(w, place);
            write_expr(w, value);
        }
        K::IncDec { place, delta, prefix } => {
            w.u8(15).i64(*delta).bool(*prefix);
            write_place(w, place);
        }
        K::Call { recv, class, method, args } => {
            w.u8(16);
            write_opt_expr(w, recv);
            write_class_ref(w, *class);
            w.u32(*method);
            write_exprs(w, args);
        }
        K::New { class, ctor, args, placement } => {
            w.u8(17);
            write_class_ref(w, *class);
            match ctor {
                None => w.u8(0),
                Some(c) => w.u8(1).u32(*c),
            };
            write_exprs(w, args);
            match placement {
                Placement::Heap => {
                    w.u8(0);
                }
                Placement::Partition(at) => {
                    w.u8(1);
                    write_opt_expr(w, at);
                }
            }
        }
        K::NewQueue { at } => {
            w.u8(18);
            write_opt_expr(w, at);
        }
        K::NewArray { elem, sizes, extra_dims } => {
            w.u8(19);
            write_ty(w, elem);
            write_exprs(w, sizes);
            w.u32(*extra_dims);
        }
        K::QueuedEval { queue, class, method, with_this, captures } => {
            w.u8(20);
            write_expr(w, queue);
            write_class_ref(w, *class);
            w.u32(*method).bool(*with_this);
            write_exprs(w, captures);
        }
        K::Post { queue, target, class, method, args } => {
            w.u8(21);
            write_expr(w, queue);
            write_expr(w, target);
            write_class_ref(w, *class);
            w.u32(*method);
            write_exprs(w, args);
        }
        K::Iterate { group, class, method, args } => {
            w.u8(22);
            write_expr(w, group);
            write_class_ref(w, *class);
            w.u32(*method);
            write_exprs(w, args);
        }
        K::Builtin { func, args } => {
            w.u8(23).u16(*func as u16);
            write_exprs(w, args);
        }
    }
    write_ty(w, &e.ty);
    w.u32(e.line);
}

pub(crate) fn read_expr(r: &mut Reader) -> Result<Expr, ReadError> {
    use ExprKind as K;
    let kind = match r.u8()? {
        0 => K::Int(r.i64()?),
        1 => K::Bool(r.bool()?),
        2 => K::Char(r.u8()?),
        3 => K::Null,
        4 => K::Str(r.u32()?),
        5 => K::Local(r.u32()?),
        6 => K::This,
        7 => K::ThisHost,
        8 => K::Hosts,
        9 => K::Field { obj: Box::new(read_expr(r)?), class: read_class_ref(r)?, field: r.u32()? },
        10 => K::Index { arr: Box::new(read_expr(r)?), idx: Box::new(read_expr(r)?) },
        11 => {
            let op = from_table(&UNOPS, r.u8()?)?;
            K::Unary(op, Box::new(read_expr(r)?))
        }
        12 => {
            let op = from_table(&BINOPS, r.u8()?)?;
            K::Binary(op, Box::new(read_expr(r)?), Box::new(read_expr(r)?))
        }
        13 => K::Cond(Box::new(read_expr(r)?), Box::new(read_expr(r)?), Box::new(read_expr(r)?)),
        14 => {
            let op = from_table(&ASSIGNOPS, r.u8()?)?;
            K::Assign { op, place: Box::new(read_place(r)?), value: Box::new(read_expr(r)?) }
        }
        15 => {
            let delta = r.i64()?;
            let prefix = r.bool()?;
            K::IncDec { delta, prefix, place: Box::new(read_place(r)?) }
        }
        16 => K::Call { recv: read_opt_expr(r)?, class: read_class_ref(r)?, method: r.u32()?, args: read_exprs(r)? },
        17 => {
            let class = read_class_ref(r)?;
            let ctor = match r.u8()? {
                0 => None,
                1 => Some(r.u32()?),
                _ => return Err(ReadError::Invalid("option")),
            };
            let args = read_exprs(r)?;
            let placement = match r.u8()? {
                0 => Placement::Heap,
                1 => Placement::Partition(read_opt_expr(r)?),
                _ => return Err(ReadError::Invalid("placement")),
            };
            K::New { class, ctor, args, placement }
        }
        18 => K::NewQueue { at: read_opt_expr(r)? },
        19 => K::NewArray { elem: read_ty(r)?, sizes: read_exprs(r)?, extra_dims: r.u32()? },
        20 => K::QueuedEval {
            queue: Box::new(read_expr(r)?),
            class: read_class_ref(r)?,
            method: r.u32()?,
            with_this: r.bool()?,
            captures: read_exprs(r)?,
        },
        21 => K::Post {
            queue: Box::new(read_expr(r)?),
            target: Box::new(read_expr(r)?),
            class: read_class_ref(r)?,
            method: r.u32()?,
            args: read_exprs(r)?,
        },
        22 => K::Iterate {
            group: Box::new(read_expr(r)?),
            class: read_class_ref(r)?,
            method: r.u32()?,
            args: read_exprs(r)?,
        },
        23 => {
            let func = Builtin::from_id(r.u16()?).ok_or(ReadError::Invalid("builtin id"))?;
            K::Builtin { func, args: read_exprs(r)? }
        }
        _ => return Err(ReadError::Invalid("expression tag")),
    };
    let ty = read_ty(r)?;
    let line = r.u32()?;
    Ok(Expr { kind, ty, line })
}

pub(crate) fn write_stmts(w: &mut Writer, ss: &[Stmt]) {
    w.len_of(ss);
    for s in ss {
        write_stmt(w, s);
    }
}

pub(crate) fn read_stmts(r: &mut Reader) -> Result<Vec<Stmt>, ReadError> {
    let n = r.count(1)?;
    (0..n).map(|_| read_stmt(r)).collect()
}

fn write_stmt(w: &mut Writer, s: &Stmt) {
    match s {
        Stmt::Expr(e) => {
            w.u8(0);
            write_expr(w, e);
        }
        Stmt::Let(slot, e) => {
            w.u8(1).u32(*slot);
            write_expr(w, e);
        }
        Stmt::If(c, a, b) => {
            w.u8(2);
            write_expr(w, c);
            write_stmts(w, a);
            write_stmts(w, b);
        }
        Stmt::While(c, body) => {
            w.u8(3);
            write_expr(w, c);
            write_stmts(w, body);
        }
        Stmt::For { init, cond, step, body } => {
            w.u8(4);
            write_stmts(w, init);
            match cond {
                None => {
                    w.u8(0);
                }
                Some(c) => {
                    w.u8(1);
                    write_expr(w, c);
                }
            }
            write_exprs(w, step);
            write_stmts(w, body);
        }
        Stmt::Return(e) => {
            w.u8(5);
            match e {
                None => {
                    w.u8(0);
                }
                Some(e) => {
                    w.u8(1);
                    write_expr(w, e);
                }
            }
        }
        Stmt::Block(b) => {
            w.u8(6);
            write_stmts(w, b);
        }
    }
}

fn read_stmt(r: &mut Reader) -> Result<Stmt, ReadError> {
    Ok(match r.u8()? {
        0 => Stmt::Expr(read_expr(r)?),
        1 => Stmt::Let(r.u32()?, read_expr(r)?),
        2 => Stmt::If(read_expr(r)?, read_stmts(r)?, read_stmts(r)?),
        3 => Stmt::While(read_expr(r)?, read_stmts(r)?),
        4 => {
            let init = read_stmts(r)?;
            let cond = match r.u8()? {
                0 => None,
                1 => Some(read_expr(r)?),
                _ => return Err(ReadError::Invalid("option")),
            };
            Stmt::For { init, cond, step: read_exprs(r)?, body: read_stmts(r)? }
        }
        5 => Stmt::Return(match r.u8()? {
            0 => None,
            1 => Some(read_expr(r)?),
            _ => return Err(ReadError::Invalid("option")),
        }),
        6 => Stmt::Block(read_stmts(r)?),
        _ => return Err(ReadError::Invalid("statement tag")),
    })
}

pub(crate) fn write_class(w: &mut Writer, c: &ClassDesc) {
    w.str(&c.name).u8(c.flags);
    w.len_of(&c.fields);
    for f in &c.fields {
        w.str(&f.name);
        write_ty(w, &f.ty);
        w.bool(f.external);
    }
    w.len_of(&c.methods);
    for m in &c.methods {
        w.str(&m.name).u16(m.flags);
        w.len_of(&m.params);
        for p in &m.params {
            w.str(&p.name);
            write_ty(w, &p.ty);
            w.bool(p.copy);
        }
        write_ty(w, &m.ret);
        w.u32(m.locals);
        match m.body {
            MethodBody::Code(i) => w.u8(0).u32(i),
            MethodBody::Intrinsic(b) => w.u8(1).u32(b as u16 as u32),
        };
    }
    w.len_of(&c.consts);
    for (n, v) in &c.consts {
        w.str(n).i64(*v);
    }
}

pub(crate) fn read_class(r: &mut Reader) -> Result<ClassDesc, ReadError> {
    let name = r.str()?;
    let flags = r.u8()?;
    let nf = r.count(6)?;
    let mut fields = Vec::with_capacity(nf);
    for _ in 0..nf {
        fields.push(FieldDesc { name: r.str()?, ty: read_ty(r)?, external: r.bool()? });
    }
    let nm = r.count(12)?;
    let mut methods = Vec::with_capacity(nm);
    for _ in 0..nm {
        let name = r.str()?;
        let flags = r.u16()?;
        let np = r.count(6)?;
        let mut params = Vec::with_capacity(np);
        for _ in 0..np {
            params.push(ParamDesc { name: r.str()?, ty: read_ty(r)?, copy: r.bool()? });
        }
        let ret = read_ty(r)?;
        let locals = r.u32()?;
        let body = match r.u8()? {
            0 => MethodBody::Code(r.u32()?),
            1 => {
                let id = r.u32()?;
                let b = u16::try_from(id).ok().and_then(Builtin::from_id).ok_or(ReadError::Invalid("intrinsic id"))?;
                MethodBody::Intrinsic(b)
            }
            _ => return Err(ReadError::Invalid("method body tag")),
        };
        methods.push(MethodDesc { name, flags, params, ret, locals, body });
    }
    let nc = r.count(12)?;
    let mut consts = Vec::with_capacity(nc);
    for _ in 0..nc {
        consts.push((r.str()?, r.i64()?));
    }
    Ok(ClassDesc { name, flags, fields, methods, consts })
}
