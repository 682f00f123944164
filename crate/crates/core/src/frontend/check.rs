//! Name resolution, type checking, and qualifier rules. Produces typed IR.

use std::collections::HashMap;

use super::ast::{self, BaseType, ExprKind as AK, TypeExpr};
use super::{Diagnostic, DiagCode, FrontendError, Loc, Severity};
use crate::runpack::ir::{
    class_flags, method_flags, AssignOp, BinOp, Builtin, ClassDesc, ClassRef, Expr, ExprKind, FieldDesc, MethodBody,
    MethodDesc, ParamDesc, Place, Placement, Stmt, Ty, UnOp,
};

/// A fully checked package: typed IR ready to be assembled into a runpack.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckedPackage {
    pub name: String,
    pub classes: Vec<ClassDesc>,
    pub constants: Vec<Vec<u8>>,
    pub bodies: Vec<Vec<Stmt>>,
    pub warnings: Vec<Diagnostic>,
}

/// Checks a user package against the built-in standard package.
pub fn check(ast: &ast::PackageAst) -> Result<CheckedPackage, FrontendError> {
    check_with_std(ast, Some(crate::stdlib::standard_classes()))
}

/// `std == None` checks the standard package itself.
pub(crate) fn check_with_std(ast: &ast::PackageAst, std: Option<&[ClassDesc]>) -> Result<CheckedPackage, FrontendError> {
    let mut c = Checker {
        ast,
        std,
        classes: Vec::new(),
        class_index: HashMap::new(),
        constants: Vec::new(),
        const_index: HashMap::new(),
        bodies: Vec::new(),
        diags: Vec::new(),
        fns: Vec::new(),
    };
    c.declare();
    if c.has_errors() {
        return Err(c.into_error());
    }
    c.bodies_pass();
    if c.has_errors() {
        return Err(c.into_error());
    }
    let warnings = std::mem::take(&mut c.diags);
    Ok(CheckedPackage { name: ast.name.clone(), classes: c.classes, constants: c.constants, bodies: c.bodies, warnings })
}

struct Local {
    name: String,
    slot: u32,
    ty: Ty,
}

struct FnCtx {
    class: u32,
    is_static: bool,
    ret: Ty,
    scopes: Vec<Vec<Local>>,
    next_slot: u32,
    /// Present when checking a lifted `<=>` expression.
    closure: Option<ClosureCtx>,
}

#[derive(Default)]
struct ClosureCtx {
    /// Expressions, valid in the enclosing function, that feed each capture slot.
    captures: Vec<Expr>,
    outer_slots: Vec<u32>,
    uses_this: bool,
}

struct Checker<'a> {
    ast: &'a ast::PackageAst,
    std: Option<&'a [ClassDesc]>,
    classes: Vec<ClassDesc>,
    class_index: HashMap<String, u32>,
    constants: Vec<Vec<u8>>,
    const_index: HashMap<Vec<u8>, u32>,
    bodies: Vec<Vec<Stmt>>,
    diags: Vec<Diagnostic>,
    fns: Vec<FnCtx>,
}

/// Marker for an already-reported error.
struct Reported;
type CResult<T> = Result<T, Reported>;

fn ty_name(t: &Ty, c: &Checker) -> String {
    match t {
        Ty::Void => "void".into(),
        Ty::Int => "int".into(),
        Ty::Bool => "bool".into(),
        Ty::Char => "char".into(),
        Ty::Null => "null".into(),
        Ty::Host => "host".into(),
        Ty::Queue => "queue".into(),
        Ty::Array(e) => format!("{}[]", ty_name(e, c)),
        Ty::Class(r) => c.class_desc(*r).name.clone(),
    }
}

fn is_intlike(t: &Ty) -> bool {
    matches!(t, Ty::Int | Ty::Char)
}

fn is_condition(t: &Ty) -> bool {
    matches!(t, Ty::Bool | Ty::Int | Ty::Char)
}

fn is_char_array(t: &Ty) -> bool {
    matches!(t, Ty::Array(e) if **e == Ty::Char)
}

fn assignable(from: &Ty, to: &Ty) -> bool {
    from == to || (*from == Ty::Null && to.is_ref_like()) || (*from == Ty::Char && *to == Ty::Int)
}

fn builtin_by_name(name: &str) -> Option<Builtin> {
    Some(match name {
        "print" => Builtin::Print,
        "sizear" | "sizearg" => Builtin::Sizear,
        "hello" => Builtin::Hello,
        "exec_open" => Builtin::ExecOpen,
        "exec_read" => Builtin::ExecRead,
        "write_stdout" => Builtin::WriteStdout,
        "parse_int" => Builtin::ParseInt,
        _ => return None,
    })
}

impl<'a> Checker<'a> {
    fn has_errors(&self) -> bool {
        self.diags.iter().any(|d| d.severity == Severity::Error)
    }

    fn into_error(self) -> FrontendError {
        FrontendError { diagnostics: self.diags }
    }

    fn report(&mut self, loc: Loc, code: DiagCode, msg: impl Into<String>) -> Reported {
        self.diags.push(super::diag(&self.ast.units, loc, Severity::Error, code, msg));
        Reported
    }

    fn warn(&mut self, loc: Loc, code: DiagCode, msg: impl Into<String>) {
        self.diags.push(super::diag(&self.ast.units, loc, Severity::Warning, code, msg));
    }

    fn class_desc(&self, r: ClassRef) -> &ClassDesc {
        match r {
            ClassRef::Own(i) => &self.classes[i as usize],
            ClassRef::Std(i) => &self.std.expect("std class ref without std package")[i as usize],
        }
    }

    fn lookup_class(&self, name: &str) -> Option<ClassRef> {
        if let Some(i) = self.class_index.get(name) {
            return Some(ClassRef::Own(*i));
        }
        self.std?.iter().position(|c| c.name == name).map(|i| ClassRef::Std(i as u32))
    }

    fn host_group_ty(&self) -> Ty {
        self.lookup_class("host_group").map(Ty::Class).unwrap_or(Ty::Null)
    }

    fn resolve_type(&mut self, t: &TypeExpr) -> CResult<Ty> {
        let base = match &t.base {
            BaseType::Void => Ty::Void,
            BaseType::Int => Ty::Int,
            BaseType::Bool => Ty::Bool,
            BaseType::Char => Ty::Char,
            BaseType::Host => Ty::Host,
            BaseType::Queue => Ty::Queue,
            BaseType::Named(n) => match self.lookup_class(n) {
                Some(r) => Ty::Class(r),
                None => return Err(self.report(t.loc, DiagCode::UnknownName, format!("unknown type '{n}'"))),
            },
        };
        if base == Ty::Void && t.dims > 0 {
            return Err(self.report(t.loc, DiagCode::TypeError, "array of void"));
        }
        Ok(Ty::array_of(base, t.dims))
    }

    fn intern(&mut self, s: &[u8]) -> u32 {
        if let Some(i) = self.const_index.get(s) {
            return *i;
        }
        let i = self.constants.len() as u32;
        self.constants.push(s.to_vec());
        self.const_index.insert(s.to_vec(), i);
        i
    }

    // ---- pass 1: declarations --------------------------------------------

    fn declare(&mut self) {
        for (i, cls) in self.ast.classes.iter().enumerate() {
            if self.class_index.contains_key(&cls.name) {
                self.report(cls.loc, DiagCode::TypeError, format!("duplicate class '{}'", cls.name));
                continue;
            }
            if self.std.is_some_and(|s| s.iter().any(|c| c.name == cls.name)) {
                self.report(cls.loc, DiagCode::QualifierError, format!("'{}' is a built-in class and cannot be redefined", cls.name));
                continue;
            }
            self.class_index.insert(cls.name.clone(), i as u32);
            let mut flags = 0;
            if cls.quals.external {
                flags |= class_flags::EXTERNAL;
            }
            if cls.quals.group {
                flags |= class_flags::GROUP;
            }
            self.classes.push(ClassDesc { name: cls.name.clone(), flags, fields: vec![], methods: vec![], consts: vec![] });
        }
        if self.has_errors() {
            return;
        }
        let mut mains = Vec::new();
        for (ci, cls) in self.ast.classes.iter().enumerate() {
            let consts = self.eval_enums(cls);
            self.classes[ci].consts = consts;
            for f in &cls.fields {
                if self.classes[ci].fields.iter().any(|x| x.name == f.name) {
                    self.report(f.loc, DiagCode::TypeError, format!("duplicate field '{}'", f.name));
                    continue;
                }
                let Ok(ty) = self.resolve_type(&f.ty) else { continue };
                if ty == Ty::Void {
                    self.report(f.loc, DiagCode::TypeError, "field of type void");
                    continue;
                }
                if f.quals.external && !cls.quals.external {
                    self.report(f.loc, DiagCode::QualifierError, format!("external field '{}' in non-external class '{}'", f.name, cls.name));
                }
                if f.quals.is_static || f.quals.message || f.quals.iterator || f.quals.copy {
                    self.report(f.loc, DiagCode::QualifierError, format!("invalid qualifier on field '{}'", f.name));
                }
                self.classes[ci].fields.push(FieldDesc { name: f.name.clone(), ty, external: f.quals.external });
            }
            for m in &cls.methods {
                if let Some(desc) = self.declare_method(cls, m) {
                    if self.classes[ci].methods.iter().any(|x| x.name == desc.name) {
                        self.report(m.loc, DiagCode::TypeError, format!("duplicate method '{}'", m.name));
                        continue;
                    }
                    if m.name == "main" && m.quals.is_static {
                        mains.push(m.loc);
                    }
                    self.classes[ci].methods.push(desc);
                }
            }
            if cls.quals.group {
                let own = Ty::Array(Box::new(Ty::Class(ClassRef::Own(ci as u32))));
                let ok = self.classes[ci].methods.iter().any(|m| m.name == "children" && m.params.is_empty() && m.ret == own);
                if !ok {
                    self.report(cls.loc, DiagCode::QualifierError, format!("group class '{}' must declare '{}[] children()'", cls.name, cls.name));
                }
            }
        }
        if mains.len() > 1 {
            self.report(mains[1], DiagCode::QualifierError, "package declares more than one main");
        }
    }

    fn eval_enums(&mut self, cls: &ast::ClassDecl) -> Vec<(String, i64)> {
        let mut out: Vec<(String, i64)> = Vec::new();
        for e in &cls.enums {
            if out.iter().any(|(n, _)| *n == e.name) {
                self.report(e.loc, DiagCode::TypeError, format!("duplicate constant '{}'", e.name));
                continue;
            }
            if let Ok(v) = self.const_eval(&e.value, &out) {
                out.push((e.name.clone(), v));
            }
        }
        out
    }

    fn const_eval(&mut self, e: &ast::Expr, known: &[(String, i64)]) -> CResult<i64> {
        Ok(match &e.kind {
            AK::Int(v) => *v,
            AK::Char(c) => *c as i64,
            AK::Name(n) => match known.iter().find(|(k, _)| k == n) {
                Some((_, v)) => *v,
                None => return Err(self.report(e.loc, DiagCode::UnknownName, format!("unknown constant '{n}'"))),
            },
            AK::Unary(ast::UnOp::Neg, a) => self.const_eval(a, known)?.wrapping_neg(),
            AK::Binary(op, a, b) => {
                let (x, y) = (self.const_eval(a, known)?, self.const_eval(b, known)?);
                match op {
                    ast::BinOp::Add => x.wrapping_add(y),
                    ast::BinOp::Sub => x.wrapping_sub(y),
                    ast::BinOp::Mul => x.wrapping_mul(y),
                    ast::BinOp::Div | ast::BinOp::Rem if y == 0 => {
                        return Err(self.report(e.loc, DiagCode::TypeError, "division by zero in constant"))
                    }
                    ast::BinOp::Div => x.wrapping_div(y),
                    ast::BinOp::Rem => x.wrapping_rem(y),
                    _ => return Err(self.report(e.loc, DiagCode::TypeError, "unsupported operator in constant")),
                }
            }
            _ => return Err(self.report(e.loc, DiagCode::TypeError, "enum value must be a constant integer expression")),
        })
    }

    fn declare_method(&mut self, cls: &ast::ClassDecl, m: &ast::MethodDecl) -> Option<MethodDesc> {
        let q = m.quals;
        let mut flags = 0;
        for (on, f) in [
            (q.public, method_flags::PUBLIC),
            (q.is_static, method_flags::STATIC),
            (q.external, method_flags::EXTERNAL),
            (q.message, method_flags::MESSAGE),
            (q.iterator, method_flags::ITERATOR),
            (m.is_ctor, method_flags::CTOR),
            (q.copy, method_flags::COPY_RET),
        ] {
            if on {
                flags |= f;
            }
        }
        let mut ok = true;
        let ret = self.resolve_type(&m.ret).ok()?;
        if q.iterator && !cls.quals.group {
            self.report(m.loc, DiagCode::QualifierError, format!("iterator method '{}' outside a group class", m.name));
            ok = false;
        }
        if q.iterator && (ret != Ty::Void || q.is_static) {
            self.report(m.loc, DiagCode::QualifierError, format!("iterator method '{}' must be a void instance method", m.name));
            ok = false;
        }
        if q.external && !cls.quals.external {
            self.report(m.loc, DiagCode::QualifierError, format!("external method '{}' in non-external class '{}'", m.name, cls.name));
            ok = false;
        }
        if q.message && ret != Ty::Void {
            self.report(m.loc, DiagCode::QualifierError, format!("message method '{}' must return void", m.name));
            ok = false;
        }
        if q.message && q.is_static {
            self.report(m.loc, DiagCode::QualifierError, format!("message method '{}' cannot be static", m.name));
            ok = false;
        }
        if m.is_ctor && (q.is_static || q.message || q.iterator || q.copy) {
            self.report(m.loc, DiagCode::QualifierError, "invalid qualifier on constructor");
            ok = false;
        }
        if q.copy && !ret.is_ref_like() {
            self.report(m.loc, DiagCode::QualifierError, format!("'copy' return on method '{}' requires an array or object type", m.name));
            ok = false;
        }
        let mut params = Vec::new();
        for p in &m.params {
            let Ok(ty) = self.resolve_type(&p.ty) else {
                ok = false;
                continue;
            };
            if ty == Ty::Void {
                self.report(p.loc, DiagCode::TypeError, format!("parameter '{}' has type void", p.name));
                ok = false;
            }
            if p.copy && !matches!(ty, Ty::Array(_) | Ty::Class(_)) {
                self.report(p.loc, DiagCode::QualifierError, format!("'copy' parameter '{}' must have an array or object type", p.name));
                ok = false;
            }
            if params.iter().any(|x: &ParamDesc| x.name == p.name) {
                self.report(p.loc, DiagCode::TypeError, format!("duplicate parameter '{}'", p.name));
                ok = false;
            }
            params.push(ParamDesc { name: p.name.clone(), ty, copy: p.copy });
        }
        if m.name == "main" && q.is_static {
            let argv = Ty::array_of(Ty::Char, 2);
            let good = (ret == Ty::Int && params.len() == 1 && params[0].ty == argv) || (ret == Ty::Void && params.is_empty());
            if !good {
                self.report(m.loc, DiagCode::QualifierError, "main must be 'static int main(char[][] argv)' or 'static void main()'");
                ok = false;
            }
        }
        let body = match &m.body {
            Some(_) => MethodBody::Code(u32::MAX),
            None => match (self.std.is_none(), cls.name.as_str(), m.name.as_str()) {
                (true, "host_group", "children") => MethodBody::Intrinsic(Builtin::HostChildren),
                _ => {
                    self.report(m.loc, DiagCode::QualifierError, format!("method '{}' has no body", m.name));
                    return None;
                }
            },
        };
        if !ok {
            return None;
        }
        let locals = params.len() as u32;
        Some(MethodDesc { name: m.name.clone(), flags, params, ret, locals, body })
    }

    // ---- pass 2: bodies ----------------------------------------------------

    fn bodies_pass(&mut self) {
        for (ci, cls) in self.ast.classes.iter().enumerate() {
            for m in &cls.methods {
                let Some(Some(body)) = Some(m.body.as_ref()) else { continue };
                let mi = self.classes[ci].methods.iter().position(|x| x.name == m.name).expect("declared method");
                let desc = self.classes[ci].methods[mi].clone();
                let mut ctx = FnCtx {
                    class: ci as u32,
                    is_static: desc.is_static(),
                    ret: desc.ret.clone(),
                    scopes: vec![Vec::new()],
                    next_slot: 0,
                    closure: None,
                };
                for p in &desc.params {
                    let slot = ctx.next_slot;
                    ctx.next_slot += 1;
                    ctx.scopes[0].push(Local { name: p.name.clone(), slot, ty: p.ty.clone() });
                }
                self.fns.push(ctx);
                let stmts = self.stmts(body);
                let ctx = self.fns.pop().expect("fn ctx");
                let idx = self.bodies.len() as u32;
                self.bodies.push(stmts);
                let md = &mut self.classes[ci].methods[mi];
                md.body = MethodBody::Code(idx);
                md.locals = ctx.next_slot;
            }
        }
    }

    fn cur(&mut self) -> &mut FnCtx {
        self.fns.last_mut().expect("inside a function")
    }

    fn stmts(&mut self, body: &[ast::Stmt]) -> Vec<Stmt> {
        self.cur().scopes.push(Vec::new());
        let out = body.iter().filter_map(|s| self.stmt(s).ok()).collect();
        self.cur().scopes.pop();
        out
    }

    fn sub_block(&mut self, s: &ast::Stmt) -> CResult<Vec<Stmt>> {
        match s {
            ast::Stmt::Block(b, _) => Ok(self.stmts(b)),
            other => {
                self.cur().scopes.push(Vec::new());
                let r = self.stmt(other);
                self.cur().scopes.pop();
                Ok(vec![r?])
            }
        }
    }

    fn declare_local(&mut self, name: &str, ty: Ty, loc: Loc) -> CResult<u32> {
        let ctx = self.cur();
        if ctx.scopes.last().expect("scope").iter().any(|l| l.name == name) {
            return Err(self.report(loc, DiagCode::TypeError, format!("'{name}' is already declared in this scope")));
        }
        let ctx = self.cur();
        let slot = ctx.next_slot;
        ctx.next_slot += 1;
        ctx.scopes.last_mut().expect("scope").push(Local { name: name.to_string(), slot, ty });
        Ok(slot)
    }

    fn condition(&mut self, e: &ast::Expr) -> CResult<Expr> {
        let c = self.expr(e)?;
        if !is_condition(&c.ty) {
            return Err(self.report(e.loc, DiagCode::TypeError, format!("condition must be bool or int, found {}", ty_name(&c.ty, self))));
        }
        Ok(c)
    }

    fn stmt(&mut self, s: &ast::Stmt) -> CResult<Stmt> {
        match s {
            ast::Stmt::Block(b, _) => Ok(Stmt::Block(self.stmts(b))),
            ast::Stmt::Empty(_) => Ok(Stmt::Block(vec![])),
            ast::Stmt::Expr(e) => Ok(Stmt::Expr(self.expr(e)?)),
            ast::Stmt::VarDecl { ty, name, init, loc } => {
                let t = self.resolve_type(ty)?;
                if t == Ty::Void {
                    return Err(self.report(*loc, DiagCode::TypeError, format!("variable '{name}' has type void")));
                }
                let value = match init {
                    Some(e) => {
                        let v = self.expr(e)?;
                        self.expect_assignable(&v, &t, e.loc)?;
                        v
                    }
                    None => default_value(&t, loc.line),
                };
                let slot = self.declare_local(name, t, *loc)?;
                Ok(Stmt::Let(slot, value))
            }
            ast::Stmt::If { cond, then, otherwise, .. } => {
                let c = self.condition(cond);
                let a = self.sub_block(then);
                let b = match otherwise {
                    Some(o) => self.sub_block(o),
                    None => Ok(vec![]),
                };
                Ok(Stmt::If(c?, a?, b?))
            }
            ast::Stmt::While { cond, body, .. } => {
                let c = self.condition(cond);
                let b = self.sub_block(body);
                Ok(Stmt::While(c?, b?))
            }
            ast::Stmt::For { init, cond, step, body, .. } => {
                self.cur().scopes.push(Vec::new());
                let r = (|| {
                    let init = match init {
                        Some(s) => vec![self.stmt(s)?],
                        None => vec![],
                    };
                    let cond = match cond {
                        Some(c) => Some(self.condition(c)?),
                        None => None,
                    };
                    let step = step.iter().map(|e| self.expr(e)).collect::<Vec<_>>();
                    let body = self.sub_block(body)?;
                    let step = step.into_iter().collect::<CResult<Vec<_>>>()?;
                    Ok(Stmt::For { init, cond, step, body })
                })();
                self.cur().scopes.pop();
                r
            }
            ast::Stmt::Return(value, loc) => {
                let ret = self.cur().ret.clone();
                match value {
                    None if ret == Ty::Void => Ok(Stmt::Return(None)),
                    None => Err(self.report(*loc, DiagCode::TypeError, format!("missing return value of type {}", ty_name(&ret, self)))),
                    Some(e) => {
                        let v = self.expr(e)?;
                        if ret == Ty::Void {
                            return Err(self.report(e.loc, DiagCode::TypeError, "void method returns a value"));
                        }
                        self.expect_assignable(&v, &ret, e.loc)?;
                        Ok(Stmt::Return(Some(v)))
                    }
                }
            }
        }
    }

    fn expect_assignable(&mut self, v: &Expr, to: &Ty, loc: Loc) -> CResult<()> {
        if assignable(&v.ty, to) {
            Ok(())
        } else {
            Err(self.report(loc, DiagCode::TypeError, format!("expected {}, found {}", ty_name(to, self), ty_name(&v.ty, self))))
        }
    }

    fn mk(&self, kind: ExprKind, ty: Ty, loc: Loc) -> Expr {
        Expr { kind, ty, line: loc.line }
    }

    /// Resolves a local by name, capturing it into the current closure when it
    /// belongs to an enclosing function.
    fn lookup_local(&mut self, name: &str) -> Option<(u32, Ty)> {
        let depth = self.fns.len() - 1;
        self.lookup_local_at(depth, name)
    }

    fn lookup_local_at(&mut self, depth: usize, name: &str) -> Option<(u32, Ty)> {
        let ctx = &self.fns[depth];
        for scope in ctx.scopes.iter().rev() {
            if let Some(l) = scope.iter().rev().find(|l| l.name == name) {
                return Some((l.slot, l.ty.clone()));
            }
        }
        if ctx.closure.is_none() || depth == 0 {
            return None;
        }
        let (outer_slot, ty) = self.lookup_local_at(depth - 1, name)?;
        let ctx = &mut self.fns[depth];
        let slot = ctx.next_slot;
        ctx.next_slot += 1;
        ctx.scopes[0].push(Local { name: name.to_string(), slot, ty: ty.clone() });
        let cl = ctx.closure.as_mut().expect("closure");
        cl.captures.push(Expr { kind: ExprKind::Local(outer_slot), ty: ty.clone(), line: 0 });
        cl.outer_slots.push(outer_slot);
        Some((slot, ty))
    }

    fn this_expr(&mut self, loc: Loc) -> CResult<Expr> {
        let ctx = self.cur();
        if ctx.is_static {
            return Err(self.report(loc, DiagCode::TypeError, "'this' used in a static context"));
        }
        let class = ctx.class;
        if let Some(cl) = ctx.closure.as_mut() {
            cl.uses_this = true;
        }
        Ok(self.mk(ExprKind::This, Ty::Class(ClassRef::Own(class)), loc))
    }

    fn field_of(&mut self, class: ClassRef, name: &str) -> Option<(u32, Ty)> {
        let c = self.class_desc(class);
        c.fields.iter().position(|f| f.name == name).map(|i| (i as u32, c.fields[i].ty.clone()))
    }

    fn const_of(&self, class: ClassRef, name: &str) -> Option<i64> {
        self.class_desc(class).consts.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    fn is_class_name(&mut self, e: &ast::Expr) -> Option<ClassRef> {
        if let AK::Name(n) = &e.kind {
            if self.lookup_local(n).is_none() {
                let own = ClassRef::Own(self.cur().class);
                if self.field_of(own, n).is_none() && self.const_of(own, n).is_none() {
                    return self.lookup_class(n);
                }
            }
        }
        None
    }

    fn place(&mut self, e: &ast::Expr) -> CResult<(Place, Ty)> {
        match &e.kind {
            AK::Name(n) => {
                if let Some((slot, ty)) = self.lookup_local(n) {
                    if self.cur().closure.is_some() {
                        return Err(self.report(e.loc, DiagCode::TypeError, format!("cannot assign local '{n}' inside a queued expression")));
                    }
                    return Ok((Place::Local(slot), ty));
                }
                let own = ClassRef::Own(self.cur().class);
                if let Some((field, ty)) = self.field_of(own, n) {
                    let this = self.this_expr(e.loc)?;
                    return Ok((Place::Field { obj: Box::new(this), class: own, field }, ty));
                }
                Err(self.report(e.loc, DiagCode::UnknownName, format!("unknown variable '{n}'")))
            }
            AK::Field(obj, name) => {
                let o = self.expr(obj)?;
                let Ty::Class(class) = o.ty else {
                    return Err(self.report(e.loc, DiagCode::TypeError, format!("{} has no fields", ty_name(&o.ty, self))));
                };
                match self.field_of(class, name) {
                    Some((field, ty)) => Ok((Place::Field { obj: Box::new(o), class, field }, ty)),
                    None => Err(self.report(e.loc, DiagCode::UnknownName, format!("unknown field '{name}'"))),
                }
            }
            AK::Index(arr, idx) => {
                let a = self.expr(arr)?;
                let i = self.expr(idx)?;
                let Ty::Array(elem) = a.ty.clone() else {
                    return Err(self.report(e.loc, DiagCode::TypeError, "indexing a non-array"));
                };
                if !is_intlike(&i.ty) {
                    return Err(self.report(idx.loc, DiagCode::TypeError, "array index must be int"));
                }
                Ok((Place::Index { arr: Box::new(a), idx: Box::new(i) }, *elem))
            }
            _ => Err(self.report(e.loc, DiagCode::TypeError, "expression is not assignable")),
        }
    }

    fn args_for(&mut self, params: &[ParamDesc], args: &[ast::Expr], loc: Loc, what: &str) -> CResult<Vec<Expr>> {
        if params.len() != args.len() {
            return Err(self.report(loc, DiagCode::TypeError, format!("{what} expects {} argument(s), found {}", params.len(), args.len())));
        }
        let mut out = Vec::new();
        let mut failed = false;
        for (p, a) in params.iter().zip(args) {
            match self.expr(a) {
                Ok(v) => {
                    if self.expect_assignable(&v, &p.ty, a.loc).is_err() {
                        failed = true;
                    }
                    out.push(v);
                }
                Err(_) => failed = true,
            }
        }
        if failed {
            Err(Reported)
        } else {
            Ok(out)
        }
    }

    fn method_of(&mut self, class: ClassRef, name: &str, loc: Loc) -> CResult<(u32, MethodDesc)> {
        let c = self.class_desc(class);
        match c.methods.iter().position(|m| m.name == name && !m.has(method_flags::CTOR)) {
            Some(i) => Ok((i as u32, c.methods[i].clone())),
            None => {
                let cname = c.name.clone();
                Err(self.report(loc, DiagCode::UnknownName, format!("class '{cname}' has no method '{name}'")))
            }
        }
    }

    fn resolve_ctor_class(&mut self, name: &str, loc: Loc) -> CResult<ClassRef> {
        if let Some(r) = self.lookup_class(name) {
            return Ok(r);
        }
        let lower = name.to_ascii_lowercase();
        let hits: Vec<String> = self.class_index.keys().filter(|k| k.to_ascii_lowercase() == lower).cloned().collect();
        if hits.len() == 1 {
            self.warn(loc, DiagCode::CaseCorrected, format!("constructor '{name}' resolved to class '{}'", hits[0]));
            return Ok(ClassRef::Own(self.class_index[&hits[0]]));
        }
        Err(self.report(loc, DiagCode::UnknownName, format!("unknown class '{name}'")))
    }

    fn builtin_call(&mut self, func: Builtin, args: &[ast::Expr], loc: Loc) -> CResult<Expr> {
        let vals = args.iter().map(|a| self.expr(a)).collect::<Vec<_>>();
        let vals = vals.into_iter().collect::<CResult<Vec<_>>>()?;
        let tys: Vec<&Ty> = vals.iter().map(|v| &v.ty).collect();
        let char_arr = Ty::Array(Box::new(Ty::Char));
        let ret = match (func, tys.as_slice()) {
            (Builtin::Print, [s]) if is_char_array(s) || **s == Ty::Null => Ty::Void,
            (Builtin::Sizear, [a, d]) if matches!(a, Ty::Array(_)) && is_intlike(d) => Ty::Int,
            (Builtin::Hello, [s]) if is_char_array(s) => Ty::Host,
            (Builtin::ExecOpen, [s]) if is_char_array(s) => Ty::Int,
            (Builtin::ExecRead, [h, b, n]) if is_intlike(h) && is_char_array(b) && is_intlike(n) => Ty::Array(Box::new(Ty::Int)),
            (Builtin::WriteStdout, [b, n]) if is_char_array(b) && is_intlike(n) => Ty::Int,
            (Builtin::ParseInt, [s]) if is_char_array(s) => Ty::Int,
            _ => {
                let sig = match func {
                    Builtin::Print => "print(char[])",
                    Builtin::Sizear => "sizear(array, int)",
                    Builtin::Hello => "hello(char[])",
                    Builtin::ExecOpen => "exec_open(char[])",
                    Builtin::ExecRead => "exec_read(int, char[], int)",
                    Builtin::WriteStdout => "write_stdout(char[], int)",
                    Builtin::ParseInt => "parse_int(char[])",
                    _ => "intrinsic",
                };
                return Err(self.report(loc, DiagCode::TypeError, format!("bad arguments; expected {sig}")));
            }
        };
        let _ = char_arr;
        Ok(self.mk(ExprKind::Builtin { func, args: vals }, ret, loc))
    }

    fn expr(&mut self, e: &ast::Expr) -> CResult<Expr> {
        let loc = e.loc;
        match &e.kind {
            AK::Int(v) => Ok(self.mk(ExprKind::Int(*v), Ty::Int, loc)),
            AK::Bool(b) => Ok(self.mk(ExprKind::Bool(*b), Ty::Bool, loc)),
            AK::Char(c) => Ok(self.mk(ExprKind::Char(*c), Ty::Char, loc)),
            AK::Null => Ok(self.mk(ExprKind::Null, Ty::Null, loc)),
            AK::Str(s) => {
                let i = self.intern(s);
                Ok(self.mk(ExprKind::Str(i), Ty::Array(Box::new(Ty::Char)), loc))
            }
            AK::This => self.this_expr(loc),
            AK::ThisHost => Ok(self.mk(ExprKind::ThisHost, Ty::Host, loc)),
            AK::Hosts => {
                let t = self.host_group_ty();
                Ok(self.mk(ExprKind::Hosts, t, loc))
            }
            AK::Name(n) => {
                if let Some((slot, ty)) = self.lookup_local(n) {
                    return Ok(self.mk(ExprKind::Local(slot), ty, loc));
                }
                let own = ClassRef::Own(self.cur().class);
                if let Some((field, ty)) = self.field_of(own, n) {
                    let this = self.this_expr(loc)?;
                    return Ok(self.mk(ExprKind::Field { obj: Box::new(this), class: own, field }, ty, loc));
                }
                if let Some(v) = self.const_of(own, n) {
                    return Ok(self.mk(ExprKind::Int(v), Ty::Int, loc));
                }
                Err(self.report(loc, DiagCode::UnknownName, format!("unknown name '{n}'")))
            }
            AK::Field(obj, name) => {
                if let Some(class) = self.is_class_name(obj) {
                    return match self.const_of(class, name) {
                        Some(v) => Ok(self.mk(ExprKind::Int(v), Ty::Int, loc)),
                        None => Err(self.report(loc, DiagCode::UnknownName, format!("unknown constant '{name}'"))),
                    };
                }
                let (place, ty) = self.place(e)?;
                let Place::Field { obj, class, field } = place else { unreachable!("field place") };
                Ok(self.mk(ExprKind::Field { obj, class, field }, ty, loc))
            }
            AK::Index(..) => {
                let (place, ty) = self.place(e)?;
                let Place::Index { arr, idx } = place else { unreachable!("index place") };
                Ok(self.mk(ExprKind::Index { arr, idx }, ty, loc))
            }
            AK::Unary(op, a) => {
                let v = self.expr(a)?;
                match op {
                    ast::UnOp::Neg if is_intlike(&v.ty) => Ok(self.mk(ExprKind::Unary(UnOp::Neg, Box::new(v)), Ty::Int, loc)),
                    ast::UnOp::Not if is_condition(&v.ty) => Ok(self.mk(ExprKind::Unary(UnOp::Not, Box::new(v)), Ty::Bool, loc)),
                    _ => Err(self.report(loc, DiagCode::TypeError, format!("bad operand type {}", ty_name(&v.ty, self)))),
                }
            }
            AK::Binary(op, a, b) => self.binary(*op, a, b, loc),
            AK::Cond(c, a, b) => {
                let c = self.condition(c)?;
                let x = self.expr(a)?;
                let y = self.expr(b)?;
                let ty = if assignable(&y.ty, &x.ty) {
                    x.ty.clone()
                } else if assignable(&x.ty, &y.ty) {
                    y.ty.clone()
                } else {
                    return Err(self.report(loc, DiagCode::TypeError, "conditional branches have incompatible types"));
                };
                Ok(self.mk(ExprKind::Cond(Box::new(c), Box::new(x), Box::new(y)), ty, loc))
            }
            AK::Assign(op, target, value) => {
                let (place, ty) = self.place(target)?;
                let v = self.expr(value)?;
                let op = match op {
                    ast::AssignOp::Set => {
                        self.expect_assignable(&v, &ty, value.loc)?;
                        AssignOp::Set
                    }
                    ast::AssignOp::Add if is_char_array(&ty) => {
                        if !(is_char_array(&v.ty) || matches!(v.ty, Ty::Int | Ty::Char | Ty::Bool)) {
                            return Err(self.report(value.loc, DiagCode::TypeError, "cannot append this value to char[]"));
                        }
                        AssignOp::Append
                    }
                    ast::AssignOp::Add | ast::AssignOp::Sub if is_intlike(&ty) && is_intlike(&v.ty) => {
                        if *op == ast::AssignOp::Add {
                            AssignOp::Add
                        } else {
                            AssignOp::Sub
                        }
                    }
                    _ => return Err(self.report(loc, DiagCode::TypeError, "compound assignment needs int operands")),
                };
                Ok(self.mk(ExprKind::Assign { place: Box::new(place), op, value: Box::new(v) }, ty, loc))
            }
            AK::IncDec { target, delta, prefix } => {
                let (place, ty) = self.place(target)?;
                if !is_intlike(&ty) {
                    return Err(self.report(loc, DiagCode::TypeError, "++/-- needs an int variable"));
                }
                Ok(self.mk(ExprKind::IncDec { place: Box::new(place), delta: *delta, prefix: *prefix }, ty, loc))
            }
            AK::Call(name, args) => {
                let own = ClassRef::Own(self.cur().class);
                if let Some(i) = self.class_desc(own).methods.iter().position(|m| m.name == *name && !m.has(method_flags::CTOR)) {
                    let m = self.class_desc(own).methods[i].clone();
                    if !m.is_static() {
                        self.this_expr(loc)?;
                    }
                    let vals = self.args_for(&m.params, args, loc, name)?;
                    return Ok(self.mk(ExprKind::Call { recv: None, class: own, method: i as u32, args: vals }, m.ret, loc));
                }
                match builtin_by_name(name) {
                    Some(b) => self.builtin_call(b, args, loc),
                    None => Err(self.report(loc, DiagCode::UnknownName, format!("unknown function '{name}'"))),
                }
            }
            AK::MethodCall(recv, name, args) => self.method_call(recv, name, args, loc),
            AK::New { class, args, create, at } => {
                let cref = self.resolve_ctor_class(class, loc)?;
                if matches!(cref, ClassRef::Std(_)) {
                    return Err(self.report(loc, DiagCode::QualifierError, format!("built-in class '{class}' cannot be instantiated")));
                }
                let desc = self.class_desc(cref).clone();
                let at_expr = match at {
                    Some(h) => {
                        if !desc.is_external() {
                            return Err(self.report(
                                loc,
                                DiagCode::QualifierError,
                                format!("class '{}' must be external to be created on a host", desc.name),
                            ));
                        }
                        let hv = self.expr(h)?;
                        if !assignable(&hv.ty, &Ty::Host) {
                            return Err(self.report(h.loc, DiagCode::TypeError, "create location must be a host"));
                        }
                        Some(Box::new(hv))
                    }
                    None => None,
                };
                let ctor = desc.ctor();
                let vals = match ctor {
                    Some(ci) => self.args_for(&desc.methods[ci as usize].params.clone(), args, loc, "constructor")?,
                    None => self.args_for(&[], args, loc, "constructor")?,
                };
                let placement = if *create { Placement::Partition(at_expr) } else { Placement::Heap };
                Ok(self.mk(ExprKind::New { class: cref, ctor, args: vals, placement }, Ty::Class(cref), loc))
            }
            AK::NewQueue { at } => {
                let at = match at {
                    Some(h) => {
                        let hv = self.expr(h)?;
                        if !assignable(&hv.ty, &Ty::Host) {
                            return Err(self.report(h.loc, DiagCode::TypeError, "create location must be a host"));
                        }
                        Some(Box::new(hv))
                    }
                    None => None,
                };
                Ok(self.mk(ExprKind::NewQueue { at }, Ty::Queue, loc))
            }
            AK::NewArray { elem, sizes, extra_dims } => {
                let elem_ty = self.resolve_type(&TypeExpr { base: elem.clone(), dims: 0, loc })?;
                if elem_ty == Ty::Void {
                    return Err(self.report(loc, DiagCode::TypeError, "array of void"));
                }
                let mut vals = Vec::new();
                for s in sizes {
                    let v = self.expr(s)?;
                    if !is_intlike(&v.ty) {
                        return Err(self.report(s.loc, DiagCode::TypeError, "array size must be int"));
                    }
                    vals.push(v);
                }
                let ty = Ty::array_of(elem_ty.clone(), sizes.len() as u32 + extra_dims);
                Ok(self.mk(ExprKind::NewArray { elem: elem_ty, sizes: vals, extra_dims: *extra_dims }, ty, loc))
            }
            AK::QueuedEval(q, body) => self.queued_eval(q, body, loc),
            AK::Post { queue, target, method, args } => {
                let q = self.expr(queue)?;
                if !assignable(&q.ty, &Ty::Queue) || q.ty == Ty::Null {
                    return Err(self.report(queue.loc, DiagCode::TypeError, "left operand of '#>' must be a queue"));
                }
                let t = self.expr(target)?;
                let Ty::Class(class) = t.ty else {
                    return Err(self.report(target.loc, DiagCode::TypeError, "message target must be an object"));
                };
                let (mi, m) = self.method_of(class, method, loc)?;
                if !m.has(method_flags::MESSAGE) {
                    return Err(self.report(loc, DiagCode::QualifierError, format!("method '{method}' is not a message method")));
                }
                let vals = self.args_for(&m.params, args, loc, method)?;
                Ok(self.mk(
                    ExprKind::Post { queue: Box::new(q), target: Box::new(t), class, method: mi, args: vals },
                    Ty::Void,
                    loc,
                ))
            }
            AK::Iterate(group, method, args) => {
                let g = self.expr(group)?;
                let Ty::Class(class) = g.ty else {
                    return Err(self.report(group.loc, DiagCode::TypeError, "'.+' needs a group object"));
                };
                if !self.class_desc(class).is_group() {
                    let n = self.class_desc(class).name.clone();
                    return Err(self.report(loc, DiagCode::QualifierError, format!("class '{n}' is not a group class")));
                }
                let (mi, m) = self.method_of(class, method, loc)?;
                if !m.has(method_flags::ITERATOR) {
                    return Err(self.report(loc, DiagCode::QualifierError, format!("method '{method}' is not an iterator method")));
                }
                let vals = self.args_for(&m.params, args, loc, method)?;
                Ok(self.mk(ExprKind::Iterate { group: Box::new(g), class, method: mi, args: vals }, Ty::Void, loc))
            }
        }
    }

    fn binary(&mut self, op: ast::BinOp, a: &ast::Expr, b: &ast::Expr, loc: Loc) -> CResult<Expr> {
        use ast::BinOp as B;
        let x = self.expr(a)?;
        let y = self.expr(b)?;
        let bad = |c: &mut Self, x: &Expr, y: &Expr| {
            let (l, r) = (ty_name(&x.ty, c), ty_name(&y.ty, c));
            Err(c.report(loc, DiagCode::TypeError, format!("operator not defined for {l} and {r}")))
        };
        let (irop, ty) = match op {
            B::Add if is_char_array(&x.ty) => {
                if !(is_char_array(&y.ty) || matches!(y.ty, Ty::Int | Ty::Char | Ty::Bool)) {
                    return bad(self, &x, &y);
                }
                (BinOp::Concat, x.ty.clone())
            }
            B::Add | B::Sub | B::Mul | B::Div | B::Rem => {
                if !(is_intlike(&x.ty) && is_intlike(&y.ty)) {
                    return bad(self, &x, &y);
                }
                let o = match op {
                    B::Add => BinOp::Add,
                    B::Sub => BinOp::Sub,
                    B::Mul => BinOp::Mul,
                    B::Div => BinOp::Div,
                    _ => BinOp::Rem,
                };
                (o, Ty::Int)
            }
            B::Lt | B::Le | B::Gt | B::Ge => {
                if !(is_intlike(&x.ty) && is_intlike(&y.ty)) {
                    return bad(self, &x, &y);
                }
                let o = match op {
                    B::Lt => BinOp::Lt,
                    B::Le => BinOp::Le,
                    B::Gt => BinOp::Gt,
                    _ => BinOp::Ge,
                };
                (o, Ty::Bool)
            }
            B::Eq | B::Ne => {
                let ok = assignable(&x.ty, &y.ty) || assignable(&y.ty, &x.ty) || (is_intlike(&x.ty) && is_intlike(&y.ty));
                if !ok {
                    return bad(self, &x, &y);
                }
                (if op == B::Eq { BinOp::Eq } else { BinOp::Ne }, Ty::Bool)
            }
            B::And | B::Or => {
                if !(is_condition(&x.ty) && is_condition(&y.ty)) {
                    return bad(self, &x, &y);
                }
                (if op == B::And { BinOp::And } else { BinOp::Or }, Ty::Bool)
            }
        };
        Ok(self.mk(ExprKind::Binary(irop, Box::new(x), Box::new(y)), ty, loc))
    }

    fn method_call(&mut self, recv: &ast::Expr, name: &str, args: &[ast::Expr], loc: Loc) -> CResult<Expr> {
        if let Some(class) = self.is_class_name(recv) {
            let (mi, m) = self.method_of(class, name, loc)?;
            if !m.is_static() {
                return Err(self.report(loc, DiagCode::TypeError, format!("method '{name}' is not static")));
            }
            let vals = self.args_for(&m.params, args, loc, name)?;
            return Ok(self.mk(ExprKind::Call { recv: None, class, method: mi, args: vals }, m.ret, loc));
        }
        let r = self.expr(recv)?;
        match r.ty.clone() {
            Ty::Host => {
                let (func, ret) = match name {
                    "name" => (Builtin::HostName, Ty::Array(Box::new(Ty::Char))),
                    "print" => (Builtin::HostPrint, Ty::Void),
                    _ => return Err(self.report(loc, DiagCode::UnknownName, format!("host has no method '{name}'"))),
                };
                let params: Vec<ParamDesc> = match func {
                    Builtin::HostPrint => vec![ParamDesc { name: "str".into(), ty: Ty::Array(Box::new(Ty::Char)), copy: true }],
                    _ => vec![],
                };
                let mut vals = vec![r];
                vals.extend(self.args_for(&params, args, loc, name)?);
                Ok(self.mk(ExprKind::Builtin { func, args: vals }, ret, loc))
            }
            Ty::Class(class) => {
                let (mi, m) = self.method_of(class, name, loc)?;
                if m.is_static() {
                    return Err(self.report(loc, DiagCode::TypeError, format!("static method '{name}' called on an instance")));
                }
                let is_this = matches!(r.kind, ExprKind::This);
                if self.class_desc(class).is_external() && !is_this && !m.has(method_flags::EXTERNAL) {
                    return Err(self.report(
                        loc,
                        DiagCode::QualifierError,
                        format!("method '{name}' is not external and may not be called through a possibly remote reference"),
                    ));
                }
                let vals = self.args_for(&m.params, args, loc, name)?;
                Ok(self.mk(ExprKind::Call { recv: Some(Box::new(r)), class, method: mi, args: vals }, m.ret, loc))
            }
            other => Err(self.report(loc, DiagCode::TypeError, format!("{} has no methods", ty_name(&other, self)))),
        }
    }

    fn queued_eval(&mut self, q: &ast::Expr, body: &ast::Expr, loc: Loc) -> CResult<Expr> {
        let qv = self.expr(q)?;
        if qv.ty != Ty::Queue {
            return Err(self.report(q.loc, DiagCode::TypeError, "left operand of '<=>' must be a queue"));
        }
        let (class, is_static) = {
            let c = self.cur();
            (c.class, c.is_static)
        };
        self.fns.push(FnCtx {
            class,
            is_static,
            ret: Ty::Void,
            scopes: vec![Vec::new()],
            next_slot: 0,
            closure: Some(ClosureCtx::default()),
        });
        let r = self.expr(body);
        let ctx = self.fns.pop().expect("closure ctx");
        let v = r?;
        let cl = ctx.closure.expect("closure");
        let with_this = cl.uses_this;
        if with_this {
            // Propagate to an enclosing closure.
            if let Some(outer) = self.cur().closure.as_mut() {
                outer.uses_this = true;
            }
        }
        let ty = v.ty.clone();
        let params: Vec<ParamDesc> = ctx.scopes[0]
            .iter()
            .map(|l| ParamDesc { name: l.name.clone(), ty: l.ty.clone(), copy: false })
            .collect();
        let body_stmts = if ty == Ty::Void { vec![Stmt::Expr(v), Stmt::Return(None)] } else { vec![Stmt::Return(Some(v))] };
        let bi = self.bodies.len() as u32;
        self.bodies.push(body_stmts);
        let methods = &mut self.classes[class as usize].methods;
        let mi = methods.len() as u32;
        let mut flags = method_flags::CLOSURE;
        if !with_this {
            flags |= method_flags::STATIC;
        }
        methods.push(MethodDesc {
            name: format!("<=>#{mi}"),
            flags,
            params,
            ret: ty.clone(),
            locals: ctx.next_slot,
            body: MethodBody::Code(bi),
        });
        let captures = cl
            .captures
            .into_iter()
            .map(|mut c| {
                c.line = loc.line;
                c
            })
            .collect();
        Ok(self.mk(
            ExprKind::QueuedEval { queue: Box::new(qv), class: ClassRef::Own(class), method: mi, with_this, captures },
            ty,
            loc,
        ))
    }
}

pub(crate) fn default_value(t: &Ty, line: u32) -> Expr {
    let kind = match t {
        Ty::Int => ExprKind::Int(0),
        Ty::Bool => ExprKind::Bool(false),
        Ty::Char => ExprKind::Char(0),
        _ => ExprKind::Null,
    };
    Expr { kind, ty: t.clone(), line }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{parse_package, SourceUnit};

    fn check_src(src: &str) -> Result<CheckedPackage, FrontendError> {
        let ast = parse_package(&[SourceUnit::new("t.hlo", src)]).unwrap();
        check(&ast)
    }

    fn err_code(src: &str) -> DiagCode {
        check_src(src).unwrap_err().code().unwrap()
    }

    #[test]
    fn create_requires_external() {
        let src = "package p; class Local { } external class S { void f(host h) { Local l = create (h) Local(); } }";
        assert_eq!(err_code(src), DiagCode::QualifierError);
        let ok = "package p; external class S { external S() {} void f(host h) { S l = create (h) S(); } }";
        check_src(ok).unwrap();
    }

    #[test]
    fn constructor_case_is_corrected_with_warning() {
        let src = "package p; external class Shell { void f(host h) { Shell s = create (h) shell(); } }";
        let pkg = check_src(src).unwrap();
        assert_eq!(pkg.warnings.len(), 1);
        assert_eq!(pkg.warnings[0].code, DiagCode::CaseCorrected);
    }

    #[test]
    fn queued_eval_is_typed_and_lifted() {
        let src = "package p; class A { static int f(queue q) { int x = 4; return q <=> x + 1; } }";
        let pkg = check_src(src).unwrap();
        let closure = pkg.classes[0].methods.iter().find(|m| m.has(method_flags::CLOSURE)).unwrap();
        assert_eq!(closure.ret, Ty::Int);
        assert_eq!(closure.params.len(), 1);
        assert!(closure.is_static());
    }

    #[test]
    fn qualifier_rules() {
        assert_eq!(err_code("package p; class A { iterator void it() {} }"), DiagCode::QualifierError);
        assert_eq!(err_code("package p; class A { external void e() {} }"), DiagCode::QualifierError);
        assert_eq!(err_code("package p; class A { message int m() { return 1; } }"), DiagCode::QualifierError);
        assert_eq!(err_code("package p; class A { void m(copy int x) {} }"), DiagCode::QualifierError);
        assert_eq!(
            err_code("package p; class A { static void main() {} } class B { static void main() {} }"),
            DiagCode::QualifierError
        );
        assert_eq!(
            err_code("package p; class A { void m() {} void f(queue q) { q #> (this, m()); } }"),
            DiagCode::QualifierError
        );
        assert_eq!(
            err_code("package p; external class A { void local() {} external void f(A other) { other.local(); } }"),
            DiagCode::QualifierError
        );
    }

    #[test]
    fn type_and_name_errors() {
        assert_eq!(err_code("package p; class A { void f() { int x = true; } }"), DiagCode::TypeError);
        assert_eq!(err_code("package p; class A { void f() { y = 1; } }"), DiagCode::UnknownName);
        assert_eq!(err_code("package p; class A { void f() { nosuch(1); } }"), DiagCode::UnknownName);
        assert_eq!(err_code("package p; class A { void f() { print(1); } }"), DiagCode::TypeError);
        assert_eq!(err_code("package p; class A { void f(queue q) { int x = 0; q <=> (x = 2); } }"), DiagCode::TypeError);
    }

    #[test]
    fn enum_constants_in_class_scope() {
        let pkg = check_src("package p; class A { enum { K = 1024 * 4, L = K + 1 } int f() { return L; } }").unwrap();
        assert_eq!(pkg.classes[0].consts, vec![("K".into(), 4096), ("L".into(), 4097)]);
    }
}
