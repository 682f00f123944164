//! Tree-walking interpreter over runpack bodies.

use std::rc::Rc;
use std::sync::Arc;

use super::queue::{reply_job, Queue};
use super::{boxed, remote, BoxFut, Engine};
use crate::error::{EngineError, EngineResult, FaultCode};
use crate::groups;
use crate::runpack::ir::{AssignOp, BinOp, ClassRef, Expr, ExprKind, MethodBody, Place, Placement, Stmt, Ty, UnOp};
use crate::runpack::RunpackImage;
use crate::security::Privilege;
use crate::stdlib::STD_PACKAGE;
use crate::value::{append_display, ArrayData, ArrayRef, ClassKey, ObjectRef, Space, Value};

/// Where code runs: an engine, the queue executing it, and its call chain.
#[derive(Clone)]
pub struct Ctx {
    pub(crate) eng: Engine,
    pub(crate) queue: Rc<Queue>,
    pub(crate) chain: u64,
}

impl Ctx {
    pub fn engine(&self) -> &Engine {
        &self.eng
    }

    pub fn queue(&self) -> &Rc<Queue> {
        &self.queue
    }

    pub(crate) fn with_queue(&self, queue: Rc<Queue>, chain: u64) -> Ctx {
        Ctx { eng: self.eng.clone(), queue, chain }
    }

    fn fault(&self, code: FaultCode, msg: impl Into<String>) -> EngineError {
        self.eng.fault(code, msg)
    }
}

struct Code {
    img: Arc<RunpackImage>,
    pkg: Rc<str>,
}

impl Code {
    fn key(&self, c: ClassRef) -> ClassKey {
        match c {
            ClassRef::Own(index) => ClassKey::User { package: self.pkg.clone(), index },
            ClassRef::Std(index) => ClassKey::User { package: STD_PACKAGE.into(), index },
        }
    }
}

struct Frame {
    this: Option<ObjectRef>,
    locals: Vec<Value>,
}

enum Flow {
    Next,
    Ret(Value),
}

enum Loc {
    Local(u32),
    Field(ObjectRef, u32),
    Index(ArrayRef, i64),
}

pub(crate) fn expect_ref(ctx: &Ctx, v: Value) -> EngineResult<ObjectRef> {
    match v {
        Value::Ref(r) => Ok(r),
        Value::Null => Err(ctx.fault(FaultCode::NullReference, "null reference")),
        _ => Err(EngineError::AccessViolation("not an object reference".into())),
    }
}

pub(crate) fn expect_array(ctx: &Ctx, v: Value) -> EngineResult<ArrayRef> {
    match v {
        Value::Array(a) => Ok(a),
        Value::Null => Err(ctx.fault(FaultCode::NullReference, "null array")),
        _ => Err(EngineError::AccessViolation("not an array".into())),
    }
}

fn coerce(v: Value, ty: &Ty) -> Value {
    match (ty, &v) {
        (Ty::Char, Value::Int(i)) => Value::Char(*i as u8),
        (Ty::Int, Value::Char(c)) => Value::Int(*c as i64),
        _ => v,
    }
}

fn scalar_like(old: &Value, n: i64) -> Value {
    match old {
        Value::Char(_) => Value::Char(n as u8),
        _ => Value::Int(n),
    }
}

/// Runs method `method` of class `key` with `this` bound and arguments already prepared.
pub(crate) fn exec_method(ctx: Ctx, key: ClassKey, method: u32, this: Option<ObjectRef>, args: Vec<Value>) -> BoxFut<'static, EngineResult<Value>> {
    boxed(async move {
        let ci = ctx.eng.class_info(&key)?;
        let m = ci.method(method)?;
        let (body, locals, ret) = (m.body, m.locals as usize, m.ret.clone());
        match body {
            MethodBody::Intrinsic(b) => super::intrinsics::method_intrinsic(&ctx, b, this, args).await,
            MethodBody::Code(bi) => {
                let code = Code { img: ci.img.clone(), pkg: ci.pkg.clone() };
                let img = code.img.clone();
                let stmts = img.bodies.get(bi as usize).ok_or_else(|| EngineError::Protocol(format!("missing body {bi}")))?;
                let mut locals_v = args;
                if locals_v.len() < locals {
                    locals_v.resize(locals, Value::Null);
                }
                let mut frame = Frame { this, locals: locals_v };
                match exec_block(&ctx, &code, &mut frame, stmts).await? {
                    Flow::Ret(v) => Ok(coerce(v, &ret)),
                    Flow::Next => Ok(Value::default_for(&ret)),
                }
            }
        }
    })
}

/// Calls an instance method on a local or remote object.
pub(crate) async fn invoke(ctx: &Ctx, target: &ObjectRef, method: u32, args: Vec<Value>) -> EngineResult<Value> {
    let eng = &ctx.eng;
    if !target.is_on(eng.name()) {
        return remote::invoke(ctx, target, method, args).await;
    }
    let cell = eng.object(target).ok_or_else(|| ctx.fault(FaultCode::NullReference, format!("no object {target}")))?;
    let acl = cell.borrow().acl.clone();
    if let Some(acl) = acl {
        eng.authorize(&ctx.queue.creds, Some(&acl), Privilege::Exec)?;
    }
    let ci = eng.class_info(&target.class)?;
    let args = eng.prepare_local_args(&ci.method(method)?.params, args)?;
    exec_method(ctx.clone(), target.class.clone(), method, Some(target.clone()), args).await
}

/// Allocates an instance in `space` of this host and runs its constructor.
pub(crate) async fn construct(ctx: &Ctx, key: &ClassKey, space: Space, args: Vec<Value>) -> EngineResult<ObjectRef> {
    let eng = &ctx.eng;
    let r = eng.alloc_instance(key, space)?;
    let ci = eng.class_info(key)?;
    if let Some(ctor) = ci.desc().ctor() {
        let args = eng.prepare_local_args(&ci.method(ctor)?.params, args)?;
        exec_method(ctx.clone(), key.clone(), ctor, Some(r.clone()), args).await?;
    }
    Ok(r)
}

pub(crate) async fn get_field(ctx: &Ctx, r: &ObjectRef, field: u32) -> EngineResult<Value> {
    let eng = &ctx.eng;
    if !r.is_on(eng.name()) {
        return remote::get_field(ctx, r, field).await;
    }
    let cell = eng.object(r).ok_or_else(|| ctx.fault(FaultCode::NullReference, format!("no object {r}")))?;
    let acl = cell.borrow().acl.clone();
    if let Some(acl) = acl {
        eng.authorize(&ctx.queue.creds, Some(&acl), Privilege::Read)?;
    }
    let v = cell.borrow().fields.get(field as usize).cloned();
    v.ok_or_else(|| EngineError::AccessViolation(format!("no field #{field}")))
}

pub(crate) async fn set_field(ctx: &Ctx, r: &ObjectRef, field: u32, v: Value) -> EngineResult<()> {
    let eng = &ctx.eng;
    if !r.is_on(eng.name()) {
        return remote::set_field(ctx, r, field, v).await;
    }
    let cell = eng.object(r).ok_or_else(|| ctx.fault(FaultCode::NullReference, format!("no object {r}")))?;
    let acl = cell.borrow().acl.clone();
    if let Some(acl) = acl {
        eng.authorize(&ctx.queue.creds, Some(&acl), Privilege::Write)?;
    }
    let mut o = cell.borrow_mut();
    let slot = o.fields.get_mut(field as usize).ok_or_else(|| EngineError::AccessViolation(format!("no field #{field}")))?;
    *slot = v;
    Ok(())
}

fn exec_block<'a>(ctx: &'a Ctx, code: &'a Code, frame: &'a mut Frame, stmts: &'a [Stmt]) -> BoxFut<'a, EngineResult<Flow>> {
    boxed(async move {
        for s in stmts {
            if let Flow::Ret(v) = exec_stmt(ctx, code, frame, s).await? {
                return Ok(Flow::Ret(v));
            }
        }
        Ok(Flow::Next)
    })
}

fn exec_stmt<'a>(ctx: &'a Ctx, code: &'a Code, frame: &'a mut Frame, s: &'a Stmt) -> BoxFut<'a, EngineResult<Flow>> {
    boxed(async move {
        match s {
            Stmt::Expr(e) => {
                eval(ctx, code, frame, e).await?;
            }
            Stmt::Let(slot, e) => {
                let v = coerce(eval(ctx, code, frame, e).await?, &e.ty);
                store_local(frame, *slot, v)?;
            }
            Stmt::If(c, t, f) => {
                let branch = if eval(ctx, code, frame, c).await?.truthy() { t } else { f };
                return exec_block(ctx, code, frame, branch).await;
            }
            Stmt::While(c, body) => {
                while eval(ctx, code, frame, c).await?.truthy() {
                    if let Flow::Ret(v) = exec_block(ctx, code, frame, body).await? {
                        return Ok(Flow::Ret(v));
                    }
                }
            }
            Stmt::For { init, cond, step, body } => {
                if let Flow::Ret(v) = exec_block(ctx, code, frame, init).await? {
                    return Ok(Flow::Ret(v));
                }
                loop {
                    if let Some(c) = cond {
                        if !eval(ctx, code, frame, c).await?.truthy() {
                            break;
                        }
                    }
                    if let Flow::Ret(v) = exec_block(ctx, code, frame, body).await? {
                        return Ok(Flow::Ret(v));
                    }
                    for e in step {
                        eval(ctx, code, frame, e).await?;
                    }
                }
            }
            Stmt::Return(e) => {
                let v = match e {
                    Some(e) => eval(ctx, code, frame, e).await?,
                    None => Value::Null,
                };
                return Ok(Flow::Ret(v));
            }
            Stmt::Block(b) => return exec_block(ctx, code, frame, b).await,
        }
        Ok(Flow::Next)
    })
}

fn store_local(frame: &mut Frame, slot: u32, v: Value) -> EngineResult<()> {
    let l = frame.locals.get_mut(slot as usize).ok_or_else(|| EngineError::Protocol(format!("bad local slot {slot}")))?;
    *l = v;
    Ok(())
}

async fn eval_all(ctx: &Ctx, code: &Code, frame: &mut Frame, es: &[Expr]) -> EngineResult<Vec<Value>> {
    let mut out = Vec::with_capacity(es.len());
    for e in es {
        out.push(eval(ctx, code, frame, e).await?);
    }
    Ok(out)
}

async fn eval_loc(ctx: &Ctx, code: &Code, frame: &mut Frame, p: &Place) -> EngineResult<Loc> {
    Ok(match p {
        Place::Local(s) => Loc::Local(*s),
        Place::Field { obj, field, .. } => {
            let o = eval(ctx, code, frame, obj).await?;
            Loc::Field(expect_ref(ctx, o)?, *field)
        }
        Place::Index { arr, idx } => {
            let a = eval(ctx, code, frame, arr).await?;
            let a = expect_array(ctx, a)?;
            let i = eval(ctx, code, frame, idx).await?.as_int();
            Loc::Index(a, i)
        }
    })
}

fn index_fault(ctx: &Ctx, i: i64, len: usize) -> EngineError {
    ctx.fault(FaultCode::IndexOutOfBounds, format!("index {i} out of bounds for length {len}"))
}

async fn load(ctx: &Ctx, frame: &Frame, loc: &Loc) -> EngineResult<Value> {
    match loc {
        Loc::Local(s) => frame.locals.get(*s as usize).cloned().ok_or_else(|| EngineError::Protocol(format!("bad local slot {s}"))),
        Loc::Field(r, f) => get_field(ctx, r, *f).await,
        Loc::Index(a, i) => {
            let a = a.borrow();
            usize::try_from(*i).ok().and_then(|u| a.get(u)).ok_or_else(|| index_fault(ctx, *i, a.len()))
        }
    }
}

async fn store(ctx: &Ctx, frame: &mut Frame, loc: &Loc, v: Value) -> EngineResult<()> {
    match loc {
        Loc::Local(s) => store_local(frame, *s, v),
        Loc::Field(r, f) => set_field(ctx, r, *f, v).await,
        Loc::Index(a, i) => {
            let mut a = a.borrow_mut();
            let len = a.len();
            if usize::try_from(*i).map(|u| a.set(u, v)).unwrap_or(false) {
                Ok(())
            } else {
                Err(index_fault(ctx, *i, len))
            }
        }
    }
}

fn arith(ctx: &Ctx, op: BinOp, a: i64, b: i64) -> EngineResult<i64> {
    Ok(match op {
        BinOp::Add => a.wrapping_add(b),
        BinOp::Sub => a.wrapping_sub(b),
        BinOp::Mul => a.wrapping_mul(b),
        BinOp::Div | BinOp::Rem if b == 0 => return Err(ctx.fault(FaultCode::ArithmeticFault, "division by zero")),
        BinOp::Div => a.wrapping_div(b),
        BinOp::Rem => a.wrapping_rem(b),
        _ => unreachable!("not arithmetic"),
    })
}

fn new_array(ctx: &Ctx, elem: &Ty, sizes: &[i64], extra_dims: u32) -> EngineResult<Value> {
    let n = sizes[0];
    if n < 0 {
        return Err(ctx.fault(FaultCode::NegativeArraySize, format!("array size {n}")));
    }
    let n = n as usize;
    if sizes.len() == 1 {
        let inner = if extra_dims == 0 { elem.clone() } else { Ty::array_of(elem.clone(), extra_dims) };
        return Ok(Value::array(ArrayData::new(&inner, n)));
    }
    let items = (0..n).map(|_| new_array(ctx, elem, &sizes[1..], extra_dims)).collect::<EngineResult<Vec<_>>>()?;
    Ok(Value::array(ArrayData::Ref(items)))
}

fn eval<'a>(ctx: &'a Ctx, code: &'a Code, frame: &'a mut Frame, e: &'a Expr) -> BoxFut<'a, EngineResult<Value>> {
    boxed(async move {
        let eng = &ctx.eng;
        Ok(match &e.kind {
            ExprKind::Int(i) => Value::Int(*i),
            ExprKind::Bool(b) => Value::Bool(*b),
            ExprKind::Char(c) => Value::Char(*c),
            ExprKind::Null => Value::Null,
            ExprKind::Str(i) => {
                let s = code.img.constants.get(*i as usize).ok_or_else(|| EngineError::Protocol(format!("bad constant {i}")))?;
                Value::str(s)
            }
            ExprKind::Local(s) => frame.locals.get(*s as usize).cloned().unwrap_or(Value::Null),
            ExprKind::This => frame.this.clone().map(Value::Ref).unwrap_or(Value::Null),
            ExprKind::ThisHost => Value::Ref(ObjectRef::host(eng.name())),
            ExprKind::Hosts => Value::Ref(eng.hosts_node(eng.name())),
            ExprKind::Field { obj, field, .. } => {
                let o = eval(ctx, code, frame, obj).await?;
                let r = expect_ref(ctx, o)?;
                get_field(ctx, &r, *field).await?
            }
            ExprKind::Index { arr, idx } => {
                let a = eval(ctx, code, frame, arr).await?;
                let a = expect_array(ctx, a)?;
                let i = eval(ctx, code, frame, idx).await?.as_int();
                let a = a.borrow();
                usize::try_from(i).ok().and_then(|u| a.get(u)).ok_or_else(|| index_fault(ctx, i, a.len()))?
            }
            ExprKind::Unary(op, x) => {
                let v = eval(ctx, code, frame, x).await?;
                match op {
                    UnOp::Neg => coerce(Value::Int(v.as_int().wrapping_neg()), &e.ty),
                    UnOp::Not => Value::Bool(!v.truthy()),
                }
            }
            ExprKind::Binary(op, l, r) => match op {
                BinOp::And => Value::Bool(eval(ctx, code, frame, l).await?.truthy() && eval(ctx, code, frame, r).await?.truthy()),
                BinOp::Or => Value::Bool(eval(ctx, code, frame, l).await?.truthy() || eval(ctx, code, frame, r).await?.truthy()),
                _ => {
                    let a = eval(ctx, code, frame, l).await?;
                    let b = eval(ctx, code, frame, r).await?;
                    match op {
                        BinOp::Concat => {
                            let mut out = Vec::new();
                            append_display(&mut out, &a);
                            append_display(&mut out, &b);
                            Value::str(&out)
                        }
                        BinOp::Eq => Value::Bool(a.same(&b)),
                        BinOp::Ne => Value::Bool(!a.same(&b)),
                        BinOp::Lt => Value::Bool(a.as_int() < b.as_int()),
                        BinOp::Le => Value::Bool(a.as_int() <= b.as_int()),
                        BinOp::Gt => Value::Bool(a.as_int() > b.as_int()),
                        BinOp::Ge => Value::Bool(a.as_int() >= b.as_int()),
                        _ => coerce(Value::Int(arith(ctx, *op, a.as_int(), b.as_int())?), &e.ty),
                    }
                }
            },
            ExprKind::Cond(c, t, f) => {
                if eval(ctx, code, frame, c).await?.truthy() {
                    eval(ctx, code, frame, t).await?
                } else {
                    eval(ctx, code, frame, f).await?
                }
            }
            ExprKind::Assign { place, op, value } => {
                let loc = eval_loc(ctx, code, frame, place).await?;
                let v = eval(ctx, code, frame, value).await?;
                let new = match op {
                    AssignOp::Set => coerce(v, &e.ty),
                    AssignOp::Add | AssignOp::Sub => {
                        let old = load(ctx, frame, &loc).await?;
                        let b = if *op == AssignOp::Add { v.as_int() } else { v.as_int().wrapping_neg() };
                        scalar_like(&old, old.as_int().wrapping_add(b))
                    }
                    AssignOp::Append => {
                        let old = load(ctx, frame, &loc).await?;
                        match &old {
                            Value::Array(a) if matches!(&*a.borrow(), ArrayData::Char(_)) => {
                                let mut extra = Vec::new();
                                append_display(&mut extra, &v);
                                if let ArrayData::Char(bytes) = &mut *a.borrow_mut() {
                                    bytes.extend_from_slice(&extra);
                                }
                                old.clone()
                            }
                            _ => {
                                let mut out = Vec::new();
                                append_display(&mut out, &v);
                                Value::str(&out)
                            }
                        }
                    }
                };
                store(ctx, frame, &loc, new.clone()).await?;
                new
            }
            ExprKind::IncDec { place, delta, prefix } => {
                let loc = eval_loc(ctx, code, frame, place).await?;
                let old = load(ctx, frame, &loc).await?;
                let new = scalar_like(&old, old.as_int().wrapping_add(*delta));
                store(ctx, frame, &loc, new.clone()).await?;
                if *prefix {
                    new
                } else {
                    old
                }
            }
            ExprKind::Call { recv, class, method, args } => {
                let key = code.key(*class);
                let is_static = eng.class_info(&key)?.method(*method)?.is_static();
                let target = match recv {
                    Some(r) => {
                        let v = eval(ctx, code, frame, r).await?;
                        Some(expect_ref(ctx, v)?)
                    }
                    None if !is_static => frame.this.clone(),
                    None => None,
                };
                let args = eval_all(ctx, code, frame, args).await?;
                match target {
                    Some(t) if !is_static => invoke(ctx, &t, *method, args).await?,
                    _ => {
                        let params = eng.class_info(&key)?.method(*method)?.params.clone();
                        let args = eng.prepare_local_args(&params, args)?;
                        exec_method(ctx.clone(), key, *method, None, args).await?
                    }
                }
            }
            ExprKind::New { class, args, placement, .. } => {
                let key = code.key(*class);
                let host = match placement {
                    Placement::Heap => None,
                    Placement::Partition(None) => Some(None),
                    Placement::Partition(Some(h)) => {
                        let v = eval(ctx, code, frame, h).await?;
                        Some(Some(expect_ref(ctx, v)?))
                    }
                };
                let args = eval_all(ctx, code, frame, args).await?;
                let r = match host {
                    None => construct(ctx, &key, Space::Heap, args).await?,
                    Some(Some(h)) if !h.is_on(eng.name()) => remote::create(ctx, &h.host, &key, args).await?,
                    Some(_) => construct(ctx, &key, Space::Partition(0), args).await?,
                };
                Value::Ref(r)
            }
            ExprKind::NewQueue { at } => {
                let host = match at {
                    Some(h) => {
                        let v = eval(ctx, code, frame, h).await?;
                        Some(expect_ref(ctx, v)?)
                    }
                    None => None,
                };
                match host {
                    Some(h) if !h.is_on(eng.name()) => Value::Ref(remote::create_queue(ctx, &h.host).await?),
                    _ => {
                        let q = eng.new_queue(ctx.queue.creds.clone());
                        Value::Ref(eng.queue_ref(&q))
                    }
                }
            }
            ExprKind::NewArray { elem, sizes, extra_dims } => {
                let sizes: Vec<i64> = eval_all(ctx, code, frame, sizes).await?.iter().map(Value::as_int).collect();
                new_array(ctx, elem, &sizes, *extra_dims)?
            }
            ExprKind::QueuedEval { queue, class, method, with_this, captures } => {
                let q = eval(ctx, code, frame, queue).await?;
                let q = expect_ref(ctx, q)?;
                let caps = eval_all(ctx, code, frame, captures).await?;
                let this = if *with_this { frame.this.clone() } else { None };
                queued_eval(ctx, &q, code.key(*class), *method, this, caps).await?
            }
            ExprKind::Post { queue, target, class: _, method, args } => {
                let q = eval(ctx, code, frame, queue).await?;
                let q = expect_ref(ctx, q)?;
                let t = eval(ctx, code, frame, target).await?;
                let t = expect_ref(ctx, t)?;
                let args = eval_all(ctx, code, frame, args).await?;
                post(ctx, &q, &t, *method, args).await?;
                Value::Null
            }
            ExprKind::Iterate { group, method, args, .. } => {
                let g = eval(ctx, code, frame, group).await?;
                let g = expect_ref(ctx, g)?;
                let args = eval_all(ctx, code, frame, args).await?;
                groups::iterate(ctx, g, *method, args).await?;
                Value::Null
            }
            ExprKind::Builtin { func, args: arg_exprs } => {
                let args = eval_all(ctx, code, frame, arg_exprs).await?;
                let tys: Vec<Ty> = arg_exprs.iter().map(|a| a.ty.clone()).collect();
                super::intrinsics::call(ctx, *func, args, &tys).await?
            }
        })
    })
}

fn queue_of(ctx: &Ctx, q: &ObjectRef) -> EngineResult<Rc<Queue>> {
    if q.class != ClassKey::Queue {
        return Err(EngineError::AccessViolation(format!("{q} is not a queue")));
    }
    ctx.eng.queue(q.oid).ok_or(EngineError::QueueClosed)
}

/// `q <=> expr`: runs the closure method on `q` and waits for its value.
pub(crate) async fn queued_eval(ctx: &Ctx, q: &ObjectRef, key: ClassKey, method: u32, this: Option<ObjectRef>, caps: Vec<Value>) -> EngineResult<Value> {
    if !q.is_on(ctx.eng.name()) {
        return remote::queued_eval(ctx, q, &key, method, this, caps).await;
    }
    let queue = queue_of(ctx, q)?;
    run_closure(ctx, queue, ctx.chain, key, method, this, caps).await
}

pub(crate) async fn run_closure(ctx: &Ctx, queue: Rc<Queue>, chain: u64, key: ClassKey, method: u32, this: Option<ObjectRef>, caps: Vec<Value>) -> EngineResult<Value> {
    if queue.current_chain() == Some(chain) {
        return Err(ctx.fault(FaultCode::QueueDeadlock, format!("queue {} waits on itself", queue.qid)));
    }
    let c2 = ctx.with_queue(queue.clone(), chain);
    let (job, rx) = reply_job(move || exec_method(c2, key, method, this, caps));
    ctx.eng.enqueue(&queue, chain, job)?;
    rx.await.unwrap_or(Err(EngineError::QueueClosed))
}

/// `q # target.m(args)`: enqueues the call on `q` without waiting for it.
pub(crate) async fn post(ctx: &Ctx, q: &ObjectRef, target: &ObjectRef, method: u32, args: Vec<Value>) -> EngineResult<()> {
    if !q.is_on(ctx.eng.name()) {
        return remote::post(ctx, q, target, method, args).await;
    }
    let queue = queue_of(ctx, q)?;
    let params = ctx.eng.class_info(&target.class)?.method(method)?.params.clone();
    let args = args
        .into_iter()
        .enumerate()
        .map(|(i, v)| if params.get(i).is_some_and(|p| p.copy) { ctx.eng.local_copy(&v) } else { Ok(v.snapshot()) })
        .collect::<EngineResult<Vec<_>>>()?;
    enqueue_call(&ctx.eng, queue, target.clone(), method, args)
}

/// Queues an invocation on a fresh chain; failures are only logged.
pub(crate) fn enqueue_call(eng: &Engine, queue: Rc<Queue>, target: ObjectRef, method: u32, args: Vec<Value>) -> EngineResult<()> {
    let chain = eng.fresh_id();
    let c2 = Ctx { eng: eng.clone(), queue: queue.clone(), chain };
    let job: super::queue::Job = Box::new(move || {
        boxed(async move {
            if let Err(e) = invoke(&c2, &target, method, args).await {
                let name = c2.eng.class_name(&target.class);
                c2.eng.log(format!("queued call {name}#{method} failed: {e}"));
            }
        })
    });
    eng.enqueue(&queue, chain, job)
}
