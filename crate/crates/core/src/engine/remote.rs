//! Remote operations: the calling side turns them into INVOKE requests, the
//! serving side authorizes and runs them.

use crate::error::{EngineError, EngineResult};
use crate::groups;
use crate::net::codec::{EncodeCtx, Mode, WireValues};
use crate::net::msg::{Invoke, NodeKey, Op};
use crate::net::FrameKind;
use crate::security::Privilege;
use crate::value::{ClassKey, ObjectRef, Space, Value};

use super::interp::{self, Ctx};
use super::marshal::ret_mode;
use super::{boxed, Engine};

async fn request(ctx: &Ctx, host: &str, op: Op, note: String) -> EngineResult<Value> {
    let inv = Invoke { creds: ctx.queue.creds.clone(), chain: ctx.chain, op };
    let reply = ctx.eng.request(host, FrameKind::Invoke, inv.encode(), &note).await?;
    let mut vals = ctx.eng.decode_from(host, &reply).await?;
    if vals.len() != 1 {
        return Err(EngineError::Protocol(format!("reply carries {} values", vals.len())));
    }
    Ok(vals.pop().unwrap_or(Value::Null))
}

fn not_heap(r: &ObjectRef) -> EngineResult<()> {
    if r.space == Space::Heap {
        return Err(EngineError::AccessViolation(format!("{r} is private to its host")));
    }
    Ok(())
}

fn method_note(eng: &Engine, verb: &str, class: &ClassKey, method: u32) -> String {
    let m = eng.class_info(class).ok().and_then(|ci| ci.desc().methods.get(method as usize).map(|m| m.name.clone()));
    format!("{verb} {}.{}", eng.class_name(class), m.unwrap_or_else(|| format!("#{method}")))
}

pub(crate) async fn invoke(ctx: &Ctx, target: &ObjectRef, method: u32, args: Vec<Value>) -> EngineResult<Value> {
    not_heap(target)?;
    let eng = &ctx.eng;
    let ci = eng.class_info(&target.class)?;
    let bytes = eng.encode_args(&ci.method(method)?.params, &args)?;
    let note = method_note(eng, "invoke", &target.class, method);
    request(ctx, &target.host, Op::Invoke { target: eng.wire_ref(target), method, args: bytes }, note).await
}

pub(crate) async fn create(ctx: &Ctx, host: &str, key: &ClassKey, args: Vec<Value>) -> EngineResult<ObjectRef> {
    let eng = &ctx.eng;
    let ci = eng.class_info(key)?;
    let bytes = match ci.desc().ctor() {
        Some(c) => eng.encode_args(&ci.method(c)?.params, &args)?,
        None => eng.encode_args(&[], &args)?,
    };
    let note = format!("create {}", ci.desc().name);
    let v = request(ctx, host, Op::Create { class: eng.wire_class(key), partition: 0, args: bytes }, note).await?;
    interp::expect_ref(ctx, v)
}

pub(crate) async fn create_queue(ctx: &Ctx, host: &str) -> EngineResult<ObjectRef> {
    let v = request(ctx, host, Op::CreateQueue, "create queue".into()).await?;
    interp::expect_ref(ctx, v)
}

fn field_note(eng: &Engine, verb: &str, r: &ObjectRef, field: u32) -> String {
    let f = eng.class_info(&r.class).ok().and_then(|ci| ci.desc().fields.get(field as usize).map(|f| f.name.clone()));
    format!("{verb} {}.{}", eng.class_name(&r.class), f.unwrap_or_else(|| format!("#{field}")))
}

pub(crate) async fn get_field(ctx: &Ctx, r: &ObjectRef, field: u32) -> EngineResult<Value> {
    not_heap(r)?;
    let note = field_note(&ctx.eng, "get", r, field);
    request(ctx, &r.host, Op::GetField { target: ctx.eng.wire_ref(r), field }, note).await
}

pub(crate) async fn set_field(ctx: &Ctx, r: &ObjectRef, field: u32, v: Value) -> EngineResult<()> {
    not_heap(r)?;
    let eng = &ctx.eng;
    let value = eng.encode(&[(v, Mode::Share)])?;
    let note = field_note(eng, "set", r, field);
    request(ctx, &r.host, Op::SetField { target: eng.wire_ref(r), field, value }, note).await?;
    Ok(())
}

pub(crate) async fn queued_eval(ctx: &Ctx, q: &ObjectRef, key: &ClassKey, method: u32, this: Option<ObjectRef>, caps: Vec<Value>) -> EngineResult<Value> {
    let eng = &ctx.eng;
    let params = eng.class_info(key)?.method(method)?.params.clone();
    let captures = eng.encode_args(&params, &caps)?;
    let this = this.map(|t| eng.wire_ref(&t));
    let note = method_note(eng, "eval", key, method);
    request(ctx, &q.host, Op::QueuedEval { qid: q.oid, class: eng.wire_class(key), method, this, captures }, note).await
}

pub(crate) async fn post(ctx: &Ctx, q: &ObjectRef, target: &ObjectRef, method: u32, args: Vec<Value>) -> EngineResult<()> {
    let eng = &ctx.eng;
    let ci = eng.class_info(&target.class)?;
    let bytes = eng.encode_args(&ci.method(method)?.params, &args)?;
    let note = method_note(eng, "post", &target.class, method);
    request(ctx, &q.host, Op::Post { qid: q.oid, target: eng.wire_ref(target), method, args: bytes }, note).await?;
    Ok(())
}

pub(crate) async fn iterate(ctx: &Ctx, node: &ObjectRef, method: u32, args: &[Value], traversal: u64, visited: Vec<NodeKey>) -> EngineResult<()> {
    not_heap(node)?;
    let eng = &ctx.eng;
    let ci = eng.class_info(&node.class)?;
    let bytes = eng.encode_args(&ci.method(method)?.params, args)?;
    let note = method_note(eng, "iterate", &node.class, method);
    let op = Op::Iterate { node: eng.wire_ref(node), method, args: bytes, traversal, visited };
    request(ctx, &node.host, op, note).await?;
    Ok(())
}

pub(crate) async fn host_name(ctx: &Ctx, host: &str) -> EngineResult<Value> {
    request(ctx, host, Op::HostName, "host name".into()).await
}

pub(crate) async fn host_print(ctx: &Ctx, host: &str, bytes: Vec<u8>) -> EngineResult<()> {
    request(ctx, host, Op::HostPrint { bytes }, "host print".into()).await?;
    Ok(())
}

// ---- serving side ----------------------------------------------------------------

fn reply(eng: &Engine, v: Value, mode: Mode) -> EngineResult<Vec<u8>> {
    eng.encode(&[(v, mode)])
}

fn local_target(eng: &Engine, r: &ObjectRef) -> EngineResult<crate::value::ObjectCell> {
    if !r.is_on(eng.name()) {
        return Err(EngineError::Protocol(format!("{r} is not on {}", eng.name())));
    }
    not_heap(r)?;
    eng.object(r).ok_or_else(|| EngineError::AccessViolation(format!("no object {r}")))
}

/// Handles one INVOKE payload from `src`; the result is the REPLY payload.
pub(crate) async fn serve(eng: &Engine, src: &str, payload: Vec<u8>) -> EngineResult<Vec<u8>> {
    let inv = Invoke::decode(&payload).map_err(|e| EngineError::Protocol(e.to_string()))?;
    let mut classes = inv.op.classes();
    let values: &[u8] = match &inv.op {
        Op::Create { args, .. } | Op::Invoke { args, .. } | Op::Post { args, .. } | Op::Iterate { args, .. } => args,
        Op::SetField { value, .. } => value,
        Op::QueuedEval { captures, .. } => captures,
        _ => &[],
    };
    let wire = if values.is_empty() { WireValues::default() } else { eng.read_wire(values)? };
    wire.classes(&mut classes);
    eng.ensure_classes(src, &classes).await?;

    let creds = inv.creds;
    let chain = inv.chain;
    let service = eng.service_queue();
    let ctx = Ctx { eng: eng.clone(), queue: service.clone(), chain };
    match inv.op {
        Op::Create { class, partition, .. } => {
            eng.authorize(&creds, None, Privilege::Create)?;
            let key = eng.resolve_wire_class(&class)?;
            if !eng.class_info(&key)?.desc().is_external() {
                return Err(EngineError::AccessViolation(format!("class {} is not external", eng.class_name(&key))));
            }
            let args = eng.materialize(&wire)?;
            let c2 = ctx.clone();
            let r = eng
                .run_on(&service, chain, move || boxed(async move { interp::construct(&c2, &key, Space::Partition(partition), args).await }))
                .await?;
            reply(eng, Value::Ref(r), Mode::Share)
        }
        Op::CreateQueue => {
            eng.authorize(&creds, None, Privilege::Create)?;
            let q = eng.new_queue(creds);
            reply(eng, Value::Ref(eng.queue_ref(&q)), Mode::Share)
        }
        Op::Invoke { target, method, .. } => {
            let r = eng.resolve_wire_ref(&target)?;
            let cell = local_target(eng, &r)?;
            let acl = cell.borrow().acl.clone();
            eng.authorize(&creds, acl.as_ref(), Privilege::Exec)?;
            let ci = eng.class_info(&r.class)?;
            let m = ci.method(method)?;
            if !m.has(crate::runpack::ir::method_flags::EXTERNAL) {
                return Err(EngineError::AccessViolation(format!("{}.{} is not external", ci.desc().name, m.name)));
            }
            let mode = ret_mode(m);
            let args = eng.materialize(&wire)?;
            let c2 = ctx.clone();
            let v = eng.run_on(&service, chain, move || interp::exec_method(c2, r.class.clone(), method, Some(r), args)).await?;
            reply(eng, v, mode)
        }
        Op::GetField { target, field } => {
            let r = eng.resolve_wire_ref(&target)?;
            let cell = local_target(eng, &r)?;
            let acl = cell.borrow().acl.clone();
            eng.authorize(&creds, acl.as_ref(), Privilege::Read)?;
            check_external_field(eng, &r, field)?;
            let v = cell.borrow().fields.get(field as usize).cloned().unwrap_or(Value::Null);
            reply(eng, v, Mode::Share)
        }
        Op::SetField { target, field, .. } => {
            let r = eng.resolve_wire_ref(&target)?;
            let cell = local_target(eng, &r)?;
            let acl = cell.borrow().acl.clone();
            eng.authorize(&creds, acl.as_ref(), Privilege::Write)?;
            check_external_field(eng, &r, field)?;
            let v = eng.materialize(&wire)?.pop().unwrap_or(Value::Null);
            if let Some(slot) = cell.borrow_mut().fields.get_mut(field as usize) {
                *slot = v;
            }
            reply(eng, Value::Null, Mode::Share)
        }
        Op::QueuedEval { qid, class, method, this, .. } => {
            eng.authorize(&creds, None, Privilege::Exec)?;
            let queue = eng.queue(qid).ok_or(EngineError::QueueClosed)?;
            let key = eng.resolve_wire_class(&class)?;
            let this = this.map(|t| eng.resolve_wire_ref(&t)).transpose()?;
            let caps = eng.materialize(&wire)?;
            let v = interp::run_closure(&ctx, queue, chain, key, method, this, caps).await?;
            reply(eng, v, Mode::Share)
        }
        Op::Post { qid, target, method, .. } => {
            eng.authorize(&creds, None, Privilege::Exec)?;
            let queue = eng.queue(qid).ok_or(EngineError::QueueClosed)?;
            let t = eng.resolve_wire_ref(&target)?;
            let args = eng.materialize(&wire)?;
            interp::enqueue_call(eng, queue, t, method, args)?;
            reply(eng, Value::Null, Mode::Share)
        }
        Op::Iterate { node, method, traversal, visited, .. } => {
            let r = eng.resolve_wire_ref(&node)?;
            let cell = local_target(eng, &r)?;
            let acl = cell.borrow().acl.clone();
            eng.authorize(&creds, acl.as_ref(), Privilege::Exec)?;
            let args = eng.materialize(&wire)?;
            let failures = groups::visit(ctx, traversal, r, method, args, visited, true).await;
            if failures.is_empty() {
                reply(eng, Value::Null, Mode::Share)
            } else {
                Err(EngineError::PartialFailure(failures))
            }
        }
        Op::HostName => {
            eng.authorize(&creds, None, Privilege::Read)?;
            reply(eng, Value::str(eng.name().as_bytes()), Mode::Share)
        }
        Op::HostPrint { bytes } => {
            eng.authorize(&creds, None, Privilege::Exec)?;
            eng.write_out(&bytes);
            reply(eng, Value::Null, Mode::Share)
        }
    }
}

fn check_external_field(eng: &Engine, r: &ObjectRef, field: u32) -> EngineResult<()> {
    let ci = eng.class_info(&r.class)?;
    match ci.desc().fields.get(field as usize) {
        Some(f) if f.external => Ok(()),
        Some(f) => Err(EngineError::AccessViolation(format!("{}.{} is not external", ci.desc().name, f.name))),
        None => Err(EngineError::AccessViolation(format!("no field #{field}"))),
    }
}
