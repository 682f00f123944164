use super::interp::{expect_array, expect_ref, Ctx};
use super::remote;
use crate::error::{EngineError, EngineResult, FaultCode};
use crate::runpack::ir::{Builtin, Ty};
use crate::stdlib::{self, ExecError, Pipe};
use crate::value::{append_display, ArrayData, ClassKey, ObjectRef, Value};

fn bytes_of(v: &Value) -> Vec<u8> {
    let mut out = Vec::new();
    append_display(&mut out, v);
    out
}

fn exec_fault(ctx: &Ctx, e: ExecError) -> EngineError {
    match e {
        ExecError::HandleClosed(_) => ctx.eng.fault(FaultCode::HandleClosed, e.to_string()),
        other => ctx.eng.fault(FaultCode::ExecFailed, other.to_string()),
    }
}

fn host_of(ctx: &Ctx, v: Value) -> EngineResult<ObjectRef> {
    let r = expect_ref(ctx, v)?;
    if r.class != ClassKey::Host {
        return Err(EngineError::AccessViolation(format!("{r} is not a host")));
    }
    Ok(r)
}

/// Free intrinsic functions.
pub(crate) async fn call(ctx: &Ctx, f: Builtin, mut args: Vec<Value>, tys: &[Ty]) -> EngineResult<Value> {
    let eng = &ctx.eng;
    let mut arg = |i: usize| std::mem::replace(args.get_mut(i).expect("checked arity"), Value::Null);
    match f {
        Builtin::Print => {
            eng.write_out(&bytes_of(&arg(0)));
            Ok(Value::Null)
        }
        Builtin::Sizear => {
            let rank = tys.first().map(Ty::rank).unwrap_or(0) as i64;
            let dim = arg(1).as_int();
            if dim < 1 || dim > rank {
                return Err(eng.fault(FaultCode::BadDimension, format!("dimension {dim} of a rank-{rank} array")));
            }
            let mut a = expect_array(ctx, arg(0))?;
            for _ in 1..dim {
                let first = a.borrow().get(0);
                a = match first {
                    Some(v) => expect_array(ctx, v)?,
                    None => return Ok(Value::Int(0)),
                };
            }
            let n = a.borrow().len();
            Ok(Value::Int(n as i64))
        }
        Builtin::Hello => {
            let name = String::from_utf8_lossy(&bytes_of(&arg(0))).into_owned();
            if eng.knows_host(&name) {
                Ok(Value::Ref(ObjectRef::host(&name)))
            } else {
                Ok(Value::Null)
            }
        }
        Builtin::ExecOpen => {
            let cmd = bytes_of(&arg(0));
            let p = Pipe::open(&cmd).map_err(|e| exec_fault(ctx, e))?;
            Ok(Value::Int(eng.0.pipes.borrow_mut().insert(p)))
        }
        Builtin::ExecRead => {
            let h = arg(0).as_int();
            let buf = expect_array(ctx, arg(1))?;
            let max = arg(2).as_int().clamp(0, buf.borrow().len() as i64) as usize;
            let pipe = eng.0.pipes.borrow_mut().take(h).map_err(|e| exec_fault(ctx, e))?;
            let (pipe, chunk) = eng
                .runtime()
                .offload(move || {
                    let mut pipe = pipe;
                    let c = pipe.read(max);
                    (pipe, c)
                })
                .await;
            eng.0.pipes.borrow_mut().restore(h, pipe);
            let n = chunk.data.len();
            if let ArrayData::Char(b) = &mut *buf.borrow_mut() {
                b[..n].copy_from_slice(&chunk.data);
            } else {
                return Err(EngineError::AccessViolation("exec_read needs a char[] buffer".into()));
            }
            Ok(Value::array(ArrayData::Int(vec![n as i64, chunk.eof as i64, chunk.err as i64])))
        }
        Builtin::WriteStdout => {
            let buf = expect_array(ctx, arg(0))?;
            let len = arg(1).as_int();
            let b = buf.borrow();
            let ArrayData::Char(bytes) = &*b else {
                return Err(EngineError::AccessViolation("write_stdout needs a char[] buffer".into()));
            };
            let n = len.clamp(0, bytes.len() as i64) as usize;
            eng.write_out(&bytes[..n]);
            Ok(Value::Int(n as i64))
        }
        Builtin::ParseInt => Ok(Value::Int(stdlib::parse_int(&bytes_of(&arg(0))))),
        Builtin::HostName => {
            let h = host_of(ctx, arg(0))?;
            if h.is_on(eng.name()) {
                Ok(Value::str(eng.name().as_bytes()))
            } else {
                remote::host_name(ctx, &h.host).await
            }
        }
        Builtin::HostPrint => {
            let h = host_of(ctx, arg(0))?;
            let bytes = bytes_of(&arg(1));
            if h.is_on(eng.name()) {
                eng.write_out(&bytes);
            } else {
                remote::host_print(ctx, &h.host, bytes).await?;
            }
            Ok(Value::Null)
        }
        Builtin::HostChildren => Err(EngineError::AccessViolation("children is a method".into())),
    }
}

/// Standard-library methods implemented natively; `this` is the receiver.
pub(crate) async fn method_intrinsic(ctx: &Ctx, f: Builtin, this: Option<ObjectRef>, args: Vec<Value>) -> EngineResult<Value> {
    let eng = &ctx.eng;
    match f {
        Builtin::HostChildren => {
            let host = this.map(|t| t.host).unwrap_or_else(|| eng.name_rc());
            if &*host != eng.name() {
                return Err(EngineError::AccessViolation("children of a remote host node".into()));
            }
            let kids = eng.neighbors().iter().map(|n| Value::Ref(eng.hosts_node(n))).collect();
            Ok(Value::array(ArrayData::Ref(kids)))
        }
        other => {
            let tys: Vec<Ty> = Vec::new();
            call(ctx, other, args, &tys).await
        }
    }
}
