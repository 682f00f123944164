//! One-shot events: a method call that fires once every argument slot is filled.

use std::rc::Rc;

use crate::error::{EngineError, EngineResult};
use crate::net::codec::Mode;
use crate::net::msg::EventPost;
use crate::net::FrameKind;
use crate::security::{Privilege, Sid};
use crate::value::{ObjectRef, Value};

use super::queue::Queue;
use super::{bump, interp, Engine};

pub(crate) struct EventRec {
    queue: Rc<Queue>,
    target: ObjectRef,
    method: u32,
    slots: Vec<Option<Value>>,
    fired: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventState {
    Pending,
    Fired,
}

impl Engine {
    /// Registers an event that will call `target.method` on `queue` once all
    /// `arity` slots are filled. `arity` must match the method's parameter count.
    pub fn create_event(&self, queue: &Rc<Queue>, target: &ObjectRef, method: &str, arity: u32) -> EngineResult<u64> {
        let ci = self.class_info(&target.class)?;
        let mi = ci.desc().method_index(method).ok_or_else(|| EngineError::AccessViolation(format!("no method {method}")))?;
        let params = ci.method(mi)?.params.len();
        if params != arity as usize {
            return Err(EngineError::Protocol(format!("event arity {arity} does not match {method}/{params}")));
        }
        let id = {
            let mut evs = self.0.events.borrow_mut();
            let id = evs.keys().next_back().map_or(1, |k| k + 1);
            evs.insert(id, EventRec { queue: queue.clone(), target: target.clone(), method: mi, slots: vec![None; arity as usize], fired: false });
            id
        };
        if arity == 0 {
            self.fire(id)?;
        }
        Ok(id)
    }

    /// Fills one slot of a local event. The fill that completes the event fires it.
    pub fn fill_event(&self, id: u64, slot: u32, value: Value) -> EngineResult<EventState> {
        let complete = {
            let mut evs = self.0.events.borrow_mut();
            let rec = evs.get_mut(&id).ok_or(EngineError::UnknownEvent(id))?;
            let s = rec.slots.get_mut(slot as usize).ok_or(EngineError::SlotOutOfRange(slot))?;
            if s.is_some() || rec.fired {
                return Err(EngineError::SlotAlreadyFilled(slot));
            }
            *s = Some(value);
            rec.slots.iter().all(Option::is_some)
        };
        if complete {
            self.fire(id)?;
            Ok(EventState::Fired)
        } else {
            Ok(EventState::Pending)
        }
    }

    fn fire(&self, id: u64) -> EngineResult<()> {
        let (queue, target, method, args) = {
            let mut evs = self.0.events.borrow_mut();
            let rec = evs.get_mut(&id).ok_or(EngineError::UnknownEvent(id))?;
            if rec.fired {
                return Ok(());
            }
            rec.fired = true;
            let args = rec.slots.iter_mut().map(|s| s.clone().unwrap_or(Value::Null)).collect();
            (rec.queue.clone(), rec.target.clone(), rec.method, args)
        };
        bump(&self.0.counters.events_fired);
        interp::enqueue_call(self, queue, target, method, args)
    }

    /// Fills a slot of an event owned by `host`, locally or with an EVENT_POST.
    pub async fn post_event(&self, host: &str, id: u64, slot: u32, value: Value) -> EngineResult<EventState> {
        if host == self.name() {
            return self.fill_event(id, slot, value);
        }
        let bytes = self.encode(&[(value, Mode::Copy)])?;
        let payload = EventPost { event: id, slot, value: bytes }.encode();
        let reply = self.request(host, FrameKind::EventPost, payload, &format!("event {id}[{slot}]")).await?;
        match reply.first() {
            Some(1) => Ok(EventState::Fired),
            Some(0) => Ok(EventState::Pending),
            _ => Err(EngineError::Protocol("bad event reply".into())),
        }
    }
}

pub(crate) async fn serve_post(eng: &Engine, src: &str, payload: Vec<u8>) -> EngineResult<Vec<u8>> {
    let p = EventPost::decode(&payload).map_err(|e| EngineError::Protocol(e.to_string()))?;
    eng.authorize(&[Sid::ANONYMOUS], None, Privilege::Exec)?;
    let v = eng.decode_from(src, &p.value).await?.pop().unwrap_or(Value::Null);
    let state = eng.fill_event(p.event, p.slot, v)?;
    Ok(vec![(state == EventState::Fired) as u8])
}
