//! Single-threaded cooperative executor with a virtual or real millisecond clock.
//!
//! All engine work runs on one of these. In simulation every host shares one
//! executor driven by a virtual clock, so a run is a pure function of its inputs
//! and the scheduling seed. Over TCP each node owns an executor on its own thread
//! and the clock is wall time.

use std::cell::{Cell, RefCell};
use std::collections::{BTreeMap, VecDeque};
use std::future::Future;
use std::pin::Pin;
use std::rc::Rc;
use std::sync::{Arc, Condvar, Mutex};
use std::task::{Context, Poll, Wake, Waker};
use std::time::{Duration, Instant};

use futures::future::LocalBoxFuture;
use futures::FutureExt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Tasks and timers tagged with a group can be dropped together (used to kill a host).
pub type TaskGroup = u32;
pub const NO_GROUP: TaskGroup = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Policy {
    /// Run ready tasks in wake order.
    Fifo,
    /// Pick the next ready task with a seeded RNG.
    Seeded(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClockKind {
    Virtual,
    Real,
}

/// Returned when the executor has nothing left to do but the awaited future is unfinished.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("no runnable work remains and the awaited task has not finished")]
pub struct Stalled;

type TaskKey = u64;

fn key(index: usize, gen: u32) -> TaskKey {
    ((gen as u64) << 32) | index as u64
}

fn split(k: TaskKey) -> (usize, u32) {
    ((k & 0xffff_ffff) as usize, (k >> 32) as u32)
}

struct ReadyShared {
    queue: Mutex<VecDeque<TaskKey>>,
    cv: Condvar,
}

struct TaskWaker {
    key: TaskKey,
    shared: Arc<ReadyShared>,
}

impl Wake for TaskWaker {
    fn wake(self: Arc<Self>) {
        self.wake_by_ref()
    }

    fn wake_by_ref(self: &Arc<Self>) {
        self.shared.queue.lock().expect("ready queue").push_back(self.key);
        self.shared.cv.notify_one();
    }
}

struct Slot {
    gen: u32,
    fut: Option<LocalBoxFuture<'static, ()>>,
    group: TaskGroup,
    live: bool,
    scheduled: bool,
}

enum TimerAction {
    Wake(Waker),
    Call(Box<dyn FnOnce()>),
}

struct TimerEntry {
    action: TimerAction,
    foreground: bool,
    group: TaskGroup,
}

struct Inner {
    slots: RefCell<Vec<Slot>>,
    free: RefCell<Vec<usize>>,
    ready: RefCell<VecDeque<TaskKey>>,
    shared: Arc<ReadyShared>,
    timers: RefCell<BTreeMap<(u64, u64), TimerEntry>>,
    timer_seq: Cell<u64>,
    foreground_timers: Cell<usize>,
    clock: ClockKind,
    virtual_now: Cell<u64>,
    start: Instant,
    rng: RefCell<Option<ChaCha8Rng>>,
}

/// Cloneable handle to an executor. Not `Send`: it stays on the thread that created it.
#[derive(Clone)]
pub struct Handle {
    inner: Rc<Inner>,
}

impl Handle {
    pub fn new(clock: ClockKind, policy: Policy) -> Handle {
        let rng = match policy {
            Policy::Fifo => None,
            Policy::Seeded(s) => Some(ChaCha8Rng::seed_from_u64(s)),
        };
        Handle {
            inner: Rc::new(Inner {
                slots: RefCell::new(Vec::new()),
                free: RefCell::new(Vec::new()),
                ready: RefCell::new(VecDeque::new()),
                shared: Arc::new(ReadyShared { queue: Mutex::new(VecDeque::new()), cv: Condvar::new() }),
                timers: RefCell::new(BTreeMap::new()),
                timer_seq: Cell::new(0),
                foreground_timers: Cell::new(0),
                clock,
                virtual_now: Cell::new(0),
                start: Instant::now(),
                rng: RefCell::new(rng),
            }),
        }
    }

    pub fn clock(&self) -> ClockKind {
        self.inner.clock
    }

    pub fn is_virtual(&self) -> bool {
        self.inner.clock == ClockKind::Virtual
    }

    /// Milliseconds since the executor was created (virtual or wall).
    pub fn now(&self) -> u64 {
        match self.inner.clock {
            ClockKind::Virtual => self.inner.virtual_now.get(),
            ClockKind::Real => self.inner.start.elapsed().as_millis() as u64,
        }
    }

    pub fn spawn(&self, fut: impl Future<Output = ()> + 'static) {
        self.spawn_in(NO_GROUP, fut)
    }

    pub fn spawn_in(&self, group: TaskGroup, fut: impl Future<Output = ()> + 'static) {
        let fut = fut.boxed_local();
        let index = self.inner.free.borrow_mut().pop();
        let mut slots = self.inner.slots.borrow_mut();
        let index = match index {
            Some(i) => {
                let s = &mut slots[i];
                s.gen = s.gen.wrapping_add(1);
                s.fut = Some(fut);
                s.group = group;
                s.live = true;
                s.scheduled = true;
                i
            }
            None => {
                slots.push(Slot { gen: 0, fut: Some(fut), group, live: true, scheduled: true });
                slots.len() - 1
            }
        };
        let k = key(index, slots[index].gen);
        drop(slots);
        self.inner.ready.borrow_mut().push_back(k);
    }

    /// Spawns a task and returns a future for its output. Dropping the returned
    /// future does not cancel the task.
    pub fn spawn_with_result<T: 'static>(&self, group: TaskGroup, fut: impl Future<Output = T> + 'static) -> impl Future<Output = Option<T>> {
        let (tx, rx) = futures::channel::oneshot::channel();
        self.spawn_in(group, async move {
            let _ = tx.send(fut.await);
        });
        rx.map(|r| r.ok())
    }

    /// Drops every task and timer of `group`.
    pub fn kill_group(&self, group: TaskGroup) {
        let mut doomed: Vec<LocalBoxFuture<'static, ()>> = Vec::new();
        {
            let mut slots = self.inner.slots.borrow_mut();
            let mut free = self.inner.free.borrow_mut();
            for (i, s) in slots.iter_mut().enumerate() {
                if s.live && s.group == group {
                    s.live = false;
                    if let Some(f) = s.fut.take() {
                        doomed.push(f);
                        free.push(i);
                    }
                    // A task being polled right now is released when its poll returns.
                }
            }
        }
        let mut dead_timers = Vec::new();
        {
            let mut timers = self.inner.timers.borrow_mut();
            let keys: Vec<_> = timers.iter().filter(|(_, t)| t.group == group && group != NO_GROUP).map(|(k, _)| *k).collect();
            for k in keys {
                if let Some(t) = timers.remove(&k) {
                    if t.foreground {
                        self.inner.foreground_timers.set(self.inner.foreground_timers.get() - 1);
                    }
                    dead_timers.push(t);
                }
            }
        }
        drop(doomed);
        drop(dead_timers);
    }

    fn add_timer(&self, at: u64, action: TimerAction, foreground: bool, group: TaskGroup) -> (u64, u64) {
        let seq = self.inner.timer_seq.get();
        self.inner.timer_seq.set(seq + 1);
        if foreground {
            self.inner.foreground_timers.set(self.inner.foreground_timers.get() + 1);
        }
        self.inner.timers.borrow_mut().insert((at, seq), TimerEntry { action, foreground, group });
        self.inner.shared.cv.notify_one();
        (at, seq)
    }

    fn cancel_timer(&self, id: (u64, u64)) {
        let removed = self.inner.timers.borrow_mut().remove(&id);
        if let Some(t) = removed {
            if t.foreground {
                self.inner.foreground_timers.set(self.inner.foreground_timers.get() - 1);
            }
        }
    }

    /// Runs `f` at absolute time `at`. Background callbacks do not keep a virtual run alive.
    pub fn call_at(&self, at: u64, foreground: bool, group: TaskGroup, f: impl FnOnce() + 'static) {
        self.add_timer(at, TimerAction::Call(Box::new(f)), foreground, group);
    }

    pub fn sleep(&self, ms: u64) -> Sleep {
        Sleep { handle: self.clone(), deadline: self.now().saturating_add(ms), timer: None, foreground: true }
    }

    /// A sleep that does not keep a virtual run alive (periodic housekeeping).
    pub fn sleep_background(&self, ms: u64) -> Sleep {
        Sleep { handle: self.clone(), deadline: self.now().saturating_add(ms), timer: None, foreground: false }
    }

    /// Resolves to `None` if `fut` has not finished within `ms`.
    pub async fn timeout<F: Future>(&self, ms: u64, fut: F) -> Option<F::Output> {
        let sleep = self.sleep(ms);
        futures::pin_mut!(fut);
        futures::pin_mut!(sleep);
        match futures::future::select(fut, sleep).await {
            futures::future::Either::Left((v, _)) => Some(v),
            futures::future::Either::Right(_) => None,
        }
    }

    /// Runs blocking work. Inline under a virtual clock; on a helper thread otherwise.
    pub async fn offload<T: Send + 'static>(&self, f: impl FnOnce() -> T + Send + 'static) -> T {
        match self.inner.clock {
            ClockKind::Virtual => f(),
            ClockKind::Real => {
                let (tx, rx) = futures::channel::oneshot::channel();
                std::thread::spawn(move || {
                    let _ = tx.send(f());
                });
                rx.await.expect("offloaded work panicked")
            }
        }
    }

    fn drain_wakes(&self) {
        let woken: Vec<TaskKey> = self.inner.shared.queue.lock().expect("ready queue").drain(..).collect();
        if woken.is_empty() {
            return;
        }
        let mut slots = self.inner.slots.borrow_mut();
        let mut ready = self.inner.ready.borrow_mut();
        for k in woken {
            let (i, gen) = split(k);
            if let Some(s) = slots.get_mut(i) {
                if s.live && s.gen == gen && !s.scheduled {
                    s.scheduled = true;
                    ready.push_back(k);
                }
            }
        }
    }

    fn pick_ready(&self) -> Option<TaskKey> {
        let mut ready = self.inner.ready.borrow_mut();
        if ready.is_empty() {
            return None;
        }
        let mut rng = self.inner.rng.borrow_mut();
        match rng.as_mut() {
            None => ready.pop_front(),
            Some(r) => {
                let i = r.gen_range(0..ready.len());
                ready.remove(i)
            }
        }
    }

    fn poll_task(&self, k: TaskKey) {
        let (i, gen) = split(k);
        let fut = {
            let mut slots = self.inner.slots.borrow_mut();
            let Some(s) = slots.get_mut(i) else { return };
            if !s.live || s.gen != gen {
                return;
            }
            s.scheduled = false;
            s.fut.take()
        };
        let Some(mut fut) = fut else { return };
        let waker = Waker::from(Arc::new(TaskWaker { key: k, shared: self.inner.shared.clone() }));
        let mut cx = Context::from_waker(&waker);
        let done = fut.as_mut().poll(&mut cx).is_ready();
        let mut slots = self.inner.slots.borrow_mut();
        let s = &mut slots[i];
        if done || !s.live {
            s.live = false;
            s.fut = None;
            drop(slots);
            self.inner.free.borrow_mut().push(i);
            drop(fut);
        } else {
            s.fut = Some(fut);
        }
    }

    /// Fires every timer due at or before the current time. Returns whether any fired.
    fn fire_due(&self) -> bool {
        let now = self.now();
        let mut fired = false;
        loop {
            let entry = {
                let mut timers = self.inner.timers.borrow_mut();
                match timers.first_key_value() {
                    Some((&(at, seq), _)) if at <= now => timers.remove(&(at, seq)),
                    _ => None,
                }
            };
            let Some(t) = entry else { break };
            fired = true;
            if t.foreground {
                self.inner.foreground_timers.set(self.inner.foreground_timers.get() - 1);
            }
            match t.action {
                TimerAction::Wake(w) => w.wake(),
                TimerAction::Call(f) => f(),
            }
        }
        fired
    }

    fn next_timer(&self) -> Option<u64> {
        self.inner.timers.borrow().first_key_value().map(|(&(at, _), _)| at)
    }

    /// One scheduling step. Returns false when nothing can make progress without
    /// outside input (virtual clock: no ready task and no foreground timer).
    fn step(&self, wait: bool) -> bool {
        self.drain_wakes();
        if self.fire_due() {
            self.drain_wakes();
        }
        if let Some(k) = self.pick_ready() {
            self.poll_task(k);
            return true;
        }
        match self.inner.clock {
            ClockKind::Virtual => {
                if self.inner.foreground_timers.get() == 0 {
                    return false;
                }
                let at = self.next_timer().expect("foreground timer present");
                if at > self.inner.virtual_now.get() {
                    self.inner.virtual_now.set(at);
                }
                self.fire_due();
                true
            }
            ClockKind::Real => {
                if !wait {
                    return false;
                }
                let q = self.inner.shared.queue.lock().expect("ready queue");
                if !q.is_empty() {
                    return true;
                }
                let timeout = match self.next_timer() {
                    Some(at) => Duration::from_millis(at.saturating_sub(self.now())),
                    None => Duration::from_millis(200),
                };
                let _ = self.inner.shared.cv.wait_timeout(q, timeout).expect("ready queue");
                true
            }
        }
    }

    /// Drives the executor until `fut` completes.
    pub fn block_on<F: Future + 'static>(&self, fut: F) -> Result<F::Output, Stalled>
    where
        F::Output: 'static,
    {
        let out: Rc<RefCell<Option<F::Output>>> = Rc::new(RefCell::new(None));
        let slot = out.clone();
        self.spawn(async move {
            let v = fut.await;
            *slot.borrow_mut() = Some(v);
        });
        loop {
            if let Some(v) = out.borrow_mut().take() {
                return Ok(v);
            }
            if !self.step(true) {
                return Err(Stalled);
            }
        }
    }

    /// Virtual clock: runs until no task is ready and no foreground timer is pending.
    /// Real clock: runs until no task is ready and nothing is due.
    pub fn run_until_quiescent(&self) {
        while self.step(false) {}
    }

    /// Virtual clock: processes everything due up to `tick`, then sets the clock to `tick`.
    pub fn run_until(&self, tick: u64) {
        loop {
            self.drain_wakes();
            self.fire_due();
            self.drain_wakes();
            if let Some(k) = self.pick_ready() {
                self.poll_task(k);
                continue;
            }
            match self.next_timer() {
                Some(at) if at <= tick => self.inner.virtual_now.set(at.max(self.inner.virtual_now.get())),
                _ => break,
            }
        }
        if self.inner.clock == ClockKind::Virtual && self.inner.virtual_now.get() < tick {
            self.inner.virtual_now.set(tick);
        }
    }

    /// Real clock: drives the executor until `done()` holds or `limit` elapses.
    pub fn run_while(&self, limit: Duration, mut done: impl FnMut() -> bool) -> bool {
        let start = Instant::now();
        while !done() {
            if start.elapsed() > limit {
                return false;
            }
            if !self.step(true) && self.inner.clock == ClockKind::Virtual {
                return done();
            }
        }
        true
    }

    pub fn live_tasks(&self) -> usize {
        self.inner.slots.borrow().iter().filter(|s| s.live).count()
    }

    /// A `Send` waker-side handle that external threads can use to nudge a real-clock loop.
    pub fn notifier(&self) -> Notifier {
        Notifier { shared: self.inner.shared.clone() }
    }
}

/// Wakes a sleeping real-clock executor from another thread.
#[derive(Clone)]
pub struct Notifier {
    shared: Arc<ReadyShared>,
}

impl Notifier {
    pub fn notify(&self) {
        let _q = self.shared.queue.lock().expect("ready queue");
        self.shared.cv.notify_one();
    }
}

pub struct Sleep {
    handle: Handle,
    deadline: u64,
    timer: Option<(u64, u64)>,
    foreground: bool,
}

impl Future for Sleep {
    type Output = ();

    fn poll(mut self: Pin<&mut Self>, cx: &mut Context<'_>) -> Poll<()> {
        if self.handle.now() >= self.deadline {
            if let Some(t) = self.timer.take() {
                self.handle.cancel_timer(t);
            }
            return Poll::Ready(());
        }
        if let Some(t) = self.timer.take() {
            self.handle.cancel_timer(t);
        }
        let id = self.handle.add_timer(self.deadline, TimerAction::Wake(cx.waker().clone()), self.foreground, NO_GROUP);
        self.timer = Some(id);
        Poll::Pending
    }
}

impl Drop for Sleep {
    fn drop(&mut self) {
        if let Some(t) = self.timer.take() {
            self.handle.cancel_timer(t);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn virtual_sleep_advances_clock_without_waiting() {
        let h = Handle::new(ClockKind::Virtual, Policy::Fifo);
        let h2 = h.clone();
        let t = h
            .block_on(async move {
                h2.sleep(30_000).await;
                h2.now()
            })
            .unwrap();
        assert_eq!(t, 30_000);
    }

    #[test]
    fn background_timers_do_not_keep_run_alive() {
        let h = Handle::new(ClockKind::Virtual, Policy::Fifo);
        let fired = Rc::new(Cell::new(0));
        let f = fired.clone();
        h.call_at(500, false, NO_GROUP, move || f.set(f.get() + 1));
        h.run_until_quiescent();
        assert_eq!(fired.get(), 0);
        let f = fired.clone();
        h.call_at(1000, true, NO_GROUP, move || f.set(f.get() + 10));
        h.run_until_quiescent();
        assert_eq!(fired.get(), 11);
        assert_eq!(h.now(), 1000);
    }

    #[test]
    fn pending_forever_is_stalled() {
        let h = Handle::new(ClockKind::Virtual, Policy::Fifo);
        let r = h.block_on(futures::future::pending::<()>());
        assert_eq!(r, Err(Stalled));
    }

    #[test]
    fn timeout_fires() {
        let h = Handle::new(ClockKind::Virtual, Policy::Fifo);
        let h2 = h.clone();
        let r = h.block_on(async move { h2.timeout(10, futures::future::pending::<()>()).await }).unwrap();
        assert_eq!(r, None);
        assert_eq!(h.now(), 10);
    }

    #[test]
    fn seeded_orders_are_deterministic_and_vary() {
        fn order(seed: u64) -> Vec<u32> {
            let h = Handle::new(ClockKind::Virtual, Policy::Seeded(seed));
            let log = Rc::new(RefCell::new(Vec::new()));
            for i in 0..8 {
                let l = log.clone();
                h.spawn(async move { l.borrow_mut().push(i) });
            }
            h.run_until_quiescent();
            let v = log.borrow().clone();
            v
        }
        assert_eq!(order(1), order(1));
        assert!((0..10).any(|s| order(s) != order(s + 100)));
    }

    #[test]
    fn kill_group_drops_tasks() {
        let h = Handle::new(ClockKind::Virtual, Policy::Fifo);
        let ran = Rc::new(Cell::new(false));
        let r = ran.clone();
        let h2 = h.clone();
        h.spawn_in(7, async move {
            h2.sleep(100).await;
            r.set(true);
        });
        h.run_until(50);
        h.kill_group(7);
        h.run_until_quiescent();
        assert!(!ran.get());
        assert_eq!(h.live_tasks(), 0);
    }

    #[test]
    fn real_clock_block_on_with_thread_wake() {
        let h = Handle::new(ClockKind::Real, Policy::Fifo);
        let h2 = h.clone();
        let v = h.block_on(async move { h2.offload(|| 21 * 2).await }).unwrap();
        assert_eq!(v, 42);
    }
}
