//! Many engines in one process on a virtual clock, connected by simulated links.
//!
//! Every frame is recorded with the tick it was sent. Delivery happens after the
//! link latency, in send order per direction. Faults: a dropped link silently
//! loses frames in both directions, a killed host stops executing and its links
//! close, and a delayed link adds latency.

mod topology;

use std::cell::{Cell, RefCell};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::rc::{Rc, Weak};

use sha2::{Digest, Sha256};

pub use topology::{Action, Fault, HostSpec, LinkSpec, Topology};

use crate::config::EngineConfig;
use crate::engine::{Engine, LinkId, LogEntry};
use crate::error::EngineError;
use crate::net::{Frame, FrameKind, Link};
use crate::rt::{ClockKind, Handle, Policy, TaskGroup};
use crate::runpack::RunpackImage;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SimError {
    #[error("topology line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unknown entity {0}")]
    UnknownEntity(String),
    #[error("scenario deadlock: {0:?} did not finish")]
    ScenarioDeadlock(Vec<String>),
    #[error("cannot load {0}")]
    Load(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// One frame as it left its sender.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameRecord {
    pub tick: u64,
    pub kind: FrameKind,
    pub src: String,
    pub dst: String,
    /// Encoded size including the header.
    pub len: usize,
    /// Payload size.
    pub payload: usize,
    pub note: String,
    /// The frame was sent into a dropped or closed link.
    pub lost: bool,
}

struct LinkState {
    ends: [(String, Cell<LinkId>); 2],
    latency: u64,
    extra: Cell<u64>,
    dropped: Cell<bool>,
    closed: Cell<bool>,
    last: [Cell<u64>; 2],
}

struct HostState {
    engine: Engine,
    out: Rc<RefCell<Vec<u8>>>,
}

struct Shared {
    rt: Handle,
    hosts: RefCell<BTreeMap<String, HostState>>,
    links: RefCell<BTreeMap<(String, String), Rc<LinkState>>>,
    frames: RefCell<Vec<FrameRecord>>,
}

struct SimLink {
    shared: Weak<Shared>,
    state: Rc<LinkState>,
    /// Index of the sending end in `state.ends`.
    side: usize,
}

impl SimLink {
    fn peer(&self) -> Option<Engine> {
        let (name, _) = &self.state.ends[1 - self.side];
        let shared = self.shared.upgrade()?;
        let hosts = shared.hosts.borrow();
        hosts.get(name).map(|h| h.engine.clone()).filter(|e| e.is_alive())
    }
}

impl Link for SimLink {
    fn send(&self, frame: &Frame, note: &str) {
        let Some(shared) = self.shared.upgrade() else { return };
        let rt = &shared.rt;
        let lost = self.state.dropped.get() || self.state.closed.get();
        let (src, _) = &self.state.ends[self.side];
        let (dst, dst_id) = &self.state.ends[1 - self.side];
        shared.frames.borrow_mut().push(FrameRecord {
            tick: rt.now(),
            kind: frame.kind,
            src: src.clone(),
            dst: dst.clone(),
            len: frame.encoded_len(),
            payload: frame.payload.len(),
            note: note.to_string(),
            lost,
        });
        if lost {
            return;
        }
        let Some(peer) = self.peer() else { return };
        let last = &self.state.last[self.side];
        let at = (rt.now() + self.state.latency + self.state.extra.get()).max(last.get());
        last.set(at);
        let (state, id, frame) = (self.state.clone(), dst_id.get(), frame.clone());
        rt.call_at(at, true, peer.group(), move || {
            if !state.dropped.get() && !state.closed.get() && peer.is_alive() {
                peer.on_frame(id, frame);
            }
        });
    }

    fn close(&self) {
        if self.state.closed.replace(true) {
            return;
        }
        let (Some(peer), Some(shared)) = (self.peer(), self.shared.upgrade()) else { return };
        let id = self.state.ends[1 - self.side].1.get();
        let at = shared.rt.now() + self.state.latency + self.state.extra.get();
        shared.rt.call_at(at, true, peer.group(), move || {
            if peer.is_alive() {
                peer.on_link_down(id);
            }
        });
    }
}

fn link_key(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

/// A simulated network under construction or running.
pub struct SimNet {
    shared: Rc<Shared>,
    seed: u64,
    base: EngineConfig,
}

impl SimNet {
    pub fn new(seed: u64) -> SimNet {
        SimNet::with_policy(seed, Policy::Seeded(seed))
    }

    pub fn with_policy(seed: u64, policy: Policy) -> SimNet {
        let rt = Handle::new(ClockKind::Virtual, policy);
        let shared = Rc::new(Shared { rt, hosts: RefCell::default(), links: RefCell::default(), frames: RefCell::default() });
        SimNet { shared, seed, base: EngineConfig::default() }
    }

    /// Applies a setting to every host added afterwards.
    pub fn configure(&mut self, key: &str, value: &str) -> Result<(), SimError> {
        self.base.set(key, value).map_err(|e| SimError::Parse { line: 0, message: e.to_string() })
    }

    pub fn runtime(&self) -> &Handle {
        &self.shared.rt
    }

    pub fn add_host(&self, name: &str) -> Engine {
        self.add_host_with(name, |_| {})
    }

    pub fn add_host_with(&self, name: &str, tweak: impl FnOnce(&mut EngineConfig)) -> Engine {
        let mut cfg = self.base.clone();
        cfg.host = name.to_string();
        cfg.seed = self.seed;
        tweak(&mut cfg);
        let group = self.shared.hosts.borrow().len() as TaskGroup + 1;
        let out = Rc::new(RefCell::new(Vec::new()));
        let engine = Engine::new(cfg, self.shared.rt.clone(), group, out.clone());
        self.shared.hosts.borrow_mut().insert(name.to_string(), HostState { engine: engine.clone(), out });
        engine
    }

    pub fn engine(&self, name: &str) -> Result<Engine, SimError> {
        self.shared.hosts.borrow().get(name).map(|h| h.engine.clone()).ok_or_else(|| SimError::UnknownEntity(name.to_string()))
    }

    pub fn host_names(&self) -> Vec<String> {
        self.shared.hosts.borrow().keys().cloned().collect()
    }

    /// Connects `a` (initiator) to `b`.
    pub fn link(&self, a: &str, b: &str, latency: u64) -> Result<(), SimError> {
        let (ea, eb) = (self.engine(a)?, self.engine(b)?);
        let state = Rc::new(LinkState {
            ends: [(a.to_string(), Cell::new(0)), (b.to_string(), Cell::new(0))],
            latency: latency.max(1),
            extra: Cell::new(0),
            dropped: Cell::new(false),
            closed: Cell::new(false),
            last: [Cell::new(0), Cell::new(0)],
        });
        self.shared.links.borrow_mut().insert(link_key(a, b), state.clone());
        let la = Rc::new(SimLink { shared: Rc::downgrade(&self.shared), state: state.clone(), side: 0 });
        let lb = Rc::new(SimLink { shared: Rc::downgrade(&self.shared), state: state.clone(), side: 1 });
        let ia = ea.attach_link(la, true);
        let ib = eb.attach_link(lb, false);
        state.ends[0].1.set(ia);
        state.ends[1].1.set(ib);
        Ok(())
    }

    fn link_state(&self, a: &str, b: &str) -> Result<Rc<LinkState>, SimError> {
        self.shared.links.borrow().get(&link_key(a, b)).cloned().ok_or_else(|| SimError::UnknownEntity(format!("link {a}-{b}")))
    }

    /// Frames on the link vanish from now on; neither side is told.
    pub fn drop_link(&self, a: &str, b: &str) -> Result<(), SimError> {
        self.link_state(a, b)?.dropped.set(true);
        Ok(())
    }

    pub fn delay_link(&self, a: &str, b: &str, ticks: u64) -> Result<(), SimError> {
        let s = self.link_state(a, b)?;
        s.extra.set(s.extra.get() + ticks);
        Ok(())
    }

    /// Stops a host; its neighbors see the links close.
    pub fn kill(&self, host: &str) -> Result<(), SimError> {
        self.engine(host)?.shutdown();
        Ok(())
    }

    pub fn apply(&self, fault: &Fault) -> Result<(), SimError> {
        match fault {
            Fault::Drop { a, b } => self.drop_link(a, b),
            Fault::Kill { host } => self.kill(host),
            Fault::Delay { a, b, ticks } => self.delay_link(a, b, *ticks),
        }
    }

    pub fn run_until_quiescent(&self) {
        self.shared.rt.run_until_quiescent();
    }

    pub fn block_on<F: std::future::Future + 'static>(&self, fut: F) -> Result<F::Output, SimError>
    where
        F::Output: 'static,
    {
        self.shared.rt.block_on(fut).map_err(|_| SimError::ScenarioDeadlock(vec!["block_on".into()]))
    }

    pub fn now(&self) -> u64 {
        self.shared.rt.now()
    }

    pub fn frames(&self) -> Vec<FrameRecord> {
        self.shared.frames.borrow().clone()
    }

    pub fn frame_count(&self) -> usize {
        self.shared.frames.borrow().len()
    }

    pub fn stdout(&self, host: &str) -> Vec<u8> {
        self.shared.hosts.borrow().get(host).map(|h| h.out.borrow().clone()).unwrap_or_default()
    }

    /// Starts `main` of `image` on `host`, installing the image there first.
    /// The returned cell is filled when main finishes.
    pub fn start_main(&self, host: &str, image: &RunpackImage, args: &[String]) -> Result<Rc<RefCell<Option<Result<i64, EngineError>>>>, SimError> {
        let eng = self.engine(host)?;
        if eng.store().resolve(&image.name).is_none() {
            eng.install(image.clone())?;
        }
        let slot = Rc::new(RefCell::new(None));
        let (s2, pkg) = (slot.clone(), image.name.clone());
        let argv: Vec<Vec<u8>> = args.iter().map(|a| a.as_bytes().to_vec()).collect();
        let e2 = eng.clone();
        self.shared.rt.spawn_in(eng.group(), async move {
            let r = e2.run_main(&pkg, argv).await;
            *s2.borrow_mut() = Some(r);
        });
        Ok(slot)
    }

    /// Builds the final report.
    pub fn transcript(&self, runs: Vec<RunOutcome>) -> Transcript {
        let hosts = self.shared.hosts.borrow();
        let mut per_host = BTreeMap::new();
        for (name, h) in hosts.iter() {
            let paths = h.engine.path_table();
            per_host.insert(
                name.clone(),
                HostReport {
                    stdout: h.out.borrow().clone(),
                    log: h.engine.log_entries(),
                    alive: h.engine.is_alive(),
                    neighbors: if h.engine.is_alive() { h.engine.neighbors() } else { Vec::new() },
                    paths: if h.engine.is_alive() {
                        paths.entries().map(|(d, p)| (d.clone(), p.clone())).collect()
                    } else {
                        Vec::new()
                    },
                },
            );
        }
        Transcript { frames: self.frames(), hosts: per_host, runs, end_tick: self.now() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOutcome {
    pub host: String,
    pub rpk: String,
    pub result: Result<i64, EngineError>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HostReport {
    pub stdout: Vec<u8>,
    pub log: Vec<LogEntry>,
    pub alive: bool,
    pub neighbors: Vec<String>,
    pub paths: Vec<(String, Vec<String>)>,
}

/// Everything observable about one scenario run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transcript {
    pub frames: Vec<FrameRecord>,
    pub hosts: BTreeMap<String, HostReport>,
    pub runs: Vec<RunOutcome>,
    pub end_tick: u64,
}

/// Output longer than this is summarized by length and digest when rendered.
const INLINE_STDOUT: usize = 4096;

impl Transcript {
    pub fn stdout(&self, host: &str) -> &[u8] {
        self.hosts.get(host).map(|h| h.stdout.as_slice()).unwrap_or(&[])
    }

    /// Deterministic text form.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# frames");
        for f in &self.frames {
            let _ = writeln!(
                s,
                "{:>8} {:<10} {}->{} len={} {}{}",
                f.tick,
                f.kind.name(),
                f.src,
                f.dst,
                f.len,
                f.note,
                if f.lost { " [lost]" } else { "" }
            );
        }
        for (name, h) in &self.hosts {
            let _ = writeln!(s, "# host {name}{}", if h.alive { "" } else { " (killed)" });
            let _ = writeln!(s, "neighbors: {}", h.neighbors.join(" "));
            for (d, p) in &h.paths {
                let _ = writeln!(s, "path {d}: [{}]", p.join(" "));
            }
            for l in &h.log {
                let _ = writeln!(s, "log {:>8} {}", l.tick, l.text);
            }
            if h.stdout.len() <= INLINE_STDOUT {
                let _ = writeln!(s, "stdout:");
                s.push_str(&String::from_utf8_lossy(&h.stdout));
                if !h.stdout.is_empty() && !h.stdout.ends_with(b"\n") {
                    s.push('\n');
                }
            } else {
                let _ = writeln!(s, "stdout: {} bytes sha256={}", h.stdout.len(), hex::encode(Sha256::digest(&h.stdout)));
            }
        }
        let _ = writeln!(s, "# runs");
        for r in &self.runs {
            match &r.result {
                Ok(code) => {
                    let _ = writeln!(s, "{} {} exit {code}", r.host, r.rpk);
                }
                Err(e) => {
                    let _ = writeln!(s, "{} {} error {}: {e}", r.host, r.rpk, e.kind());
                }
            }
        }
        let _ = writeln!(s, "# end tick {}", self.end_tick);
        s
    }
}

/// Runs a topology script. `load` maps the `rpk` word of a `run` line to an image.
pub fn run_scenario(topo: &Topology, seed: u64, mut load: impl FnMut(&str) -> Result<RunpackImage, SimError>) -> Result<Transcript, SimError> {
    topo.validate()?;
    let mut net = SimNet::new(seed);
    for (k, v) in &topo.config {
        net.configure(k, v)?;
    }
    for h in &topo.hosts {
        net.add_host_with(&h.name, |c| c.primary = h.primary);
    }
    for l in &topo.links {
        net.link(&l.a, &l.b, l.latency)?;
    }
    net.run_until_quiescent();

    let mut pending = Vec::new();
    let start = net.now();
    let net = Rc::new(net);
    for a in &topo.script {
        match a {
            Action::Run { host, rpk, args } => {
                let img = load(rpk)?;
                pending.push((host.clone(), rpk.clone(), net.start_main(host, &img, args)?));
            }
            Action::At { tick, fault } => {
                let (n2, f2) = (net.clone(), fault.clone());
                let at = start.max(*tick);
                net.runtime().call_at(at, true, crate::rt::NO_GROUP, move || {
                    if let Err(e) = n2.apply(&f2) {
                        log::warn!("fault not applied: {e}");
                    }
                });
            }
        }
    }
    net.run_until_quiescent();

    let mut runs = Vec::new();
    let mut stuck = Vec::new();
    for (host, rpk, slot) in pending {
        match slot.borrow_mut().take() {
            Some(result) => runs.push(RunOutcome { host, rpk, result }),
            None => {
                if net.engine(&host)?.is_alive() {
                    stuck.push(format!("{host}:{rpk}"));
                } else {
                    runs.push(RunOutcome { host, rpk, result: Err(EngineError::HostUnreachable("killed".into())) });
                }
            }
        }
    }
    if !stuck.is_empty() {
        return Err(SimError::ScenarioDeadlock(stuck));
    }
    Ok(net.transcript(runs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mesh_settles_with_full_tables() {
        let topo = Topology::mesh(&["a", "b", "c"]);
        let t = run_scenario(&topo, 7, |_| unreachable!()).unwrap();
        for h in ["a", "b", "c"] {
            assert_eq!(t.hosts[h].neighbors.len(), 2);
        }
        assert!(t.frames.iter().any(|f| f.kind == FrameKind::Hello));
    }

    #[test]
    fn line_learns_paths_through_the_middle() {
        let topo = Topology::parse("host a\nhost b\nhost c\nlink a b\nlink b c\n").unwrap();
        let t = run_scenario(&topo, 1, |_| unreachable!()).unwrap();
        assert_eq!(t.hosts["a"].paths, vec![("b".to_string(), vec![]), ("c".to_string(), vec!["b".to_string()])]);
    }

    #[test]
    fn same_seed_same_transcript() {
        let topo = Topology::parse("host a\nhost b\nhost c\nhost d\nlink a b\nlink b c\nlink c d\nlink d a 2\n").unwrap();
        let x = run_scenario(&topo, 3, |_| unreachable!()).unwrap().render();
        let y = run_scenario(&topo, 3, |_| unreachable!()).unwrap().render();
        assert_eq!(x, y);
    }

    #[test]
    fn kill_closes_links_at_neighbors() {
        let net = SimNet::new(1);
        for h in ["a", "b"] {
            net.add_host(h);
        }
        net.link("a", "b", 1).unwrap();
        net.run_until_quiescent();
        assert_eq!(net.engine("a").unwrap().neighbors(), vec!["b"]);
        net.kill("b").unwrap();
        net.run_until_quiescent();
        assert!(net.engine("a").unwrap().neighbors().is_empty());
    }

    #[test]
    fn long_delay_leads_to_eviction() {
        let net = SimNet::new(1);
        for h in ["a", "b"] {
            net.add_host(h);
        }
        net.link("a", "b", 1).unwrap();
        net.run_until_quiescent();
        net.delay_link("a", "b", 60_000).unwrap();
        net.runtime().run_until(net.now() + 20_000);
        let a = net.engine("a").unwrap();
        assert!(a.log_entries().iter().any(|l| l.text.starts_with("evict")));
        assert!(a.neighbors().is_empty());
    }
}
