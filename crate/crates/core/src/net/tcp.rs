//! TCP transport for a real-clock engine.
//!
//! Socket I/O happens on plain threads: one listener, and a reader and a writer
//! per connection. Readers decode frames and pass them through an unbounded
//! channel to a pump task on the engine's executor, which is the only place the
//! engine is touched.

use std::cell::{Cell, RefCell};
use std::io::{self, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::rc::Rc;
use std::sync::mpsc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use futures::channel::mpsc::{unbounded, UnboundedReceiver, UnboundedSender};
use futures::StreamExt;

use super::{Frame, FrameDecoder, Link, PREAMBLE};
use crate::engine::LinkId;
use crate::engine::Engine;

enum NetEvent {
    Connected { stream: TcpStream, initiator: bool, dial: Option<String> },
    DialFailed { addr: String, err: String },
    Frame(LinkId, Frame),
    Down(LinkId),
}

struct TcpLink {
    out: RefCell<Option<mpsc::Sender<Vec<u8>>>>,
}

impl Link for TcpLink {
    fn send(&self, frame: &Frame, _note: &str) {
        if let Some(tx) = self.out.borrow().as_ref() {
            let _ = tx.send(frame.encode());
        }
    }

    fn close(&self) {
        // dropping the sender lets the writer flush and send FIN
        self.out.borrow_mut().take();
    }
}

/// Handle to the TCP side of one engine.
pub struct TcpNode {
    engine: Engine,
    addr: Option<SocketAddr>,
    tx: UnboundedSender<NetEvent>,
    dialing: Rc<Cell<usize>>,
    writers: Writers,
}

type Writers = Rc<RefCell<Vec<JoinHandle<()>>>>;

impl TcpNode {
    /// Binds `listen` (if given) and starts the pump task on the engine's executor.
    pub fn start(engine: &Engine, listen: Option<&str>) -> io::Result<TcpNode> {
        let (tx, rx) = unbounded();
        let addr = match listen {
            Some(l) => {
                let listener = TcpListener::bind(l)?;
                let addr = listener.local_addr()?;
                let ltx = tx.clone();
                thread::Builder::new().name(format!("listen {addr}")).spawn(move || {
                    for s in listener.incoming() {
                        let Ok(stream) = s else { continue };
                        if ltx.unbounded_send(NetEvent::Connected { stream, initiator: false, dial: None }).is_err() {
                            break;
                        }
                    }
                })?;
                Some(addr)
            }
            None => None,
        };
        let dialing = Rc::new(Cell::new(0));
        let writers = Writers::default();
        let p = pump(engine.clone(), rx, tx.clone(), dialing.clone(), writers.clone());
        engine.runtime().spawn_in(engine.group(), p);
        Ok(TcpNode { engine: engine.clone(), addr, tx, dialing, writers })
    }

    pub fn local_addr(&self) -> Option<SocketAddr> {
        self.addr
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    /// Connects to `addr` in the background, retrying for up to `patience`.
    pub fn connect(&self, addr: &str, patience: Duration) {
        self.dialing.set(self.dialing.get() + 1);
        let tx = self.tx.clone();
        let addr = addr.to_string();
        let spawned = thread::Builder::new().name(format!("dial {addr}")).spawn({
            let tx = tx.clone();
            let addr = addr.clone();
            move || {
                let ev = match dial(&addr, patience) {
                    Ok(stream) => NetEvent::Connected { stream, initiator: true, dial: Some(addr) },
                    Err(e) => NetEvent::DialFailed { addr, err: e.to_string() },
                };
                let _ = tx.unbounded_send(ev);
            }
        });
        if let Err(e) = spawned {
            let _ = tx.unbounded_send(NetEvent::DialFailed { addr, err: e.to_string() });
        }
    }

    /// Dials that have neither finished their handshake nor failed.
    pub fn dials_in_flight(&self) -> usize {
        self.dialing.get()
    }

    /// After the engine has shut down: waits for queued outgoing bytes to be
    /// written. Returns false if some writer was still busy at the deadline.
    pub fn join_writers(&self, limit: Duration) -> bool {
        let start = std::time::Instant::now();
        let handles = std::mem::take(&mut *self.writers.borrow_mut());
        let mut clean = true;
        for h in handles {
            while !h.is_finished() && start.elapsed() < limit {
                thread::sleep(Duration::from_millis(5));
            }
            if h.is_finished() {
                let _ = h.join();
            } else {
                clean = false;
            }
        }
        clean
    }
}

fn dial(addr: &str, patience: Duration) -> io::Result<TcpStream> {
    let step = Duration::from_millis(50);
    let mut waited = Duration::ZERO;
    loop {
        let target = addr
            .to_socket_addrs()?
            .next()
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "no address"))?;
        match TcpStream::connect_timeout(&target, Duration::from_secs(2)) {
            Ok(s) => return Ok(s),
            Err(e) if waited >= patience => return Err(e),
            Err(_) => {
                thread::sleep(step);
                waited += step;
            }
        }
    }
}

async fn pump(eng: Engine, mut rx: UnboundedReceiver<NetEvent>, tx: UnboundedSender<NetEvent>, dialing: Rc<Cell<usize>>, writers: Writers) {
    while let Some(ev) = rx.next().await {
        match ev {
            NetEvent::Connected { stream, initiator, dial } => {
                let settle = dial.is_some();
                match attach(&eng, stream, initiator, &tx, &writers) {
                    Ok(id) => {
                        let (e, d) = (eng.clone(), dialing.clone());
                        eng.runtime().spawn_in(eng.group(), async move {
                            if let Err(err) = e.handshake(id).await {
                                log::warn!("{}: handshake failed: {err}", e.name());
                            }
                            if settle {
                                d.set(d.get().saturating_sub(1));
                            }
                        });
                    }
                    Err(err) => {
                        log::warn!("{}: cannot attach connection: {err}", eng.name());
                        if settle {
                            dialing.set(dialing.get().saturating_sub(1));
                        }
                    }
                }
            }
            NetEvent::DialFailed { addr, err } => {
                log::warn!("{}: cannot reach {addr}: {err}", eng.name());
                dialing.set(dialing.get().saturating_sub(1));
            }
            NetEvent::Frame(id, f) => eng.on_frame(id, f),
            NetEvent::Down(id) => eng.on_link_down(id),
        }
    }
}

fn attach(eng: &Engine, stream: TcpStream, initiator: bool, events: &UnboundedSender<NetEvent>, writers: &Writers) -> io::Result<LinkId> {
    stream.set_nodelay(true)?;
    let mut wstream = stream.try_clone()?;
    let (wtx, wrx) = mpsc::channel::<Vec<u8>>();
    let link = Rc::new(TcpLink { out: RefCell::new(Some(wtx)) });
    let id = eng.attach_link(link, initiator);

    let w = thread::Builder::new().name(format!("tcp write {id}")).spawn(move || {
        if wstream.write_all(&PREAMBLE).is_ok() {
            while let Ok(buf) = wrx.recv() {
                if wstream.write_all(&buf).is_err() {
                    break;
                }
            }
        }
        let _ = wstream.flush();
        let _ = wstream.shutdown(Shutdown::Write);
    })?;
    let mut ws = writers.borrow_mut();
    ws.retain(|h| !h.is_finished());
    ws.push(w);
    drop(ws);

    let events = events.clone();
    let mut rstream = stream;
    thread::Builder::new().name(format!("tcp read {id}")).spawn(move || {
        let mut dec = FrameDecoder::new(true);
        let mut buf = vec![0u8; 64 * 1024];
        'outer: loop {
            let n = match rstream.read(&mut buf) {
                Ok(0) | Err(_) => break,
                Ok(n) => n,
            };
            dec.push(&buf[..n]);
            loop {
                match dec.next_frame() {
                    Ok(Some(f)) => {
                        if events.unbounded_send(NetEvent::Frame(id, f)).is_err() {
                            break 'outer;
                        }
                    }
                    Ok(None) => break,
                    Err(e) => {
                        log::warn!("link {id}: {e}");
                        break 'outer;
                    }
                }
            }
        }
        let _ = rstream.shutdown(Shutdown::Both);
        let _ = events.unbounded_send(NetEvent::Down(id));
    })?;
    Ok(id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Output;
    use crate::rt::{ClockKind, Handle, Policy};
    use crate::EngineConfig;

    struct Sink;
    impl Output for Sink {
        fn write(&self, _: &[u8]) {}
    }

    #[test]
    fn two_engines_handshake_over_loopback() {
        let rt = Handle::new(ClockKind::Real, Policy::Fifo);
        let a = Engine::new(EngineConfig::named("a"), rt.clone(), 1, Rc::new(Sink));
        let b = Engine::new(EngineConfig::named("b"), rt.clone(), 2, Rc::new(Sink));
        let na = TcpNode::start(&a, Some("127.0.0.1:0")).unwrap();
        let nb = TcpNode::start(&b, None).unwrap();
        nb.connect(&na.local_addr().unwrap().to_string(), Duration::from_secs(2));
        assert!(rt.run_while(Duration::from_secs(5), || a.neighbors() == ["b"] && b.neighbors() == ["a"] && nb.dials_in_flight() == 0));
        b.shutdown();
        assert!(nb.join_writers(Duration::from_secs(2)));
        assert!(rt.run_while(Duration::from_secs(5), || a.neighbors().is_empty()));
        a.shutdown();
    }
}
