//! Links, handshakes, liveness, path gossip, routing, request/reply plumbing and
//! runpack fetching.

use std::collections::BTreeMap;
use std::rc::Rc;
use std::sync::Arc;

use futures::channel::oneshot;
use futures::future::{LocalBoxFuture, Shared};
use futures::FutureExt;
use sha2::{Digest, Sha256};

use super::{bump, remote, Engine};
use crate::error::{EngineError, EngineResult};
use crate::net::codec::WireClass;
use crate::net::msg::{FetchPack, Gossip, Hello, PackData, Route, INITIAL_TTL};
use crate::net::{Frame, FrameKind, Link, PathTable};
use crate::runpack::store::Origin;
use crate::runpack::RunpackImage;
use crate::stdlib::{self, STD_PACKAGE};

pub type LinkId = u64;

pub(crate) type SharedFetch = Shared<LocalBoxFuture<'static, EngineResult<Arc<RunpackImage>>>>;

struct LinkState {
    link: Rc<dyn Link>,
    peer: Option<String>,
    initiator: bool,
    awaiting_pong: bool,
    missed: u32,
}

enum Waiter {
    Call(oneshot::Sender<EngineResult<Vec<u8>>>),
    Fetch { buf: Vec<u8>, tx: oneshot::Sender<EngineResult<Vec<u8>>> },
}

impl Waiter {
    fn finish(self, r: EngineResult<Vec<u8>>) {
        let tx = match self {
            Waiter::Call(tx) | Waiter::Fetch { tx, .. } => tx,
        };
        let _ = tx.send(r);
    }
}

struct Pending {
    dest: String,
    waiter: Waiter,
}

pub(crate) struct NetState {
    links: BTreeMap<LinkId, LinkState>,
    by_name: BTreeMap<String, LinkId>,
    paths: PathTable,
    pending: BTreeMap<u64, Pending>,
    handshakes: BTreeMap<LinkId, Vec<oneshot::Sender<EngineResult<String>>>>,
    next_link: LinkId,
    next_corr: u64,
}

impl NetState {
    pub(crate) fn new(me: &str) -> Self {
        NetState {
            links: BTreeMap::new(),
            by_name: BTreeMap::new(),
            paths: PathTable::new(me),
            pending: BTreeMap::new(),
            handshakes: BTreeMap::new(),
            next_link: 1,
            next_corr: 1,
        }
    }
}

/// Frame kinds that expect an answer; undeliverable ones are bounced as errors.
fn is_request(k: FrameKind) -> bool {
    matches!(k, FrameKind::Invoke | FrameKind::FetchPack | FrameKind::EventPost)
}

impl Engine {
    // ---- link lifecycle --------------------------------------------------------

    /// Registers a new connection. The initiating side sends HELLO.
    pub fn attach_link(&self, link: Rc<dyn Link>, initiator: bool) -> LinkId {
        let id = {
            let mut net = self.0.net.borrow_mut();
            let id = net.next_link;
            net.next_link += 1;
            net.links.insert(id, LinkState { link, peer: None, initiator, awaiting_pong: false, missed: 0 });
            id
        };
        if initiator {
            let e = self.clone();
            self.spawn(async move {
                let hello = e.hello_payload();
                e.send_on(id, Frame::new(FrameKind::Hello, 0, hello), "hello");
            });
        }
        id
    }

    /// Waits for the handshake on `id` to finish; returns the peer's name.
    pub async fn handshake(&self, id: LinkId) -> EngineResult<String> {
        let rx = {
            let mut net = self.0.net.borrow_mut();
            match net.links.get(&id) {
                None => return Err(EngineError::ConnectRefused("link closed".into())),
                Some(LinkState { peer: Some(p), .. }) => return Ok(p.clone()),
                Some(_) => {}
            }
            let (tx, rx) = oneshot::channel();
            net.handshakes.entry(id).or_default().push(tx);
            rx
        };
        match self.0.rt.timeout(self.0.cfg.handshake_timeout_ms, rx).await {
            None => Err(EngineError::HandshakeTimeout),
            Some(Ok(r)) => r,
            Some(Err(_)) => Err(EngineError::ConnectRefused("link closed".into())),
        }
    }

    fn hello_payload(&self) -> Vec<u8> {
        let mut h = Sha256::new();
        for (sid, mask) in self.0.host_map.borrow().pairs() {
            h.update(sid.0);
            h.update([mask.bits()]);
        }
        Hello { name: self.name().to_string(), incarnation: self.0.incarnation, creds_digest: h.finalize().into() }.encode()
    }

    pub(crate) fn send_on(&self, id: LinkId, frame: Frame, note: &str) {
        let link = self.0.net.borrow().links.get(&id).map(|l| l.link.clone());
        if let Some(link) = link {
            bump(&self.0.counters.frames_sent);
            link.send(&frame, note);
        }
    }

    fn resolve_handshake(&self, id: LinkId, r: EngineResult<String>) {
        let waiters = self.0.net.borrow_mut().handshakes.remove(&id).unwrap_or_default();
        for w in waiters {
            let _ = w.send(r.clone());
        }
    }

    fn reject_link(&self, id: LinkId, corr: u64, err: EngineError) {
        self.log(format!("reject link: {err}"));
        self.send_on(id, Frame::new(FrameKind::Error, corr, err.to_bytes()), "handshake error");
        let st = self.0.net.borrow_mut().links.remove(&id);
        if let Some(st) = st {
            st.link.close();
        }
        self.resolve_handshake(id, Err(err));
    }

    fn name_taken(&self, name: &str) -> bool {
        name == self.name() || self.0.net.borrow().by_name.contains_key(name)
    }

    fn accept_peer(&self, id: LinkId, name: String) {
        {
            let mut net = self.0.net.borrow_mut();
            if let Some(st) = net.links.get_mut(&id) {
                st.peer = Some(name.clone());
            }
            net.by_name.insert(name.clone(), id);
            net.paths.add_neighbor(&name);
        }
        self.log(format!("link up {name}"));
        self.resolve_handshake(id, Ok(name));
        self.topology_changed();
    }

    /// The transport reports that connection `id` is gone.
    pub fn on_link_down(&self, id: LinkId) {
        let st = self.0.net.borrow_mut().links.remove(&id);
        let Some(st) = st else { return };
        self.resolve_handshake(id, Err(EngineError::ConnectRefused("link closed".into())));
        if let Some(peer) = st.peer {
            {
                let mut net = self.0.net.borrow_mut();
                if net.by_name.get(&peer) == Some(&id) {
                    net.by_name.remove(&peer);
                    net.paths.remove_neighbor(&peer);
                }
            }
            self.log(format!("link down {peer}"));
            self.topology_changed();
        }
    }

    pub(crate) fn close_all_links(&self) {
        let links: Vec<_> = {
            let mut net = self.0.net.borrow_mut();
            net.by_name.clear();
            net.paths = PathTable::new(&self.0.name);
            let pending = std::mem::take(&mut net.pending);
            for (_, p) in pending {
                p.waiter.finish(Err(EngineError::HostUnreachable(p.dest)));
            }
            std::mem::take(&mut net.links).into_values().collect()
        };
        for l in links {
            l.link.close();
        }
    }

    fn evict(&self, id: LinkId) {
        let st = self.0.net.borrow().links.get(&id).map(|s| (s.link.clone(), s.peer.clone()));
        if let Some((link, peer)) = st {
            self.log(format!("evict {}", peer.unwrap_or_default()));
            link.close();
            self.on_link_down(id);
        }
    }

    /// Fails calls whose destination dropped out of reach and re-advertises paths.
    fn topology_changed(&self) {
        let failed: Vec<Pending> = {
            let mut net = self.0.net.borrow_mut();
            let lost: Vec<u64> = net.pending.iter().filter(|(_, p)| !net.paths.knows(&p.dest)).map(|(c, _)| *c).collect();
            lost.into_iter().filter_map(|c| net.pending.remove(&c)).collect()
        };
        for p in failed {
            let dest = p.dest.clone();
            p.waiter.finish(Err(EngineError::HostUnreachable(dest)));
        }
        self.broadcast_gossip();
    }

    fn broadcast_gossip(&self) {
        let adverts: Vec<(LinkId, Vec<u8>)> = {
            let net = self.0.net.borrow();
            net.by_name.iter().map(|(n, id)| (*id, net.paths.advert_for(n).encode())).collect()
        };
        for (id, g) in adverts {
            self.send_on(id, Frame::new(FrameKind::Gossip, 0, g), "gossip");
        }
    }

    pub(crate) fn start_housekeeping(&self) {
        let e = self.clone();
        self.spawn(async move {
            loop {
                e.0.rt.sleep_background(e.0.cfg.ping_interval_ms).await;
                e.ping_round();
            }
        });
        let e = self.clone();
        self.spawn(async move {
            loop {
                e.0.rt.sleep_background(e.0.cfg.gossip_interval_ms).await;
                e.broadcast_gossip();
            }
        });
    }

    fn ping_round(&self) {
        let mut ping = Vec::new();
        let mut evict = Vec::new();
        {
            let mut net = self.0.net.borrow_mut();
            let misses = self.0.cfg.ping_misses.max(1);
            for (id, st) in net.links.iter_mut() {
                if st.peer.is_none() {
                    continue;
                }
                if st.awaiting_pong {
                    st.missed += 1;
                    if st.missed >= misses {
                        evict.push(*id);
                        continue;
                    }
                }
                st.awaiting_pong = true;
                ping.push(*id);
            }
        }
        for id in ping {
            self.send_on(id, Frame::new(FrameKind::Ping, 0, vec![]), "ping");
        }
        for id in evict {
            self.evict(id);
        }
    }

    // ---- queries ---------------------------------------------------------------

    /// Direct neighbors, sorted by name.
    pub fn neighbors(&self) -> Vec<String> {
        self.0.net.borrow().by_name.keys().cloned().collect()
    }

    pub fn path_table(&self) -> PathTable {
        self.0.net.borrow().paths.clone()
    }

    /// Whether `name` is this host, a neighbor, or reachable through a known path.
    pub fn knows_host(&self, name: &str) -> bool {
        self.0.net.borrow().paths.knows(name)
    }

    pub fn pending_calls(&self) -> usize {
        self.0.net.borrow().pending.len()
    }

    // ---- frames in -------------------------------------------------------------

    /// Entry point for every frame the transport receives on `id`.
    pub fn on_frame(&self, id: LinkId, frame: Frame) {
        if !self.is_alive() {
            return;
        }
        bump(&self.0.counters.frames_received);
        let (peer, initiator) = match self.0.net.borrow().links.get(&id) {
            Some(st) => (st.peer.clone(), st.initiator),
            None => return,
        };
        match (frame.kind, peer) {
            (FrameKind::Hello, None) if !initiator => match Hello::decode(&frame.payload) {
                Ok(h) if self.name_taken(&h.name) => self.reject_link(id, frame.corr, EngineError::NameCollision(h.name)),
                Ok(h) => {
                    let ack = self.hello_payload();
                    self.send_on(id, Frame::new(FrameKind::HelloAck, frame.corr, ack), "hello-ack");
                    self.accept_peer(id, h.name);
                }
                Err(e) => self.reject_link(id, frame.corr, EngineError::Protocol(e.to_string())),
            },
            (FrameKind::HelloAck, None) if initiator => match Hello::decode(&frame.payload) {
                Ok(h) if self.name_taken(&h.name) => {
                    let err = EngineError::NameCollision(h.name);
                    self.log(format!("reject link: {err}"));
                    let st = self.0.net.borrow_mut().links.remove(&id);
                    if let Some(st) = st {
                        st.link.close();
                    }
                    self.resolve_handshake(id, Err(err));
                }
                Ok(h) => self.accept_peer(id, h.name),
                Err(e) => self.reject_link(id, frame.corr, EngineError::Protocol(e.to_string())),
            },
            (FrameKind::Error, None) => {
                let err = EngineError::from_bytes(&frame.payload).unwrap_or_else(|e| EngineError::Protocol(e.to_string()));
                self.log(format!("handshake refused: {err}"));
                let st = self.0.net.borrow_mut().links.remove(&id);
                if let Some(st) = st {
                    st.link.close();
                }
                self.resolve_handshake(id, Err(err));
            }
            (_, None) => {}
            (FrameKind::Ping, Some(_)) => self.send_on(id, Frame::new(FrameKind::Pong, frame.corr, vec![]), "pong"),
            (FrameKind::Pong, Some(_)) => {
                if let Some(st) = self.0.net.borrow_mut().links.get_mut(&id) {
                    st.awaiting_pong = false;
                    st.missed = 0;
                }
            }
            (FrameKind::Gossip, Some(peer)) => {
                if let Ok(g) = Gossip::decode(&frame.payload) {
                    let changed = self.0.net.borrow_mut().paths.apply(&peer, &g);
                    if changed {
                        self.topology_changed();
                    }
                }
            }
            (FrameKind::Route, Some(_)) => self.on_route(frame),
            (FrameKind::Hello | FrameKind::HelloAck, Some(_)) => {}
            (kind, Some(peer)) => self.on_message(peer, kind, frame.corr, frame.payload, Vec::new()),
        }
    }

    fn on_route(&self, frame: Frame) {
        let Ok(mut r) = Route::decode(&frame.payload) else { return };
        if r.dst == self.name() {
            let back: Vec<String> = r.trail.iter().skip(1).rev().cloned().collect();
            self.on_message(r.src, r.kind, r.corr, r.payload, back);
            return;
        }
        if r.ttl <= 1 {
            self.bounce(&r);
            return;
        }
        let next = {
            let net = self.0.net.borrow();
            let hop = if !r.route.is_empty() {
                Some(r.route[0].clone())
            } else if net.by_name.contains_key(&r.dst) {
                Some(r.dst.clone())
            } else {
                net.paths.next_hop(&r.dst).map(str::to_string)
            };
            hop.and_then(|h| net.by_name.get(&h).map(|id| (h, *id)))
        };
        let Some((hop, id)) = next else {
            self.bounce(&r);
            return;
        };
        if r.route.first() == Some(&hop) {
            r.route.remove(0);
        }
        r.ttl -= 1;
        r.trail.push(self.name().to_string());
        let note = format!("forward {} {}->{}", r.kind, r.src, r.dst);
        self.send_on(id, Frame::new(FrameKind::Route, frame.corr, r.encode()), &note);
    }

    /// Tells the originator of an undeliverable request that its target is unreachable.
    fn bounce(&self, r: &Route) {
        if !is_request(r.kind) {
            return;
        }
        let back: Vec<String> = r.trail.iter().skip(1).rev().cloned().collect();
        let err = EngineError::HostUnreachable(r.dst.clone());
        let _ = self.send_to(&r.src, FrameKind::Error, r.corr, err.to_bytes(), "error HostUnreachable", Some(&back));
    }

    fn on_message(&self, src: String, kind: FrameKind, corr: u64, payload: Vec<u8>, via: Vec<String>) {
        match kind {
            FrameKind::Invoke => {
                let e = self.clone();
                self.spawn(async move {
                    let r = remote::serve(&e, &src, payload).await;
                    e.reply(&src, corr, r, &via);
                });
            }
            FrameKind::EventPost => {
                let e = self.clone();
                self.spawn(async move {
                    let r = super::events::serve_post(&e, &src, payload).await;
                    e.reply(&src, corr, r, &via);
                });
            }
            FrameKind::Reply => self.complete(corr, Ok(payload)),
            FrameKind::Error => {
                let err = EngineError::from_bytes(&payload).unwrap_or_else(|e| EngineError::Protocol(e.to_string()));
                self.complete(corr, Err(err));
            }
            FrameKind::FetchPack => self.serve_fetch(&src, corr, &payload, &via),
            FrameKind::PackData => self.on_pack_data(corr, &payload),
            _ => {}
        }
    }

    fn reply(&self, dst: &str, corr: u64, r: EngineResult<Vec<u8>>, via: &[String]) {
        let sent = match r {
            Ok(bytes) => self.send_to(dst, FrameKind::Reply, corr, bytes, "reply", Some(via)),
            Err(e) => {
                let note = format!("error {}", e.kind());
                self.send_to(dst, FrameKind::Error, corr, e.to_bytes(), &note, Some(via))
            }
        };
        if let Err(e) = sent {
            self.log(format!("reply to {dst} lost: {e}"));
        }
    }

    fn complete(&self, corr: u64, r: EngineResult<Vec<u8>>) {
        let p = self.0.net.borrow_mut().pending.remove(&corr);
        if let Some(p) = p {
            p.waiter.finish(r);
        }
    }

    // ---- frames out ------------------------------------------------------------

    /// Sends to `dst` directly when it is a neighbor, else wrapped in ROUTE.
    /// `via` fixes the intermediates (used for replies); `None` consults the path table.
    pub(crate) fn send_to(&self, dst: &str, kind: FrameKind, corr: u64, payload: Vec<u8>, note: &str, via: Option<&[String]>) -> EngineResult<()> {
        let unreachable = || EngineError::HostUnreachable(dst.to_string());
        let (id, frame, note) = {
            let net = self.0.net.borrow();
            let fixed = via.filter(|v| !v.is_empty());
            match (fixed, net.by_name.get(dst)) {
                (None, Some(id)) => (*id, Frame::new(kind, corr, payload), note.to_string()),
                _ => {
                    let (hops, route) = match fixed {
                        Some(v) => (v.to_vec(), v[1..].to_vec()),
                        None => (net.paths.path(dst).filter(|p| !p.is_empty()).ok_or_else(unreachable)?.to_vec(), Vec::new()),
                    };
                    let id = *net.by_name.get(&hops[0]).ok_or_else(unreachable)?;
                    let r = Route {
                        src: self.name().to_string(),
                        dst: dst.to_string(),
                        ttl: INITIAL_TTL,
                        trail: vec![self.name().to_string()],
                        route,
                        kind,
                        corr,
                        payload,
                    };
                    (id, Frame::new(FrameKind::Route, corr, r.encode()), format!("route {kind} {note} ->{dst}"))
                }
            }
        };
        self.send_on(id, frame, &note);
        Ok(())
    }

    fn next_corr(&self) -> u64 {
        let mut net = self.0.net.borrow_mut();
        let c = net.next_corr;
        net.next_corr += 1;
        c
    }

    /// Sends a request and waits for its REPLY payload, an ERROR, or the call timeout.
    pub(crate) async fn request(&self, dst: &str, kind: FrameKind, payload: Vec<u8>, note: &str) -> EngineResult<Vec<u8>> {
        let corr = self.next_corr();
        let (tx, rx) = oneshot::channel();
        self.0.net.borrow_mut().pending.insert(corr, Pending { dest: dst.to_string(), waiter: Waiter::Call(tx) });
        if let Err(e) = self.send_to(dst, kind, corr, payload, note, None) {
            self.0.net.borrow_mut().pending.remove(&corr);
            return Err(e);
        }
        self.await_reply(corr, dst, rx, self.0.cfg.call_timeout_ms).await
    }

    async fn await_reply(&self, corr: u64, dst: &str, rx: oneshot::Receiver<EngineResult<Vec<u8>>>, ms: u64) -> EngineResult<Vec<u8>> {
        match self.0.rt.timeout(ms, rx).await {
            None => {
                self.0.net.borrow_mut().pending.remove(&corr);
                Err(EngineError::Timeout(dst.to_string()))
            }
            Some(Ok(r)) => r,
            Some(Err(_)) => Err(EngineError::HostUnreachable(dst.to_string())),
        }
    }

    // ---- runpack transfer ------------------------------------------------------

    /// Makes every class named in `classes` loadable, fetching missing packages from `origin`.
    pub(crate) async fn ensure_classes(&self, origin: &str, classes: &[WireClass]) -> EngineResult<()> {
        let mut needed: BTreeMap<&str, [u8; 32]> = BTreeMap::new();
        for c in classes {
            if c.package == STD_PACKAGE {
                if c.hash != stdlib::standard_image().hash {
                    return Err(EngineError::HashMismatch(c.package.clone()));
                }
                continue;
            }
            match self.image(&c.package) {
                Some((_, img)) if img.hash != c.hash => return Err(EngineError::HashMismatch(c.package.clone())),
                Some(_) => {}
                None => {
                    needed.insert(&c.package, c.hash);
                }
            }
        }
        for (name, hash) in needed {
            self.fetch_package(origin, name, hash).await?;
        }
        Ok(())
    }

    /// Fetches a package from `origin`; concurrent demands share one transfer.
    pub async fn fetch_package(&self, origin: &str, name: &str, hash: [u8; 32]) -> EngineResult<Arc<RunpackImage>> {
        if let Some((_, img)) = self.image(name) {
            return if img.hash == hash { Ok(img) } else { Err(EngineError::HashMismatch(name.to_string())) };
        }
        let existing = self.0.fetches.borrow().get(name).cloned();
        let fut = match existing {
            Some(f) => f,
            None => {
                let e = self.clone();
                let (origin, owned) = (origin.to_string(), name.to_string());
                let f = async move { e.do_fetch(&origin, &owned, hash).await }.boxed_local().shared();
                self.0.fetches.borrow_mut().insert(name.to_string(), f.clone());
                f
            }
        };
        let r = fut.await;
        self.0.fetches.borrow_mut().remove(name);
        r
    }

    async fn do_fetch(&self, origin: &str, name: &str, hash: [u8; 32]) -> EngineResult<Arc<RunpackImage>> {
        bump(&self.0.counters.fetch_requests);
        let corr = self.next_corr();
        let (tx, rx) = oneshot::channel();
        self.0.net.borrow_mut().pending.insert(corr, Pending { dest: origin.to_string(), waiter: Waiter::Fetch { buf: Vec::new(), tx } });
        let payload = FetchPack { name: name.to_string(), hash }.encode();
        if let Err(e) = self.send_to(origin, FrameKind::FetchPack, corr, payload, &format!("fetch {name}"), None) {
            self.0.net.borrow_mut().pending.remove(&corr);
            return Err(e);
        }
        let bytes = self.await_reply(corr, origin, rx, self.0.cfg.fetch_timeout_ms).await?;
        let img = RunpackImage::deserialize(&bytes).map_err(|e| EngineError::Protocol(format!("fetched image {name}: {e}")))?;
        if img.name != name || img.hash != hash || img.compute_hash() != hash {
            return Err(EngineError::HashMismatch(name.to_string()));
        }
        let img = self.install_arc(Arc::new(img), Origin::NetworkFetched)?;
        bump(&self.0.counters.packs_fetched);
        self.log(format!("fetched {name} from {origin}"));
        Ok(img)
    }

    fn serve_fetch(&self, src: &str, corr: u64, payload: &[u8], via: &[String]) {
        let req = match FetchPack::decode(payload) {
            Ok(r) => r,
            Err(e) => return self.reply(src, corr, Err(EngineError::Protocol(e.to_string())), via),
        };
        let img = match self.image(&req.name) {
            Some((_, img)) if img.hash == req.hash => img,
            Some(_) => return self.reply(src, corr, Err(EngineError::HashMismatch(req.name)), via),
            None => return self.reply(src, corr, Err(EngineError::PackNotFoundAtOrigin(req.name)), via),
        };
        let chunks = PackData::split(&req.name, &img.serialize());
        for c in chunks {
            let note = format!("pack {} @{}", c.name, c.offset);
            if self.send_to(src, FrameKind::PackData, corr, c.encode(), &note, Some(via)).is_err() {
                return;
            }
        }
    }

    fn on_pack_data(&self, corr: u64, payload: &[u8]) {
        let Ok(chunk) = PackData::decode(payload) else {
            return self.complete(corr, Err(EngineError::Protocol("bad pack chunk".into())));
        };
        let done = {
            let mut net = self.0.net.borrow_mut();
            match net.pending.get_mut(&corr) {
                Some(Pending { waiter: Waiter::Fetch { buf, .. }, .. }) => {
                    if chunk.offset as usize != buf.len() {
                        Some(Err(EngineError::Protocol("pack chunks out of order".into())))
                    } else {
                        buf.extend_from_slice(&chunk.chunk);
                        chunk.is_last().then(|| Ok(std::mem::take(buf)))
                    }
                }
                _ => None,
            }
        };
        if let Some(r) = done {
            self.complete(corr, r);
        }
    }
}
