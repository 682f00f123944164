//! The runtime engine of one host: object spaces, queues, the interpreter, and
//! the network side of remote operations.

mod events;
mod interp;
mod intrinsics;
mod marshal;
mod netio;
mod queue;
mod remote;

use std::cell::{Cell, RefCell};
use std::collections::{BTreeMap, HashMap, HashSet};
use std::rc::Rc;
use std::sync::{Arc, Mutex};

use futures::future::LocalBoxFuture;
use futures::FutureExt;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::config::EngineConfig;
use crate::error::{EngineError, EngineResult, FaultCode};
use crate::net::msg::NodeKey;
use crate::rt::{Handle, TaskGroup};
use crate::runpack::ir::{ClassDesc, MethodDesc};
use crate::runpack::store::Origin;
use crate::runpack::{PackStore, RunpackImage};
use crate::security::{check_access, Access, CredentialSet, Privilege, Sid};
use crate::stdlib::{self, PipeTable, HOST_GROUP_CLASS, STD_PACKAGE};
use crate::value::{ClassKey, Object, ObjectCell, ObjectRef, ObjectTable, Space, Value, HOSTS_NODE_OID};

pub use events::EventState;
pub use interp::Ctx;
pub use netio::LinkId;
pub use queue::Queue;

/// Where an engine's program output goes.
pub trait Output {
    fn write(&self, bytes: &[u8]);
}

/// Process stdout, flushed after every write.
pub struct StdoutSink;

impl Output for StdoutSink {
    fn write(&self, bytes: &[u8]) {
        use std::io::Write;
        let mut out = std::io::stdout().lock();
        let _ = out.write_all(bytes);
        let _ = out.flush();
    }
}

impl Output for RefCell<Vec<u8>> {
    fn write(&self, bytes: &[u8]) {
        self.borrow_mut().extend_from_slice(bytes);
    }
}

impl Output for Mutex<Vec<u8>> {
    fn write(&self, bytes: &[u8]) {
        self.lock().expect("output buffer").extend_from_slice(bytes);
    }
}

impl<T: Output + ?Sized> Output for Rc<T> {
    fn write(&self, bytes: &[u8]) {
        (**self).write(bytes)
    }
}

impl<T: Output + ?Sized> Output for Arc<T> {
    fn write(&self, bytes: &[u8]) {
        (**self).write(bytes)
    }
}

/// Counters exposed for tests and transcripts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Stats {
    pub access_checks: u64,
    pub access_denied: u64,
    pub fetch_requests: u64,
    pub packs_fetched: u64,
    pub events_fired: u64,
    pub frames_sent: u64,
    pub frames_received: u64,
}

#[derive(Default)]
struct Counters {
    access_checks: Cell<u64>,
    access_denied: Cell<u64>,
    fetch_requests: Cell<u64>,
    packs_fetched: Cell<u64>,
    events_fired: Cell<u64>,
    frames_sent: Cell<u64>,
    frames_received: Cell<u64>,
}

fn bump(c: &Cell<u64>) {
    c.set(c.get() + 1);
}

/// A notable engine occurrence (link changes, evictions, failed posts).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogEntry {
    pub tick: u64,
    pub text: String,
}

/// A class together with the image that defines it.
#[derive(Clone)]
pub(crate) struct ClassInfo {
    pub img: Arc<RunpackImage>,
    pub pkg: Rc<str>,
    pub index: u32,
}

impl ClassInfo {
    pub fn desc(&self) -> &ClassDesc {
        &self.img.classes[self.index as usize]
    }

    pub fn method(&self, m: u32) -> EngineResult<&MethodDesc> {
        self.desc()
            .methods
            .get(m as usize)
            .ok_or_else(|| EngineError::AccessViolation(format!("class {} has no method #{m}", self.desc().name)))
    }
}

pub(crate) struct Inner {
    name: Rc<str>,
    cfg: EngineConfig,
    rt: Handle,
    group: TaskGroup,
    incarnation: u64,
    sid: Sid,
    host_map: RefCell<CredentialSet>,
    store: PackStore,
    images: RefCell<HashMap<Rc<str>, Arc<RunpackImage>>>,
    heap: RefCell<ObjectTable>,
    partitions: RefCell<BTreeMap<u32, ObjectTable>>,
    queues: RefCell<BTreeMap<u64, Rc<Queue>>>,
    next_qid: Cell<u64>,
    net: RefCell<netio::NetState>,
    fetches: RefCell<HashMap<String, netio::SharedFetch>>,
    out: Rc<dyn Output>,
    pipes: RefCell<PipeTable>,
    events: RefCell<BTreeMap<u64, events::EventRec>>,
    traversals: RefCell<HashSet<(u64, NodeKey)>>,
    counters: Counters,
    rng: RefCell<ChaCha8Rng>,
    log: RefCell<Vec<LogEntry>>,
    alive: Cell<bool>,
}

/// Cheap to clone; all clones drive the same host.
#[derive(Clone)]
pub struct Engine(pub(crate) Rc<Inner>);

fn seed_for(cfg: &EngineConfig) -> u64 {
    let d = Sha256::digest(cfg.host.as_bytes());
    u64::from_be_bytes(d[..8].try_into().expect("8 bytes")) ^ cfg.seed
}

impl Engine {
    /// Creates the engine and starts its housekeeping tasks on `rt` under `group`.
    pub fn new(cfg: EngineConfig, rt: Handle, group: TaskGroup, out: Rc<dyn Output>) -> Engine {
        let mut rng = ChaCha8Rng::seed_from_u64(seed_for(&cfg));
        let sid = cfg.sid.unwrap_or_else(|| Sid::generate(&mut rng));
        let host_map = cfg.build_host_map(sid);
        let name: Rc<str> = cfg.host.as_str().into();
        let store = PackStore::new();
        let std_img = Arc::new(stdlib::standard_image().clone());
        store.insert(std_img.clone(), Origin::LocalDisk).expect("fresh store");
        let std_name: Rc<str> = STD_PACKAGE.into();
        let mut images = HashMap::new();
        images.insert(std_name.clone(), std_img);

        let mut p0 = ObjectTable::with_first_id(HOSTS_NODE_OID + 1);
        p0.insert_at(
            HOSTS_NODE_OID,
            Object {
                class: ClassKey::User { package: std_name, index: HOST_GROUP_CLASS },
                fields: vec![Value::Ref(ObjectRef::host(&name))],
                acl: None,
            },
        );
        let mut partitions = BTreeMap::new();
        partitions.insert(0, p0);

        let service = Queue::new(0, vec![Sid::ANONYMOUS, sid]);
        let mut queues = BTreeMap::new();
        queues.insert(0, service);

        let inner = Inner {
            net: RefCell::new(netio::NetState::new(&name)),
            name,
            incarnation: 1,
            sid,
            host_map: RefCell::new(host_map),
            store,
            images: RefCell::new(images),
            heap: RefCell::new(ObjectTable::default()),
            partitions: RefCell::new(partitions),
            queues: RefCell::new(queues),
            next_qid: Cell::new(1),
            fetches: RefCell::new(HashMap::new()),
            out,
            pipes: RefCell::new(PipeTable::default()),
            events: RefCell::new(BTreeMap::new()),
            traversals: RefCell::new(HashSet::new()),
            counters: Counters::default(),
            rng: RefCell::new(rng),
            log: RefCell::new(Vec::new()),
            alive: Cell::new(true),
            cfg,
            rt,
            group,
        };
        let e = Engine(Rc::new(inner));
        e.start_housekeeping();
        e
    }

    pub fn name(&self) -> &str {
        &self.0.name
    }

    pub(crate) fn name_rc(&self) -> Rc<str> {
        self.0.name.clone()
    }

    pub fn sid(&self) -> Sid {
        self.0.sid
    }

    pub fn config(&self) -> &EngineConfig {
        &self.0.cfg
    }

    pub fn runtime(&self) -> &Handle {
        &self.0.rt
    }

    pub fn group(&self) -> TaskGroup {
        self.0.group
    }

    pub fn now(&self) -> u64 {
        self.0.rt.now()
    }

    pub fn is_alive(&self) -> bool {
        self.0.alive.get()
    }

    pub fn store(&self) -> &PackStore {
        &self.0.store
    }

    pub fn stats(&self) -> Stats {
        let c = &self.0.counters;
        Stats {
            access_checks: c.access_checks.get(),
            access_denied: c.access_denied.get(),
            fetch_requests: c.fetch_requests.get(),
            packs_fetched: c.packs_fetched.get(),
            events_fired: c.events_fired.get(),
            frames_sent: c.frames_sent.get(),
            frames_received: c.frames_received.get(),
        }
    }

    pub fn log_entries(&self) -> Vec<LogEntry> {
        self.0.log.borrow().clone()
    }

    pub(crate) fn log(&self, text: impl Into<String>) {
        let text = text.into();
        log::debug!("[{}] {}", self.0.name, text);
        self.0.log.borrow_mut().push(LogEntry { tick: self.now(), text });
    }

    pub(crate) fn write_out(&self, bytes: &[u8]) {
        self.0.out.write(bytes);
    }

    pub(crate) fn spawn(&self, fut: impl std::future::Future<Output = ()> + 'static) {
        self.0.rt.spawn_in(self.0.group, fut);
    }

    pub(crate) fn fresh_id(&self) -> u64 {
        self.0.rng.borrow_mut().next_u64()
    }

    /// Replaces the host map; the engine's own Sid always keeps ADMIN.
    pub fn set_host_map(&self, mut map: CredentialSet) {
        map.grant(self.0.sid, crate::security::PrivilegeMask::ALL);
        *self.0.host_map.borrow_mut() = map;
    }

    pub fn host_map(&self) -> CredentialSet {
        self.0.host_map.borrow().clone()
    }

    /// One access decision; every call is counted.
    pub(crate) fn authorize(&self, sids: &[Sid], acl: Option<&CredentialSet>, op: Privilege) -> EngineResult<()> {
        bump(&self.0.counters.access_checks);
        match check_access(sids, acl, &self.0.host_map.borrow(), op) {
            Access::Allow => Ok(()),
            Access::Deny(layer) => {
                bump(&self.0.counters.access_denied);
                Err(EngineError::AccessDenied(layer))
            }
        }
    }

    /// Attaches an ACL to a local object.
    pub fn set_acl(&self, r: &ObjectRef, acl: Option<CredentialSet>) -> EngineResult<()> {
        let cell = self.object(r).ok_or_else(|| self.fault(FaultCode::NullReference, format!("no object {r}")))?;
        cell.borrow_mut().acl = acl;
        Ok(())
    }

    pub(crate) fn fault(&self, code: FaultCode, message: impl Into<String>) -> EngineError {
        EngineError::fault(code, &self.0.name, message)
    }

    // ---- packages and classes ------------------------------------------------

    /// Installs an image loaded from local storage.
    pub fn install(&self, image: RunpackImage) -> EngineResult<Arc<RunpackImage>> {
        self.install_arc(Arc::new(image), Origin::LocalDisk)
    }

    pub(crate) fn install_arc(&self, image: Arc<RunpackImage>, origin: Origin) -> EngineResult<Arc<RunpackImage>> {
        image
            .validate(Some(stdlib::standard_classes()))
            .map_err(|e| EngineError::Protocol(format!("invalid image {}: {e}", image.name)))?;
        let name = image.name.clone();
        let img = self.0.store.insert(image, origin).map_err(|_| EngineError::HashMismatch(name))?;
        self.0.images.borrow_mut().insert(img.name.as_str().into(), img.clone());
        Ok(img)
    }

    pub(crate) fn image(&self, pkg: &str) -> Option<(Rc<str>, Arc<RunpackImage>)> {
        if let Some((k, v)) = self.0.images.borrow().get_key_value(pkg) {
            return Some((k.clone(), v.clone()));
        }
        let img = self.0.store.resolve(pkg)?;
        let key: Rc<str> = pkg.into();
        self.0.images.borrow_mut().insert(key.clone(), img.clone());
        Some((key, img))
    }

    pub(crate) fn class_info(&self, key: &ClassKey) -> EngineResult<ClassInfo> {
        match key {
            ClassKey::User { package, index } => {
                let (pkg, img) = self.image(package).ok_or_else(|| EngineError::UnknownClass(format!("{package}#{index}")))?;
                if *index as usize >= img.classes.len() {
                    return Err(EngineError::UnknownClass(format!("{package}#{index}")));
                }
                Ok(ClassInfo { img, pkg, index: *index })
            }
            ClassKey::Host => Err(EngineError::AccessViolation("host objects have no class body".into())),
            ClassKey::Queue => Err(EngineError::AccessViolation("queue objects have no class body".into())),
        }
    }

    pub(crate) fn class_name(&self, key: &ClassKey) -> String {
        match key {
            ClassKey::Host => "host".into(),
            ClassKey::Queue => "queue".into(),
            ClassKey::User { package, index } => match self.class_info(key) {
                Ok(ci) => ci.desc().name.clone(),
                Err(_) => format!("{package}#{index}"),
            },
        }
    }

    pub(crate) fn host_group_key(&self) -> ClassKey {
        ClassKey::User { package: STD_PACKAGE.into(), index: HOST_GROUP_CLASS }
    }

    /// The `hosts` group node of `host`.
    pub(crate) fn hosts_node(&self, host: &str) -> ObjectRef {
        ObjectRef { host: host.into(), space: Space::Partition(0), oid: HOSTS_NODE_OID, class: self.host_group_key() }
    }

    // ---- object spaces -------------------------------------------------------

    /// A local object's cell. `None` for remote refs, hosts, queues and unknown ids.
    pub(crate) fn object(&self, r: &ObjectRef) -> Option<ObjectCell> {
        if !r.is_on(&self.0.name) || matches!(r.class, ClassKey::Host | ClassKey::Queue) {
            return None;
        }
        match r.space {
            Space::Heap => self.0.heap.borrow().get(r.oid),
            Space::Partition(p) => self.0.partitions.borrow().get(&p).and_then(|t| t.get(r.oid)),
        }
    }

    pub(crate) fn alloc(&self, space: Space, obj: Object) -> (ObjectRef, ObjectCell) {
        let class = obj.class.clone();
        let (oid, cell) = match space {
            Space::Heap => self.0.heap.borrow_mut().insert(obj),
            Space::Partition(p) => self.0.partitions.borrow_mut().entry(p).or_insert_with(|| ObjectTable::with_first_id(1)).insert(obj),
        };
        (ObjectRef { host: self.0.name.clone(), space, oid, class }, cell)
    }

    /// Allocates an instance with default field values; the constructor is not run.
    pub(crate) fn alloc_instance(&self, key: &ClassKey, space: Space) -> EngineResult<ObjectRef> {
        let ci = self.class_info(key)?;
        let fields = ci.desc().fields.iter().map(|f| Value::default_for(&f.ty)).collect();
        Ok(self.alloc(space, Object { class: key.clone(), fields, acl: None }).0)
    }

    /// Field values of a local object, for inspection by tests and tools.
    pub fn fields_of(&self, r: &ObjectRef) -> Option<Vec<Value>> {
        self.object(r).map(|c| c.borrow().fields.clone())
    }

    // ---- queues ----------------------------------------------------------------

    pub fn service_queue(&self) -> Rc<Queue> {
        self.0.queues.borrow()[&0].clone()
    }

    pub(crate) fn queue(&self, qid: u64) -> Option<Rc<Queue>> {
        self.0.queues.borrow().get(&qid).cloned()
    }

    pub fn new_queue(&self, creds: Vec<Sid>) -> Rc<Queue> {
        let qid = self.0.next_qid.get();
        self.0.next_qid.set(qid + 1);
        let q = Queue::new(qid, creds);
        self.0.queues.borrow_mut().insert(qid, q.clone());
        q
    }

    /// Local queue credentials: the anonymous Sid plus this host's own.
    pub fn default_creds(&self) -> Vec<Sid> {
        vec![Sid::ANONYMOUS, self.0.sid]
    }

    pub fn queue_ref(&self, q: &Queue) -> ObjectRef {
        ObjectRef::queue(&self.0.name, q.qid)
    }

    pub(crate) fn enqueue(&self, q: &Rc<Queue>, chain: u64, job: queue::Job) -> EngineResult<()> {
        if q.push(chain, job)? {
            self.spawn(q.clone().work());
        }
        Ok(())
    }

    /// Runs `f` on `q` and waits for its result. A request belonging to the chain
    /// the queue is already executing runs immediately instead of waiting behind it.
    pub(crate) async fn run_on<T: 'static>(
        &self,
        q: &Rc<Queue>,
        chain: u64,
        f: impl FnOnce() -> LocalBoxFuture<'static, EngineResult<T>> + 'static,
    ) -> EngineResult<T> {
        if q.current_chain() == Some(chain) {
            return f().await;
        }
        let (job, rx) = queue::reply_job(f);
        self.enqueue(q, chain, job)?;
        rx.await.unwrap_or(Err(EngineError::QueueClosed))
    }

    /// True when no local queue has work.
    pub fn is_idle(&self) -> bool {
        self.0.queues.borrow().values().all(|q| q.is_idle())
    }

    pub fn queue_count(&self) -> usize {
        self.0.queues.borrow().len()
    }

    // ---- programs --------------------------------------------------------------

    /// Runs `main` of an installed package on a fresh queue. Returns main's int
    /// result, or 0 when main is void.
    pub async fn run_main(&self, package: &str, argv: Vec<Vec<u8>>) -> EngineResult<i64> {
        let (pkg, img) = self.image(package).ok_or(EngineError::NoMainFound)?;
        let (ci, mi) = img.main_method().ok_or(EngineError::NoMainFound)?;
        let m = &img.classes[ci as usize].methods[mi as usize];
        let args = if m.params.is_empty() {
            vec![]
        } else {
            let items = argv.iter().map(|a| Value::str(a)).collect();
            vec![Value::array(crate::value::ArrayData::Ref(items))]
        };
        let q = self.new_queue(self.default_creds());
        let chain = self.fresh_id();
        let key = ClassKey::User { package: pkg, index: ci };
        let ctx = Ctx { eng: self.clone(), queue: q.clone(), chain };
        let v = self.run_on(&q, chain, move || interp::exec_method(ctx, key, mi, None, args)).await?;
        Ok(match v {
            Value::Int(i) => i,
            Value::Char(c) => c as i64,
            _ => 0,
        })
    }

    /// A context for driving methods directly from Rust (tests, tools).
    pub fn context(&self, q: &Rc<Queue>) -> Ctx {
        Ctx { eng: self.clone(), queue: q.clone(), chain: self.fresh_id() }
    }

    /// Creates an object of `class` from `package` on this host and runs its constructor.
    pub async fn create_local(&self, package: &str, class: &str, args: Vec<Value>) -> EngineResult<ObjectRef> {
        let key = self.user_class(package, class)?;
        let ctx = self.context(&self.service_queue());
        interp::construct(&ctx, &key, Space::Partition(0), args).await
    }

    /// Calls a method by name on a (local or remote) object from a fresh chain on `q`.
    pub async fn call(&self, q: &Rc<Queue>, target: &ObjectRef, method: &str, args: Vec<Value>) -> EngineResult<Value> {
        let ci = self.class_info(&target.class)?;
        let m = ci
            .desc()
            .method_index(method)
            .ok_or_else(|| EngineError::AccessViolation(format!("no method {method}")))?;
        let ctx = self.context(q);
        interp::invoke(&ctx, target, m, args).await
    }

    pub fn user_class(&self, package: &str, class: &str) -> EngineResult<ClassKey> {
        let (pkg, img) = self.image(package).ok_or_else(|| EngineError::UnknownClass(format!("{package}.{class}")))?;
        let index = img.class_index(class).ok_or_else(|| EngineError::UnknownClass(format!("{package}.{class}")))?;
        Ok(ClassKey::User { package: pkg, index })
    }

    /// Stops the engine: tasks are dropped, links closed, queues closed.
    pub fn shutdown(&self) {
        if !self.0.alive.replace(false) {
            return;
        }
        self.close_all_links();
        for q in self.0.queues.borrow().values() {
            q.close();
        }
        self.0.rt.kill_group(self.0.group);
    }
}

/// Completes when `f` returns true, polling on `rt`'s clock.
pub async fn wait_until(rt: &Handle, step_ms: u64, mut f: impl FnMut() -> bool) {
    while !f() {
        rt.sleep(step_ms).await;
    }
}

pub(crate) type BoxFut<'a, T> = LocalBoxFuture<'a, T>;

pub(crate) fn boxed<'a, T>(f: impl std::future::Future<Output = T> + 'a) -> BoxFut<'a, T> {
    f.boxed_local()
}

// ---- group traversal hooks -------------------------------------------------------

impl Engine {
    /// Records a visit of `node` by traversal `tid`; false if it was already visited here.
    pub(crate) fn claim_visit(&self, tid: u64, node: &NodeKey) -> bool {
        self.0.traversals.borrow_mut().insert((tid, node.clone()))
    }
}

/// Runs an iterator body on a local group node.
pub(crate) async fn run_body(ctx: &Ctx, node: &ObjectRef, method: u32, args: Vec<Value>, on_service: bool) -> EngineResult<()> {
    if on_service {
        let eng = &ctx.eng;
        let (c2, n2) = (ctx.clone(), node.clone());
        let params = eng.class_info(&node.class)?.method(method)?.params.clone();
        let args = eng.prepare_local_args(&params, args)?;
        eng.run_on(&eng.service_queue(), ctx.chain, move || interp::exec_method(c2, n2.class.clone(), method, Some(n2), args)).await?;
    } else {
        interp::invoke(ctx, node, method, args).await?;
    }
    Ok(())
}

/// Members directly below a local group node, from its `children()` method.
pub(crate) async fn children_of(ctx: &Ctx, node: &ObjectRef) -> EngineResult<Vec<ObjectRef>> {
    let ci = ctx.eng.class_info(&node.class)?;
    let Some(m) = ci.desc().method_index("children") else { return Ok(Vec::new()) };
    let v = interp::exec_method(ctx.clone(), node.class.clone(), m, Some(node.clone()), Vec::new()).await?;
    let items = match v {
        Value::Array(a) => match &*a.borrow() {
            crate::value::ArrayData::Ref(items) => items.clone(),
            _ => Vec::new(),
        },
        _ => Vec::new(),
    };
    Ok(items.into_iter().filter_map(|v| if let Value::Ref(r) = v { Some(r) } else { None }).collect())
}

pub(crate) async fn remote_iterate(ctx: &Ctx, node: &ObjectRef, method: u32, args: &[Value], tid: u64, visited: Vec<NodeKey>) -> EngineResult<()> {
    remote::iterate(ctx, node, method, args, tid, visited).await
}
