//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits nonzero
//! if any criterion fails.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::io::{BufRead, BufReader, Read};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, ExitStatus, Stdio};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use minihello::engine::EventState;
use minihello::frontend::SourceUnit;
use minihello::net::FrameKind;
use minihello::security::{check_access, Access, CredentialSet, Layer, Privilege, PrivilegeMask, Sid};
use minihello::sim::{run_scenario, Action, HostSpec, LinkSpec, SimNet, Topology};
use minihello::value::ArrayData;
use minihello::{compile, translate, Engine, EngineError, ObjectRef, RunpackImage, Value};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 10] = [
        (1, "broadcast on a 3-host mesh", broadcast),
        (2, "remote shell streams byte-identical output", remote_shell),
        (3, "queue barrier after N posts", queue_barrier),
        (4, "deep copy preserves object graphs", deep_copy),
        (5, "on-demand runpack transfer", pack_transfer),
        (6, "multi-hop routing and unreachable host", multi_hop),
        (7, "group traversal visits each host once", group_traversal),
        (8, "event fires exactly once", event_completion),
        (9, "security gating and access truth table", security_gating),
        (10, "determinism and TCP equivalence", determinism_and_tcp),
    ];
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (n, title, f) in criteria {
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let r = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        match r {
            Ok(detail) => println!("criterion {n:>2}: PASS  {title} [{detail}] ({secs:.1}s)"),
            Err(why) => {
                failed += 1;
                println!("criterion {n:>2}: FAIL  {title}: {why} ({secs:.1}s)");
            }
        }
    }
    println!("acceptance: {} of {ran} criteria pass", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

// ---- shared helpers ------------------------------------------------------------

const BIG: usize = 10 * 1024 * 1024;
const BIG_CMD: &str = "yes mini-hello-remote-shell-output | head -c 10485760";

fn workspace() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn tempdir() -> Result<tempfile::TempDir, String> {
    tempfile::tempdir().map_err(|e| e.to_string())
}

/// Compiles a sample package with the `het` binary.
fn het(pkg: &str, out: &Path) -> Result<RunpackImage, String> {
    let dir = workspace().join("samples").join(pkg);
    let o = Command::new(env!("CARGO_BIN_EXE_het"))
        .arg(&dir)
        .arg("-o")
        .arg(out)
        .arg("-q")
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(o.status.success(), "het {pkg}: {}", String::from_utf8_lossy(&o.stderr));
    let bytes = std::fs::read(out).map_err(|e| e.to_string())?;
    RunpackImage::deserialize(&bytes).map_err(|e| e.to_string())
}

fn source_image(file: &str, src: &str) -> RunpackImage {
    let pkg = translate(&[SourceUnit::new(file, src)]).unwrap_or_else(|e| panic!("{e}"));
    compile(&pkg).unwrap()
}

/// Runs `hee sim` on a topology; returns the transcript and each host's output.
fn hee_sim(topo: &str, dir: &Path, seed: u64) -> Result<(String, BTreeMap<String, Vec<u8>>), String> {
    let topo_path = dir.join("scenario.topo");
    std::fs::write(&topo_path, topo).map_err(|e| e.to_string())?;
    let outs = dir.join(format!("out-{seed}"));
    let transcript = dir.join(format!("transcript-{seed}.txt"));
    let o = Command::new(env!("CARGO_BIN_EXE_hee"))
        .arg("sim")
        .arg(&topo_path)
        .arg("--seed")
        .arg(seed.to_string())
        .arg("--stdout-dir")
        .arg(&outs)
        .arg("--transcript")
        .arg(&transcript)
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(o.status.success(), "hee sim exit {:?}: {}", o.status.code(), String::from_utf8_lossy(&o.stderr));
    let mut hosts = BTreeMap::new();
    for e in std::fs::read_dir(&outs).map_err(|e| e.to_string())? {
        let p = e.map_err(|e| e.to_string())?.path();
        let name = p.file_stem().unwrap().to_string_lossy().into_owned();
        hosts.insert(name, std::fs::read(&p).map_err(|e| e.to_string())?);
    }
    let t = std::fs::read_to_string(&transcript).map_err(|e| e.to_string())?;
    Ok((t, hosts))
}

/// Exactly one greeting line, signed with the originator's name.
fn check_greeting(host: &str, out: &[u8], origin: &str) -> Result<(), String> {
    let text = String::from_utf8_lossy(out);
    let lines: Vec<&str> = text.lines().collect();
    ensure!(lines.len() == 1, "{host}: expected one line, got {text:?}");
    ensure!(lines[0].contains("Hello, world!"), "{host}: not a greeting: {:?}", lines[0]);
    ensure!(lines[0].split_whitespace().any(|w| w == origin), "{host}: greeting lacks '{origin}': {:?}", lines[0]);
    Ok(())
}

fn local_output(cmd: &str) -> Result<Vec<u8>, String> {
    let o = Command::new("sh").arg("-c").arg(format!("{cmd} 2>&1")).output().map_err(|e| e.to_string())?;
    Ok(o.stdout)
}

fn shell_args(bufcnt: u32, cmd: &str) -> Vec<String> {
    let mut v = vec!["b".to_string(), bufcnt.to_string()];
    v.extend(cmd.split_whitespace().map(str::to_string));
    v
}

/// Two linked simulated hosts; runs the shell's main on `a` against `b`.
fn shell_sim(img: &RunpackImage, bufcnt: u32, cmd: &str, seed: u64) -> Result<(Vec<u8>, SimNet), String> {
    let net = SimNet::new(seed);
    net.add_host("a");
    net.add_host("b");
    net.link("a", "b", 1).map_err(|e| e.to_string())?;
    net.run_until_quiescent();
    let slot = net.start_main("a", img, &shell_args(bufcnt, cmd)).map_err(|e| e.to_string())?;
    net.run_until_quiescent();
    let r = slot.borrow_mut().take().ok_or("shell main did not finish")?;
    ensure!(matches!(r, Ok(0)), "shell main returned {r:?}");
    Ok((net.stdout("a"), net))
}

fn two_hosts(seed: u64) -> SimNet {
    let net = SimNet::new(seed);
    net.add_host("a");
    net.add_host("b");
    net.link("a", "b", 1).unwrap();
    net.run_until_quiescent();
    net
}

// ---- 1 -----------------------------------------------------------------------------

const MESH: &str = "host a\nhost b\nhost c\nlink a b\nlink b c\nlink a c\nrun a hello.rpk\n";

fn broadcast() -> Outcome {
    let start = Instant::now();
    let dir = tempdir()?;
    het("hello_world", &dir.path().join("hello.rpk"))?;
    let (_, outs) = hee_sim(MESH, dir.path(), 1)?;
    for h in ["a", "b", "c"] {
        check_greeting(h, outs.get(h).map(Vec::as_slice).unwrap_or_default(), "a")?;
    }
    let took = start.elapsed();
    ensure!(took < Duration::from_secs(10), "took {took:?}");
    Ok(format!("3 greetings from a, {} ms", took.as_millis()))
}

// ---- 2 -----------------------------------------------------------------------------

fn remote_shell() -> Outcome {
    let dir = tempdir()?;
    let img = het("shell_world", &dir.path().join("shell.rpk"))?;
    let want = local_output(BIG_CMD)?;
    ensure!(want.len() == BIG, "reference command produced {} bytes", want.len());
    for n in [1, 4] {
        let (out, _) = shell_sim(&img, n, BIG_CMD, 2)?;
        ensure!(out == want, "BUFCNT={n}: received {} bytes, differs from local run", out.len());
    }
    let (out, net) = shell_sim(&img, 0, BIG_CMD, 2)?;
    ensure!(out.is_empty(), "BUFCNT=0 printed {} bytes", out.len());
    let frames = net.frames();
    let rcv = frames.iter().filter(|f| f.note.contains("rcv")).count();
    let back: usize = frames.iter().filter(|f| f.src == "b" && f.dst == "a").map(|f| f.payload).sum();
    ensure!(rcv == 0, "BUFCNT=0 sent {rcv} rcv frames");
    ensure!(back < 16 * 1024, "BUFCNT=0 moved {back} payload bytes b->a");
    Ok(format!("BUFCNT 1,4 identical over {BIG} bytes; BUFCNT 0 sent {back} control bytes back, no data"))
}

// ---- 3 -----------------------------------------------------------------------------

const BARRIER: &str = r#"
package barrier;

external class Counter {
    int n;
    external public Counter() {}
    public message void inc() { n = n + 1; }
    public external int get() { return n; }
}

class Main {
    static public int main(char [][]argv) {
        int posts = parse_int(argv[1]);
        host h = this_host;
        if (sizear(argv[0], 1) > 0)
            h = hello(argv[0]);
        Counter c = create (h) Counter();
        queue q = create (h) queue();
        for (int i = 0; i < posts; i++)
            q #> (c, inc());
        int one = q <=> 1;
        return c.get();
    }
}
"#;

fn queue_barrier() -> Outcome {
    let img = source_image("barrier.hlo", BARRIER);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for seed in 0..200u64 {
        let posts: i64 = rng.gen_range(1..=50);
        let remote = rng.gen_bool(0.5);
        let net = two_hosts(seed);
        let args = [if remote { "b" } else { "" }.to_string(), posts.to_string()];
        let slot = net.start_main("a", &img, &args).map_err(|e| e.to_string())?;
        net.run_until_quiescent();
        let r = slot.borrow_mut().take();
        ensure!(matches!(r, Some(Ok(v)) if v == posts), "seed {seed}: {posts} posts (remote {remote}), barrier saw {r:?}");
    }
    Ok("200 schedules, local and remote queues".into())
}

// ---- 4 -----------------------------------------------------------------------------

const GRAPHS: &str = r#"
package graphs;

external class Node {
    int id;
    Node a;
    Node b;
    external public Node() {}
}

external class Builder {
    external public Builder() {}

    // two successor indexes per node, -1 for none
    public external Node build(int []edges) {
        int n = sizear(edges, 1) / 2;
        Node []ns = new Node[n];
        for (int i = 0; i < n; i++) {
            ns[i] = new Node();
            ns[i].id = i;
        }
        for (int i = 0; i < n; i++) {
            if (edges[2 * i] >= 0)
                ns[i].a = ns[edges[2 * i]];
            if (edges[2 * i + 1] >= 0)
                ns[i].b = ns[edges[2 * i + 1]];
        }
        return ns[0];
    }
}

external class Sink {
    Node kept;
    external public Sink() {}
    public external int keep(copy Node root) {
        kept = root;
        return 1;
    }
}
"#;

/// Canonical form of the graph reachable from `root`: nodes numbered in BFS
/// order (successor `a` before `b`), each as (id, a, b). Two rooted graphs with
/// ordered edges are isomorphic iff their canonical forms are equal.
fn canonical(eng: &Engine, root: &Value) -> Result<(Vec<(i64, Option<usize>, Option<usize>)>, Vec<ObjectRef>), String> {
    let Value::Ref(r) = root else { return Err(format!("root is {root:?}")) };
    let mut index: HashMap<ObjectRef, usize> = HashMap::new();
    let mut order = vec![r.clone()];
    index.insert(r.clone(), 0);
    let mut q = VecDeque::from([r.clone()]);
    let mut rows = Vec::new();
    while let Some(n) = q.pop_front() {
        let f = eng.fields_of(&n).ok_or_else(|| format!("dangling ref {n:?}"))?;
        let id = f[0].as_int();
        let mut succ = [None, None];
        for (k, v) in f[1..3].iter().enumerate() {
            if let Value::Ref(s) = v {
                let next = order.len();
                let i = *index.entry(s.clone()).or_insert_with(|| {
                    order.push(s.clone());
                    q.push_back(s.clone());
                    next
                });
                succ[k] = Some(i);
            }
        }
        rows.push((id, succ[0], succ[1]));
    }
    Ok((rows, order))
}

fn deep_copy() -> Outcome {
    let img = source_image("graphs.hlo", GRAPHS);
    let net = two_hosts(4);
    let (a, b) = (net.engine("a").unwrap(), net.engine("b").unwrap());
    a.install(img.clone()).map_err(|e| e.to_string())?;
    b.install(img).map_err(|e| e.to_string())?;
    let builder = net.block_on({ let a = a.clone(); async move { a.create_local("graphs", "Builder", vec![]).await } })
        .unwrap()
        .map_err(|e| e.to_string())?;
    let sink = net.block_on({ let b = b.clone(); async move { b.create_local("graphs", "Sink", vec![]).await } })
        .unwrap()
        .map_err(|e| e.to_string())?;
    let q = a.new_queue(a.default_creds());
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut cyclic, mut shared, mut total) = (0, 0, 0);
    for g in 0..100 {
        let n = rng.gen_range(1..=20usize);
        let edges: Vec<i64> = (0..2 * n).map(|_| if rng.gen_bool(0.2) { -1 } else { rng.gen_range(0..n) as i64 }).collect();
        let root = net
            .block_on({
                let (a, q, builder) = (a.clone(), q.clone(), builder.clone());
                async move { a.call(&q, &builder, "build", vec![Value::array(ArrayData::Int(edges))]).await }
            })
            .unwrap()
            .map_err(|e| format!("graph {g}: build: {e}"))?;
        let (src, src_nodes) = canonical(&a, &root)?;

        // oracle: local encode/decode with the identity map
        let bytes = a.export_value(&root, true).map_err(|e| e.to_string())?;
        let local = a.import_value(&bytes).map_err(|e| e.to_string())?;
        let (oracle, oracle_nodes) = canonical(&a, &local)?;
        ensure!(oracle == src, "graph {g}: local round trip differs");
        ensure!(oracle_nodes.iter().all(|r| !src_nodes.contains(r)), "graph {g}: local copy shares nodes");

        let r = net
            .block_on({
                let (a, q, sink, root) = (a.clone(), q.clone(), sink.clone(), root.clone());
                async move { a.call(&q, &sink, "keep", vec![root]).await }
            })
            .unwrap();
        ensure!(matches!(r, Ok(Value::Int(1))), "graph {g}: keep returned {r:?}");
        let kept = b.fields_of(&sink).ok_or("sink vanished")?[0].clone();
        let (copy, copy_nodes) = canonical(&b, &kept)?;
        ensure!(copy.len() == src.len(), "graph {g}: {} nodes copied, source has {}", copy.len(), src.len());
        ensure!(copy == src, "graph {g}: copy is not isomorphic to its source");
        ensure!(copy == oracle, "graph {g}: copy differs from the local oracle");
        ensure!(copy_nodes.iter().all(|r| r.is_on("b")), "graph {g}: copy refers back to a");

        total += src.len();
        let mut indeg = vec![0; src.len()];
        let mut back = false;
        for (i, (_, x, y)) in src.iter().enumerate() {
            for s in [x, y].into_iter().flatten() {
                indeg[*s] += 1;
                back |= *s <= i;
            }
        }
        cyclic += back as usize;
        shared += indeg.iter().any(|d| *d > 1) as usize;
    }
    ensure!(cyclic > 10 && shared > 10, "generator too tame: {cyclic} cyclic, {shared} shared");
    Ok(format!("100 graphs, {total} nodes, {cyclic} with back edges, {shared} with shared nodes"))
}

// ---- 5 -----------------------------------------------------------------------------

fn pack_transfer() -> Outcome {
    let dir = tempdir()?;
    let img = het("shell_world", &dir.path().join("shell.rpk"))?;
    let net = two_hosts(5);
    ensure!(net.engine("b").unwrap().store().resolve("shell_world").is_none(), "b already has shell_world");
    let slot = net.start_main("a", &img, &shell_args(1, "echo fetched")).map_err(|e| e.to_string())?;
    net.run_until_quiescent();
    let r = slot.borrow_mut().take();
    ensure!(matches!(r, Some(Ok(0))), "main returned {r:?}");
    ensure!(net.stdout("a") == b"fetched\n", "output {:?}", String::from_utf8_lossy(&net.stdout("a")));
    let frames = net.frames();
    let fetch: Vec<_> = frames.iter().filter(|f| f.kind == FrameKind::FetchPack).collect();
    let data: Vec<_> = frames.iter().filter(|f| f.kind == FrameKind::PackData).collect();
    ensure!(fetch.len() == 1 && data.len() == 1, "{} FETCH_PACK and {} PACK_DATA frames", fetch.len(), data.len());
    ensure!(fetch[0].src == "b" && data[0].src == "a", "exchange direction {}->{}", fetch[0].src, data[0].src);
    let got = net.engine("b").unwrap().store().resolve("shell_world").ok_or("b did not install shell_world")?;
    ensure!(got.hash == img.hash, "hash mismatch");
    Ok(format!("one exchange, {} bytes, hash {}", data[0].payload, &img.hash_hex()[..12]))
}

// ---- 6 -----------------------------------------------------------------------------

const CALLS: &str = r#"
package calls;

external class Echo {
    external public Echo() {}
    public external int ping(int x) { return x + 1; }
}

class Main {
    static public int main(char [][]argv) {
        host h = hello(argv[0]);
        if (h == null)
            return -1;
        Echo e = create (h) Echo();
        return e.ping(41);
    }
}
"#;

const CALL_TIMEOUT: u64 = 3000;

fn line_net(seed: u64) -> Result<SimNet, String> {
    let mut net = SimNet::new(seed);
    net.configure("call_timeout_ms", &CALL_TIMEOUT.to_string()).map_err(|e| e.to_string())?;
    for h in ["a", "b", "c"] {
        net.add_host(h);
    }
    net.link("a", "b", 1).map_err(|e| e.to_string())?;
    net.link("b", "c", 1).map_err(|e| e.to_string())?;
    net.run_until_quiescent();
    Ok(net)
}

fn ping(net: &SimNet, echo: &ObjectRef) -> std::rc::Rc<std::cell::RefCell<Option<Result<Value, EngineError>>>> {
    let a = net.engine("a").unwrap();
    let slot = std::rc::Rc::new(std::cell::RefCell::new(None));
    let (s, e) = (slot.clone(), echo.clone());
    net.runtime().spawn(async move {
        let q = a.new_queue(a.default_creds());
        let r = a.call(&q, &e, "ping", vec![Value::Int(41)]).await;
        *s.borrow_mut() = Some(r);
    });
    slot
}

fn multi_hop() -> Outcome {
    let img = source_image("calls.hlo", CALLS);
    let mut notes = Vec::new();
    for in_flight in [false, true] {
        let net = line_net(6)?;
        ensure!(!net.engine("a").unwrap().neighbors().contains(&"c".to_string()), "a and c are neighbors");
        let (a, c) = (net.engine("a").unwrap(), net.engine("c").unwrap());
        a.install(img.clone()).map_err(|e| e.to_string())?;
        c.install(img.clone()).map_err(|e| e.to_string())?;
        let echo = net.block_on({ let c = c.clone(); async move { c.create_local("calls", "Echo", vec![]).await } })
            .unwrap()
            .map_err(|e| e.to_string())?;

        let before = net.frame_count();
        let slot = ping(&net, &echo);
        net.run_until_quiescent();
        let r = slot.borrow_mut().take();
        ensure!(matches!(r, Some(Ok(Value::Int(42)))), "a->c call returned {r:?}");
        let frames = &net.frames()[before..];
        ensure!(!frames.iter().any(|f| (f.src == "a" && f.dst == "c") || (f.src == "c" && f.dst == "a")), "direct a-c frame");
        let fwd_req = frames.iter().filter(|f| f.src == "b" && f.dst == "c" && f.note.starts_with("forward")).count();
        let fwd_rep = frames.iter().filter(|f| f.src == "b" && f.dst == "a" && f.note.starts_with("forward")).count();
        let sent = frames.iter().filter(|f| f.src == "a").count();
        ensure!(fwd_req == 1 && fwd_rep == 1 && sent == 1, "hops: a sent {sent}, b forwarded {fwd_req} requests and {fwd_rep} replies");

        let start = net.now();
        let slot = if in_flight {
            let s = ping(&net, &echo);
            net.runtime().run_until(start + 1);
            net.kill("b").map_err(|e| e.to_string())?;
            s
        } else {
            net.kill("b").map_err(|e| e.to_string())?;
            ping(&net, &echo)
        };
        net.run_until_quiescent();
        let r = slot.borrow_mut().take();
        let waited = net.now() - start;
        ensure!(matches!(r, Some(Err(EngineError::HostUnreachable(_)))), "after killing b: {r:?}");
        ensure!(waited <= CALL_TIMEOUT, "HostUnreachable after {waited} ticks");
        notes.push(format!("{} {waited} ticks", if in_flight { "in flight" } else { "fresh" }));
    }
    Ok(format!("one hop via b; HostUnreachable ({})", notes.join(", ")))
}

// ---- 7 -----------------------------------------------------------------------------

fn group_traversal() -> Outcome {
    let dir = tempdir()?;
    let img = het("hello_world", &dir.path().join("hello.rpk"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut hosts_total, mut cycles) = (0, 0);
    for t in 0..50u64 {
        let n = rng.gen_range(2..=8usize);
        let names: Vec<String> = (0..n).map(|i| format!("h{i}")).collect();
        let mut topo = Topology::default();
        topo.hosts = names.iter().map(|h| HostSpec { name: h.clone(), primary: false }).collect();
        let mut edges = Vec::new();
        for i in 1..n {
            edges.push((rng.gen_range(0..i), i));
        }
        for i in 0..n {
            for j in i + 1..n {
                if !edges.contains(&(i, j)) && rng.gen_bool(0.3) {
                    edges.push((i, j));
                }
            }
        }
        edges.shuffle(&mut rng);
        cycles += (edges.len() >= n) as usize;
        topo.links = edges
            .iter()
            .map(|(i, j)| LinkSpec { a: names[*i].clone(), b: names[*j].clone(), latency: rng.gen_range(1..=3) })
            .collect();
        let origin = names.choose(&mut rng).unwrap().clone();
        topo.script.push(Action::Run { host: origin.clone(), rpk: "hello".into(), args: vec![] });
        let tr = run_scenario(&topo, t, |_| Ok(img.clone())).map_err(|e| format!("topology {t}: {e}"))?;
        ensure!(matches!(tr.runs[0].result, Ok(0)), "topology {t}: main {:?}", tr.runs[0].result);
        for h in &names {
            check_greeting(h, tr.stdout(h), &origin).map_err(|e| format!("topology {t} ({n} hosts, {} links): {e}", edges.len()))?;
        }
        hosts_total += n;
    }
    ensure!(cycles > 10, "only {cycles} topologies had cycles");
    Ok(format!("50 topologies, {hosts_total} hosts, {cycles} with cycles"))
}

// ---- 8 -----------------------------------------------------------------------------

const EVENTS: &str = r#"
package events;

external class Tally {
    int fired;
    int last;
    external public Tally() {}
    public message void fire(int x, int y, int z) {
        fired = fired + 1;
        last = x * 100 + y * 10 + z;
    }
}
"#;

struct EventRig {
    net: SimNet,
    a: Engine,
    b: Engine,
    tally: ObjectRef,
    id: u64,
}

fn event_rig(seed: u64) -> Result<EventRig, String> {
    let img = source_image("events.hlo", EVENTS);
    let net = two_hosts(seed);
    let (a, b) = (net.engine("a").unwrap(), net.engine("b").unwrap());
    a.install(img).map_err(|e| e.to_string())?;
    let tally = net.block_on({ let a = a.clone(); async move { a.create_local("events", "Tally", vec![]).await } })
        .unwrap()
        .map_err(|e| e.to_string())?;
    let q = a.new_queue(a.default_creds());
    let id = a.create_event(&q, &tally, "fire", 3).map_err(|e| e.to_string())?;
    Ok(EventRig { net, a, b, tally, id })
}

/// Fill from queue 1 (local) or queue 2 (the remote host, via EVENT_POST).
async fn fill(r: (Engine, Engine, u64), remote: bool, slot: u32) -> Result<EventState, EngineError> {
    let (a, b, id) = r;
    let v = Value::Int(slot as i64 + 1);
    if remote {
        b.post_event("a", id, slot, v).await
    } else {
        a.fill_event(id, slot, v)
    }
}

fn check_fired(rig: &EventRig, what: &str) -> Result<(), String> {
    let f = rig.a.fields_of(&rig.tally).ok_or("tally vanished")?;
    ensure!(f[0].as_int() == 1, "{what}: fired {} times", f[0].as_int());
    ensure!(f[1].as_int() == 123, "{what}: arguments arrived as {}", f[1].as_int());
    ensure!(rig.a.stats().events_fired == 1, "{what}: events_fired = {}", rig.a.stats().events_fired);
    let again = rig.a.fill_event(rig.id, 0, Value::Int(9));
    ensure!(matches!(again, Err(EngineError::SlotAlreadyFilled(_))), "{what}: refill gave {again:?}");
    Ok(())
}

fn event_completion() -> Outcome {
    let mut cases = 0;
    for first in 0..3u32 {
        let rest: Vec<u32> = (0..3).filter(|s| *s != first).collect();
        for swap in [false, true] {
            let (s_local, s_remote) = if swap { (rest[1], rest[0]) } else { (rest[0], rest[1]) };
            for local_first in [true, false] {
                let what = format!("first slot {first}, local fills {s_local}, remote fills {s_remote}, local first {local_first}");
                let rig = event_rig(8)?;
                let st = rig.a.fill_event(rig.id, first, Value::Int(first as i64 + 1)).map_err(|e| e.to_string())?;
                ensure!(st == EventState::Pending, "{what}: after one fill {st:?}");
                let order = if local_first { [(false, s_local), (true, s_remote)] } else { [(true, s_remote), (false, s_local)] };
                let mut states = Vec::new();
                for (remote, slot) in order {
                    let ctx = (rig.a.clone(), rig.b.clone(), rig.id);
                    let st = rig.net.block_on(fill(ctx, remote, slot)).unwrap().map_err(|e| format!("{what}: {e}"))?;
                    states.push(st);
                }
                ensure!(states == [EventState::Pending, EventState::Fired], "{what}: states {states:?}");
                rig.net.run_until_quiescent();
                check_fired(&rig, &what)?;
                cases += 1;
            }
        }
    }
    // both final fills issued in the same instant, scheduler order left to the seed
    for seed in 0..40u64 {
        let rig = event_rig(seed)?;
        rig.a.fill_event(rig.id, 0, Value::Int(1)).map_err(|e| e.to_string())?;
        let results = std::rc::Rc::new(std::cell::RefCell::new(Vec::new()));
        for (remote, slot) in [(false, 1), (true, 2)] {
            let (res, ctx) = (results.clone(), (rig.a.clone(), rig.b.clone(), rig.id));
            rig.net.runtime().spawn(async move {
                let r = fill(ctx, remote, slot).await;
                res.borrow_mut().push(r);
            });
        }
        rig.net.run_until_quiescent();
        let fired = results.borrow().iter().filter(|r| matches!(r, Ok(EventState::Fired))).count();
        let ok = results.borrow().iter().all(|r| r.is_ok());
        ensure!(ok && fired == 1, "seed {seed}: fill results {:?}", results.borrow());
        check_fired(&rig, &format!("concurrent seed {seed}"))?;
        cases += 1;
    }
    Ok(format!("{cases} interleavings, one firing each"))
}

// ---- 9 -----------------------------------------------------------------------------

fn security_gating() -> Outcome {
    let img = source_image("calls.hlo", CALLS);
    let net = two_hosts(9);
    let (a, b) = (net.engine("a").unwrap(), net.engine("b").unwrap());
    let run = || -> Result<i64, EngineError> {
        let slot = net.start_main("a", &img, &["b".to_string()]).expect("start");
        net.run_until_quiescent();
        let r = slot.borrow_mut().take().expect("finished");
        r
    };
    b.set_host_map(CredentialSet::new());
    let r = run();
    ensure!(matches!(r, Err(EngineError::AccessDenied(Layer::Host))), "lockdown create: {r:?}");

    let mut hm = CredentialSet::new();
    hm.grant(a.sid(), PrivilegeMask::of(&[Privilege::Create]));
    b.set_host_map(hm.clone());
    let r = run();
    ensure!(matches!(r, Err(EngineError::AccessDenied(Layer::Host))), "CREATE only, invoke: {r:?}");

    hm.grant(a.sid(), PrivilegeMask::of(&[Privilege::Create, Privilege::Exec]));
    b.set_host_map(hm);
    let checks = b.stats().access_checks;
    let r = run();
    ensure!(matches!(r, Ok(42)), "after grant: {r:?}");
    let used = b.stats().access_checks - checks;
    ensure!(used == 2, "{used} access checks for one create and one invoke");

    // truth table: every host mask x every object ACL (or none) x every privilege
    let (s1, s2) = (Sid([1; 16]), Sid([2; 16]));
    let mut rows = 0;
    for creds in [vec![s1], vec![s1, s2]] {
        for hm_bits in 0u8..32 {
            for acl_bits in (0u8..32).map(Some).chain([None]) {
                let mut hm = CredentialSet::new();
                hm.grant(s1, PrivilegeMask::new(hm_bits).unwrap());
                let acl = acl_bits.map(|bits| {
                    let mut acl = CredentialSet::new();
                    acl.grant(*creds.last().unwrap(), PrivilegeMask::new(bits).unwrap());
                    acl
                });
                for (bit, op) in Privilege::ALL.iter().enumerate() {
                    let allows = |m: u8| m & (1 << bit) != 0 || m & 0x10 != 0;
                    let want = if !allows(hm_bits) {
                        Access::Deny(Layer::Host)
                    } else if acl_bits.is_some_and(|m| !allows(m)) {
                        Access::Deny(Layer::Object)
                    } else {
                        Access::Allow
                    };
                    let got = check_access(&creds, acl.as_ref(), &hm, *op);
                    ensure!(got == want, "hm {hm_bits:05b} acl {acl_bits:?} op {op:?}: got {got:?}, want {want:?}");
                    rows += 1;
                }
            }
        }
    }
    Ok(format!("denied then granted; 1 check per request; {rows} truth-table rows"))
}

// ---- 10 ----------------------------------------------------------------------------

/// A child process that is killed when dropped.
struct Proc {
    child: Child,
    addr: Option<String>,
    out: Option<thread::JoinHandle<Vec<u8>>>,
}

impl Drop for Proc {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn spawn_hee(args: &[String]) -> Result<Proc, String> {
    let mut child = Command::new(env!("CARGO_BIN_EXE_hee"))
        .args(args)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| e.to_string())?;
    let mut stdout = child.stdout.take().unwrap();
    let out = thread::spawn(move || {
        let mut v = Vec::new();
        let _ = stdout.read_to_end(&mut v);
        v
    });
    let stderr = child.stderr.take().unwrap();
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for line in BufReader::new(stderr).lines().map_while(Result::ok) {
            if let Some(a) = line.strip_prefix("listening on ") {
                let _ = tx.send(a.trim().to_string());
            } else {
                eprintln!("  hee: {line}");
            }
        }
    });
    let mut p = Proc { child, addr: None, out: Some(out) };
    if args.iter().any(|a| a == "--listen") {
        p.addr = Some(rx.recv_timeout(Duration::from_secs(10)).map_err(|_| "hee did not report its address")?);
    }
    Ok(p)
}

impl Proc {
    fn finish(mut self, limit: Duration) -> Result<(Option<ExitStatus>, Vec<u8>), String> {
        let start = Instant::now();
        let status = loop {
            if let Some(s) = self.child.try_wait().map_err(|e| e.to_string())? {
                break Some(s);
            }
            if start.elapsed() > limit {
                let _ = self.child.kill();
                let _ = self.child.wait();
                break None;
            }
            thread::sleep(Duration::from_millis(20));
        };
        let out = self.out.take().unwrap().join().unwrap_or_default();
        Ok((status, out))
    }

    fn stop(mut self) -> Vec<u8> {
        let _ = self.child.kill();
        let _ = self.child.wait();
        self.out.take().unwrap().join().unwrap_or_default()
    }
}

fn strs(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn determinism_and_tcp() -> Outcome {
    let dir = tempdir()?;
    let hello = dir.path().join("hello.rpk");
    let shell = dir.path().join("shell.rpk");
    het("hello_world", &hello)?;
    het("shell_world", &shell)?;

    // repeated simulator runs with one seed
    let mut sims = vec![MESH.to_string()];
    for n in [0, 1, 4] {
        sims.push(format!("host a\nhost b\nlink a b\nrun a shell.rpk b {n} {BIG_CMD}\n"));
    }
    for (i, topo) in sims.iter().enumerate() {
        let d1 = dir.path().join(format!("sim{i}-1"));
        let d2 = dir.path().join(format!("sim{i}-2"));
        for d in [&d1, &d2] {
            std::fs::create_dir_all(d).map_err(|e| e.to_string())?;
            std::fs::copy(&hello, d.join("hello.rpk")).map_err(|e| e.to_string())?;
            std::fs::copy(&shell, d.join("shell.rpk")).map_err(|e| e.to_string())?;
        }
        let (t1, o1) = hee_sim(topo, &d1, 42)?;
        let (t2, o2) = hee_sim(topo, &d2, 42)?;
        ensure!(t1 == t2 && o1 == o2, "scenario {i}: transcripts differ across runs with one seed");
    }

    // the same assertions over TCP loopback
    let serve = |name: &str, peers: &[&str]| -> Result<Proc, String> {
        let mut args = strs(&["--host", name, "--listen", "127.0.0.1:0", "--serve-ms", "60000"]);
        for p in peers {
            args.extend(strs(&["--peer", p]));
        }
        spawn_hee(&args)
    };
    let b = serve("b", &[])?;
    let b_addr = b.addr.clone().unwrap();
    let c = serve("c", &[&b_addr])?;
    let c_addr = c.addr.clone().unwrap();
    let start = Instant::now();
    let a = spawn_hee(&strs(&["--host", "a", "--peer", &b_addr, "--peer", &c_addr, "--run", hello.to_str().unwrap()]))?;
    let (status, out_a) = a.finish(Duration::from_secs(30))?;
    let took = start.elapsed();
    ensure!(status.is_some_and(|s| s.success()), "tcp hello: a exited {status:?}");
    thread::sleep(Duration::from_millis(100));
    let (out_b, out_c) = (b.stop(), c.stop());
    for (h, out) in [("a", &out_a), ("b", &out_b), ("c", &out_c)] {
        check_greeting(h, out, "a").map_err(|e| format!("tcp: {e}"))?;
    }
    ensure!(took < Duration::from_secs(10), "tcp hello took {took:?}");

    let want = local_output(BIG_CMD)?;
    let b = serve("b", &[])?;
    let b_addr = b.addr.clone().unwrap();
    for n in [1u32, 4, 0] {
        let mut args = strs(&["--host", "a", "--peer", &b_addr, "--run", shell.to_str().unwrap(), "--"]);
        args.extend(shell_args(n, BIG_CMD));
        let (status, out) = spawn_hee(&args)?.finish(Duration::from_secs(120))?;
        ensure!(status.is_some_and(|s| s.success()), "tcp shell BUFCNT={n}: exit {status:?}");
        if n == 0 {
            ensure!(out.is_empty(), "tcp shell BUFCNT=0 printed {} bytes", out.len());
        } else {
            ensure!(out == want, "tcp shell BUFCNT={n}: {} bytes, differs from local run", out.len());
        }
    }
    drop(b);
    Ok(format!("{} scenarios repeat byte-identically; TCP greeting in {} ms, shell 10 MiB identical", sims.len(), took.as_millis()))
}
