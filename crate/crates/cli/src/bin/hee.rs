//! hee: the engine. Joins the network over TCP and optionally runs a runpack's main,
//! or runs a topology file in the simulator (`hee sim`).

use std::cell::RefCell;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::rc::Rc;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use clap::{Args as ClapArgs, Parser, Subcommand};
use minihello::config::ConfigError;
use minihello::engine::{Output, StdoutSink};
use minihello::net::tcp::TcpNode;
use minihello::rt::{ClockKind, Handle, Policy};
use minihello::sim::{run_scenario, SimError, Topology};
use minihello::{Engine, EngineConfig, EngineError, RunpackImage};

const EXIT_CONFIG: u8 = 101;
const EXIT_LISTEN: u8 = 102;
const EXIT_NO_MAIN: u8 = 103;

/// Run a mini-hello engine.
///
/// Exit status: main's return value, 1 if main fails with an uncaught error,
/// 101 for a configuration error, 102 if the listen address cannot be bound,
/// 103 if the runpack has no main.
#[derive(Parser, Debug)]
#[command(name = "hee", version, args_conflicts_with_subcommands = true)]
struct Cli {
    #[command(subcommand)]
    cmd: Option<Cmd>,
    #[command(flatten)]
    node: NodeArgs,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Run a topology file in the in-process simulator and print its transcript.
    Sim(SimArgs),
}

#[derive(ClapArgs, Debug)]
struct NodeArgs {
    /// Configuration file of `key = value` lines (and `sid:MASK` host-map grants).
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Host name of this engine. Overrides `host` from the config file.
    #[arg(long, value_name = "NAME")]
    host: Option<String>,

    /// Address to accept connections on, e.g. 127.0.0.1:7000 (port 0 picks one).
    #[arg(long, value_name = "ADDR")]
    listen: Option<String>,

    /// Peer to connect to at startup; repeatable.
    #[arg(long = "peer", value_name = "ADDR")]
    peers: Vec<String>,

    /// Seed mixed into this engine's random choices (SID generation).
    #[arg(long, value_name = "N")]
    seed: Option<u64>,

    /// Mark this host as primary.
    #[arg(long)]
    primary: bool,

    /// Extra configuration setting; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Runpack file to install and run (`NAME` alone means `NAME.rpk`).
    #[arg(long, value_name = "RPK")]
    run: Option<String>,

    /// Write program output to this file instead of standard output.
    #[arg(long, value_name = "FILE")]
    stdout: Option<PathBuf>,

    /// Without --run: exit once every peer has disconnected (after at least one joined).
    #[arg(long)]
    until_alone: bool,

    /// Without --run: exit after this many milliseconds.
    #[arg(long, value_name = "MS")]
    serve_ms: Option<u64>,

    /// Arguments passed to main, after `--`.
    #[arg(last = true, value_name = "ARGS")]
    args: Vec<String>,
}

#[derive(ClapArgs, Debug)]
struct SimArgs {
    /// Topology file. Runpack paths in `run` lines are relative to it.
    topology: PathBuf,

    /// Scheduling seed; the same seed reproduces the same transcript.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Also write each host's output to `DIR/<host>.out`.
    #[arg(long, value_name = "DIR")]
    stdout_dir: Option<PathBuf>,

    /// Write the transcript to this file instead of standard output.
    #[arg(long, value_name = "FILE")]
    transcript: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.cmd {
        Some(Cmd::Sim(s)) => sim(&s),
        None => node(cli.node),
    }
}

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("hee: {msg}");
    ExitCode::from(code)
}

// ---- simulator ---------------------------------------------------------------

fn sim(a: &SimArgs) -> ExitCode {
    let text = match std::fs::read_to_string(&a.topology) {
        Ok(t) => t,
        Err(e) => return fail(EXIT_CONFIG, format!("{}: {e}", a.topology.display())),
    };
    let topo = match Topology::parse(&text) {
        Ok(t) => t,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let base = a.topology.parent().map(Path::to_path_buf).unwrap_or_default();
    let load = |rpk: &str| -> Result<RunpackImage, SimError> {
        load_image(&base.join(rpk)).map_err(SimError::Load)
    };
    let t = match run_scenario(&topo, a.seed, load) {
        Ok(t) => t,
        Err(e @ SimError::Load(_)) => return fail(EXIT_CONFIG, e),
        Err(e) => return fail(1, e),
    };
    if let Some(dir) = &a.stdout_dir {
        if let Err(e) = std::fs::create_dir_all(dir) {
            return fail(1, format!("{}: {e}", dir.display()));
        }
        for (name, h) in &t.hosts {
            if let Err(e) = std::fs::write(dir.join(format!("{name}.out")), &h.stdout) {
                return fail(1, e);
            }
        }
    }
    let text = t.render();
    let written = match &a.transcript {
        Some(p) => std::fs::write(p, text),
        None => std::io::stdout().write_all(text.as_bytes()),
    };
    if let Err(e) = written {
        return fail(1, e);
    }
    if t.runs.iter().any(|r| r.result.is_err()) {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}

fn load_image(path: &Path) -> Result<RunpackImage, String> {
    let bytes = std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    RunpackImage::deserialize(&bytes).map_err(|e| format!("{}: {e}", path.display()))
}

// ---- TCP engine ----------------------------------------------------------------

struct FileSink(RefCell<File>);

impl Output for FileSink {
    fn write(&self, bytes: &[u8]) {
        let mut f = self.0.borrow_mut();
        let _ = f.write_all(bytes);
        let _ = f.flush();
    }
}

fn build_config(a: &NodeArgs) -> Result<EngineConfig, String> {
    let mut cfg = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
            EngineConfig::parse(&text).map_err(|e| format!("{}: {e}", p.display()))?
        }
        None => EngineConfig::default(),
    };
    let bad = |e: ConfigError| e.to_string();
    if let Some(h) = &a.host {
        cfg.set("host", h).map_err(bad)?;
    }
    if let Some(l) = &a.listen {
        cfg.set("listen", l).map_err(bad)?;
    }
    for p in &a.peers {
        cfg.set("peer", p).map_err(bad)?;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if a.primary {
        cfg.primary = true;
    }
    for kv in &a.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| format!("--set expects KEY=VALUE, got '{kv}'"))?;
        cfg.set(k.trim(), v.trim()).map_err(bad)?;
    }
    if let Some(p) = &a.stdout {
        cfg.stdout_capture = Some(p.clone());
    }
    cfg.validate().map_err(bad)?;
    Ok(cfg)
}

fn resolve_rpk(run: &str) -> PathBuf {
    let p = PathBuf::from(run);
    if p.exists() || run.ends_with(".rpk") {
        p
    } else {
        PathBuf::from(format!("{run}.rpk"))
    }
}

fn node(a: NodeArgs) -> ExitCode {
    let cfg = match build_config(&a) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let image = match &a.run {
        Some(r) => match load_image(&resolve_rpk(r)) {
            Ok(img) => Some(img),
            Err(e) => return fail(EXIT_CONFIG, e),
        },
        None => None,
    };
    if let Some(img) = &image {
        if img.main_method().is_none() {
            return fail(EXIT_NO_MAIN, format!("runpack {} has no main", img.name));
        }
    }
    let out: Rc<dyn Output> = match &cfg.stdout_capture {
        Some(p) => match File::create(p) {
            Ok(f) => Rc::new(FileSink(RefCell::new(f))),
            Err(e) => return fail(EXIT_CONFIG, format!("{}: {e}", p.display())),
        },
        None => Rc::new(StdoutSink),
    };

    let stop = Arc::new(AtomicBool::new(false));
    for sig in [signal_hook::consts::SIGINT, signal_hook::consts::SIGTERM] {
        let _ = signal_hook::flag::register(sig, stop.clone());
    }

    let rt = Handle::new(ClockKind::Real, Policy::Fifo);
    let engine = Engine::new(cfg.clone(), rt.clone(), 1, out);
    let tcp = match TcpNode::start(&engine, cfg.listen.as_deref()) {
        Ok(t) => t,
        Err(e) => return fail(EXIT_LISTEN, format!("cannot listen on {}: {e}", cfg.listen.as_deref().unwrap_or("?"))),
    };
    if let Some(addr) = tcp.local_addr() {
        eprintln!("listening on {addr}");
    }

    let patience = Duration::from_millis(cfg.handshake_timeout_ms);
    for p in &cfg.seeds {
        tcp.connect(p, patience);
    }
    let stopped = || stop.load(Ordering::Relaxed);
    rt.run_while(patience * 2, || tcp.dials_in_flight() == 0 || stopped());
    if !cfg.seeds.is_empty() {
        // one gossip round so hosts beyond the seeds are known
        let until = Instant::now() + Duration::from_millis(cfg.gossip_interval_ms * 2);
        rt.run_while(Duration::from_millis(cfg.gossip_interval_ms * 2 + 50), || Instant::now() >= until || stopped());
    }

    let code = match image {
        Some(img) => run_program(&engine, &rt, img, &a.args, &stop),
        None => {
            serve(&engine, &rt, &a, &stop);
            ExitCode::SUCCESS
        }
    };
    engine.shutdown();
    rt.run_while(Duration::from_millis(100), || false);
    tcp.join_writers(Duration::from_secs(5));
    code
}

fn run_program(engine: &Engine, rt: &Handle, img: RunpackImage, args: &[String], stop: &AtomicBool) -> ExitCode {
    let pkg = img.name.clone();
    if let Err(e) = engine.install(img) {
        return fail(EXIT_CONFIG, e);
    }
    let result: Rc<RefCell<Option<Result<i64, EngineError>>>> = Rc::new(RefCell::new(None));
    let slot = result.clone();
    let e = engine.clone();
    let argv: Vec<Vec<u8>> = args.iter().map(|s| s.as_bytes().to_vec()).collect();
    rt.spawn(async move {
        let r = e.run_main(&pkg, argv).await;
        *slot.borrow_mut() = Some(r);
    });
    let forever = Duration::from_secs(u64::MAX / 4);
    rt.run_while(forever, || result.borrow().is_some() || stop.load(Ordering::Relaxed));
    let Some(r) = result.borrow_mut().take() else {
        return fail(1, "interrupted");
    };
    // let queued work started by main finish
    rt.run_while(forever, || engine.is_idle() || stop.load(Ordering::Relaxed));
    match r {
        Ok(code) => ExitCode::from(code as u8),
        Err(EngineError::NoMainFound) => fail(EXIT_NO_MAIN, "no main found"),
        Err(e) => fail(1, format!("uncaught {}: {e}", e.kind())),
    }
}

fn serve(engine: &Engine, rt: &Handle, a: &NodeArgs, stop: &AtomicBool) {
    let start = Instant::now();
    let limit = a.serve_ms.map(Duration::from_millis);
    let mut joined = !engine.neighbors().is_empty();
    rt.run_while(Duration::from_secs(u64::MAX / 4), || {
        if stop.load(Ordering::Relaxed) || limit.is_some_and(|l| start.elapsed() >= l) {
            return true;
        }
        let n = engine.neighbors().len();
        joined |= n > 0;
        a.until_alone && joined && n == 0
    });
}
