//! The two sample packages, compiled and run in the simulator.

use std::path::PathBuf;

use minihello::frontend::load_package_dir;
use minihello::sim::{Action, Topology};
use minihello::sim::{run_scenario, SimNet};
use minihello::{compile, translate, RunpackImage};

fn sample(name: &str) -> RunpackImage {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../samples").join(name);
    let units = load_package_dir(&dir).unwrap();
    let pkg = translate(&units).unwrap_or_else(|e| panic!("{e}"));
    compile(&pkg).unwrap()
}

#[test]
fn hello_world_greets_every_host_once() {
    let img = sample("hello_world");
    let mut topo = Topology::mesh(&["a", "b", "c"]);
    topo.script.push(Action::Run { host: "a".into(), rpk: "hello".into(), args: vec![] });
    let t = run_scenario(&topo, 7, |_| Ok(img.clone())).unwrap();
    for h in ["a", "b", "c"] {
        let out = String::from_utf8_lossy(t.stdout(h)).into_owned();
        let lines: Vec<_> = out.lines().collect();
        assert_eq!(lines.len(), 1, "{h}: {out:?}");
        assert!(lines[0].contains("Hello, world!") && lines[0].contains(" a "), "{h}: {out:?}");
    }
    assert!(matches!(t.runs[0].result, Ok(0)));
}

fn shell(bufcnt: &str, cmd: &[&str]) -> (Vec<u8>, SimNet, i64) {
    let img = sample("shell_world");
    let net = SimNet::new(3);
    net.add_host("a");
    net.add_host("b");
    net.link("a", "b", 1).unwrap();
    net.run_until_quiescent();
    let mut args = vec!["b".to_string(), bufcnt.to_string()];
    args.extend(cmd.iter().map(|s| s.to_string()));
    let slot = net.start_main("a", &img, &args).unwrap();
    net.run_until_quiescent();
    let r = slot.borrow_mut().take().expect("main finished").unwrap();
    (net.stdout("a"), net, r)
}

#[test]
fn shell_streams_remote_output() {
    for bufcnt in ["1", "4"] {
        let (out, _, r) = shell(bufcnt, &["seq", "1", "20000"]);
        assert_eq!(r, 0);
        let want: String = (1..=20000).map(|i| format!("{i}\n")).collect();
        assert_eq!(out, want.as_bytes(), "bufcnt {bufcnt}");
    }
}

#[test]
fn shell_with_no_buffers_sends_nothing_back() {
    let (out, net, r) = shell("0", &["seq", "1", "100"]);
    assert_eq!(r, 0);
    assert!(out.is_empty());
    assert!(!net.frames().iter().any(|f| f.note.contains("rcv")));
}

#[test]
fn shell_unknown_host_and_failing_command() {
    let (out, _, r) = shell("1", &["echo", "hi;", "exit", "3"]);
    assert_eq!(r, 0);
    assert_eq!(out, b"hi\n");

    let img = sample("shell_world");
    let net = SimNet::new(1);
    net.add_host("a");
    let slot = net.start_main("a", &img, &["nowhere".into(), "1".into(), "ls".into()]).unwrap();
    net.run_until_quiescent();
    assert_eq!(slot.borrow_mut().take().unwrap().unwrap(), -1);
    assert_eq!(net.stdout("a"), b"host not found\n");
}
