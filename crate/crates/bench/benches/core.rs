use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion, Throughput};
use minihello::net::codec::{transfer, MemorySpace, Mode};
use minihello::net::{Frame, FrameDecoder, FrameKind};
use minihello::security::{check_access, CredentialSet, Privilege, PrivilegeMask, Sid};
use minihello::sim::{run_scenario, Topology};
use minihello::{compile, translate};
use minihello_bench::{ring, sample_sources};

fn frontend(c: &mut Criterion) {
    let units = sample_sources("shell_world");
    c.bench_function("translate+compile shell_world", |b| {
        b.iter(|| compile(&translate(black_box(&units)).unwrap()).unwrap())
    });
}

fn codec(c: &mut Criterion) {
    let mut g = c.benchmark_group("deep copy");
    for n in [10, 1000] {
        let mut from = MemorySpace::new("a");
        let root = ring(&mut from, n);
        g.throughput(Throughput::Elements(n as u64));
        g.bench_function(format!("ring of {n}"), |b| {
            b.iter_batched(
                || MemorySpace::new("b"),
                |mut to| transfer(&from, &mut to, &root, Mode::Copy).unwrap(),
                BatchSize::SmallInput,
            )
        });
    }
    g.finish();
}

fn framing(c: &mut Criterion) {
    let frame = Frame::new(FrameKind::Invoke, 7, vec![0x5a; 64 * 1024]);
    let bytes: Vec<u8> = (0..16).flat_map(|_| frame.encode()).collect();
    let mut g = c.benchmark_group("framing");
    g.throughput(Throughput::Bytes(bytes.len() as u64));
    g.bench_function("decode 16 x 64 KiB", |b| {
        b.iter(|| {
            let mut dec = FrameDecoder::new(false);
            for chunk in bytes.chunks(4096) {
                dec.push(chunk);
                while let Some(f) = dec.next_frame().unwrap() {
                    black_box(f);
                }
            }
        })
    });
    g.finish();
}

fn access(c: &mut Criterion) {
    let sid = Sid([1; 16]);
    let mut hm = CredentialSet::new();
    for i in 0..64u8 {
        hm.grant(Sid([i; 16]), PrivilegeMask::of(&[Privilege::Read]));
    }
    hm.grant(sid, PrivilegeMask::of(&[Privilege::Exec]));
    let mut acl = CredentialSet::new();
    acl.grant(sid, PrivilegeMask::of(&[Privilege::Exec]));
    c.bench_function("check_access", |b| {
        b.iter(|| check_access(black_box(&[sid]), Some(&acl), &hm, Privilege::Exec))
    });
}

fn simulation(c: &mut Criterion) {
    let img = compile(&translate(&sample_sources("hello_world")).unwrap()).unwrap();
    let mut text = String::new();
    for i in 0..8 {
        text += &format!("host h{i}\nlink h{i} h{}\n", (i + 1) % 8);
    }
    text += "run h0 hello.rpk\n";
    let topo = Topology::parse(&text).unwrap();
    c.bench_function("hello on an 8-host ring", |b| {
        b.iter(|| run_scenario(&topo, 1, |_| Ok(img.clone())).unwrap())
    });
}

criterion_group!(benches, frontend, codec, framing, access, simulation);
criterion_main!(benches);
