//! Queue ordering: posts followed by a `<=>` barrier, locally and across hosts.

use minihello::frontend::SourceUnit;
use minihello::sim::SimNet;
use minihello::{compile, translate, RunpackImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BARRIER: &str = r#"
package barrier;

external class Counter {
    int n;
    external public Counter() {}
    public message void inc() { n = n + 1; }
    public external int get() { return n; }
}

class Main {
    // argv: host to hold the counter and queue ("" for local), post count
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

fn image() -> RunpackImage {
    let pkg = translate(&[SourceUnit::new("barrier.hlo", BARRIER)]).unwrap_or_else(|e| panic!("{e}"));
    compile(&pkg).unwrap()
}

fn run(seed: u64, remote: bool, posts: i64) -> i64 {
    let img = image();
    let net = SimNet::new(seed);
    net.add_host("a");
    net.add_host("b");
    net.link("a", "b", 1 + seed % 3).unwrap();
    net.run_until_quiescent();
    let target = if remote { "b" } else { "" };
    let slot = net.start_main("a", &img, &[target.to_string(), posts.to_string()]).unwrap();
    net.run_until_quiescent();
    let r = slot.borrow_mut().take().expect("finished");
    r.unwrap()
}

#[test]
fn barrier_sees_every_post_over_random_schedules() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for seed in 0..200 {
        let posts = rng.gen_range(1..=50);
        let remote = seed % 2 == 1;
        assert_eq!(run(seed, remote, posts), posts, "seed {seed} remote {remote}");
    }
}
