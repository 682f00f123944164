//! Topology files.
//!
//! ```text
//! # comment
//! host a primary
//! host b
//! link a b 3            # latency in ticks, default 1
//! config call_timeout_ms 2000
//! run a hello.rpk x y   # run main of hello.rpk on a with argv ["x", "y"]
//! at 50 drop a b
//! at 60 delay a b 5000
//! at 80 kill b
//! ```

use std::collections::BTreeSet;

use super::SimError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HostSpec {
    pub name: String,
    pub primary: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkSpec {
    pub a: String,
    pub b: String,
    pub latency: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Fault {
    Drop { a: String, b: String },
    Kill { host: String },
    Delay { a: String, b: String, ticks: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Run { host: String, rpk: String, args: Vec<String> },
    At { tick: u64, fault: Fault },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Topology {
    pub hosts: Vec<HostSpec>,
    pub links: Vec<LinkSpec>,
    /// Engine settings applied to every host.
    pub config: Vec<(String, String)>,
    pub script: Vec<Action>,
}

fn syntax(line: usize, msg: impl Into<String>) -> SimError {
    SimError::Parse { line, message: msg.into() }
}

fn num(line: usize, s: &str) -> Result<u64, SimError> {
    s.parse().map_err(|_| syntax(line, format!("expected a number, got '{s}'")))
}

impl Topology {
    pub fn parse(text: &str) -> Result<Topology, SimError> {
        let mut t = Topology::default();
        for (i, raw) in text.lines().enumerate() {
            let ln = i + 1;
            let words: Vec<&str> = raw.split('#').next().unwrap_or("").split_whitespace().collect();
            match words.as_slice() {
                [] => {}
                ["host", name] => t.hosts.push(HostSpec { name: name.to_string(), primary: false }),
                ["host", name, "primary"] => t.hosts.push(HostSpec { name: name.to_string(), primary: true }),
                ["link", a, b] => t.links.push(LinkSpec { a: a.to_string(), b: b.to_string(), latency: 1 }),
                ["link", a, b, l] => t.links.push(LinkSpec { a: a.to_string(), b: b.to_string(), latency: num(ln, l)?.max(1) }),
                ["config", k, v] => t.config.push((k.to_string(), v.to_string())),
                ["run", host, rpk, args @ ..] => t.script.push(Action::Run {
                    host: host.to_string(),
                    rpk: rpk.to_string(),
                    args: args.iter().map(|s| s.to_string()).collect(),
                }),
                ["at", tick, rest @ ..] => {
                    let tick = num(ln, tick)?;
                    let fault = match rest {
                        ["drop", a, b] => Fault::Drop { a: a.to_string(), b: b.to_string() },
                        ["kill", h] => Fault::Kill { host: h.to_string() },
                        ["delay", a, b, d] => Fault::Delay { a: a.to_string(), b: b.to_string(), ticks: num(ln, d)? },
                        _ => return Err(syntax(ln, format!("unknown fault '{}'", rest.join(" ")))),
                    };
                    t.script.push(Action::At { tick, fault });
                }
                _ => return Err(syntax(ln, format!("cannot parse '{}'", raw.trim()))),
            }
        }
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let mut names = BTreeSet::new();
        for h in &self.hosts {
            if !names.insert(h.name.as_str()) {
                return Err(SimError::Parse { line: 0, message: format!("host '{}' declared twice", h.name) });
            }
        }
        let known = |h: &str| if names.contains(h) { Ok(()) } else { Err(SimError::UnknownEntity(h.to_string())) };
        for l in &self.links {
            known(&l.a)?;
            known(&l.b)?;
            if l.a == l.b {
                return Err(SimError::UnknownEntity(format!("{}-{}", l.a, l.b)));
            }
        }
        for a in &self.script {
            match a {
                Action::Run { host, .. } => known(host)?,
                Action::At { fault: Fault::Kill { host }, .. } => known(host)?,
                Action::At { fault: Fault::Drop { a, b } | Fault::Delay { a, b, .. }, .. } => {
                    known(a)?;
                    known(b)?;
                    if !self.links.iter().any(|l| (l.a == *a && l.b == *b) || (l.a == *b && l.b == *a)) {
                        return Err(SimError::UnknownEntity(format!("link {a}-{b}")));
                    }
                }
            }
        }
        Ok(())
    }

    /// A topology with every pair of hosts linked.
    pub fn mesh(names: &[&str]) -> Topology {
        let mut t = Topology::default();
        for n in names {
            t.hosts.push(HostSpec { name: n.to_string(), primary: false });
        }
        for (i, a) in names.iter().enumerate() {
            for b in &names[i + 1..] {
                t.links.push(LinkSpec { a: a.to_string(), b: b.to_string(), latency: 1 });
            }
        }
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_line_kinds() {
        let t = Topology::parse("host a primary\nhost b\nlink a b 3\nconfig call_timeout_ms 10\nrun a x.rpk 1 2\nat 5 drop a b\nat 6 kill b\nat 7 delay a b 9\n").unwrap();
        assert!(t.hosts[0].primary);
        assert_eq!(t.links[0].latency, 3);
        assert_eq!(t.script.len(), 4);
        assert_eq!(t.script[0], Action::Run { host: "a".into(), rpk: "x.rpk".into(), args: vec!["1".into(), "2".into()] });
    }

    #[test]
    fn rejects_unknown_hosts_and_links() {
        assert!(matches!(Topology::parse("host a\nlink a b"), Err(SimError::UnknownEntity(_))));
        assert!(matches!(Topology::parse("host a\nhost b\nhost c\nlink a b\nat 1 drop a c"), Err(SimError::UnknownEntity(_))));
        assert!(matches!(Topology::parse("host a\nfly away"), Err(SimError::Parse { line: 2, .. })));
    }
}
