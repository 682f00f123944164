//! The built-in `standard` package and the native side of the intrinsic functions.

use std::collections::BTreeMap;
use std::io::Read;
use std::process::{Child, ChildStdout, Command, Stdio};
use std::sync::OnceLock;

use crate::frontend::{check::check_with_std, parse_package, SourceUnit};
use crate::runpack::ir::ClassDesc;
use crate::runpack::{compile, RunpackImage};

pub const STD_PACKAGE: &str = "standard";

/// Index of `host_group` in the standard class table.
pub const HOST_GROUP_CLASS: u32 = 0;
pub const HOST_GROUP_CURRENT_HOST: u32 = 0;

pub const STANDARD_SOURCE: &str = r#"package standard;

public external group class host_group {
    public external host current_host;
    public external copy host_group[] children();
    public external iterator void print(copy char[] str) {
        current_host.print(str);
    }
};
"#;

/// Names callable as free functions, in the order of their intrinsic ids.
pub const INTRINSICS: [&str; 7] = ["print", "sizear", "hello", "exec_open", "exec_read", "write_stdout", "parse_int"];

pub fn standard_image() -> &'static RunpackImage {
    static IMAGE: OnceLock<RunpackImage> = OnceLock::new();
    IMAGE.get_or_init(|| {
        let unit = SourceUnit::new("standard.hlo", STANDARD_SOURCE);
        let ast = parse_package(&[unit]).expect("standard package parses");
        let pkg = check_with_std(&ast, None).expect("standard package checks");
        compile(&pkg).expect("standard package compiles")
    })
}

pub fn standard_classes() -> &'static [ClassDesc] {
    &standard_image().classes
}

/// C `atoi`: optional leading whitespace and sign, then digits up to the first non-digit.
pub fn parse_int(s: &[u8]) -> i64 {
    let mut i = 0;
    while i < s.len() && matches!(s[i], b' ' | b'\t' | b'\n' | b'\r' | 0x0b | 0x0c) {
        i += 1;
    }
    let mut neg = false;
    if i < s.len() && (s[i] == b'+' || s[i] == b'-') {
        neg = s[i] == b'-';
        i += 1;
    }
    let mut v: i64 = 0;
    while i < s.len() && s[i].is_ascii_digit() {
        v = v.wrapping_mul(10).wrapping_add((s[i] - b'0') as i64);
        i += 1;
    }
    if neg {
        v.wrapping_neg()
    } else {
        v
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExecError {
    #[error("cannot start command: {0}")]
    ExecFailed(String),
    #[error("exec handle {0} is not open")]
    HandleClosed(i64),
}

/// Result of one `exec_read`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReadChunk {
    pub data: Vec<u8>,
    pub eof: bool,
    pub err: bool,
}

/// A child process whose stdout is read through a pipe.
pub struct Pipe {
    child: Child,
    out: Option<ChildStdout>,
    eof: bool,
}

impl Pipe {
    /// Runs `cmd` through `sh -c`.
    pub fn open(cmd: &[u8]) -> Result<Pipe, ExecError> {
        if cmd.is_empty() {
            return Err(ExecError::ExecFailed("empty command".into()));
        }
        let cmd = String::from_utf8_lossy(cmd).into_owned();
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&cmd)
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| ExecError::ExecFailed(e.to_string()))?;
        let out = child.stdout.take();
        Ok(Pipe { child, out, eof: false })
    }

    /// Reads until `max` bytes have arrived or the stream ends.
    pub fn read(&mut self, max: usize) -> ReadChunk {
        let mut data = vec![0u8; max];
        let mut n = 0;
        let mut err = false;
        if let Some(out) = self.out.as_mut() {
            while n < max && !self.eof {
                match out.read(&mut data[n..]) {
                    Ok(0) => self.eof = true,
                    Ok(k) => n += k,
                    Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
                    Err(_) => {
                        err = true;
                        self.eof = true;
                    }
                }
            }
        } else {
            self.eof = true;
        }
        data.truncate(n);
        if self.eof {
            self.out = None;
            let _ = self.child.wait();
        }
        ReadChunk { data, eof: self.eof, err }
    }
}

impl Drop for Pipe {
    fn drop(&mut self) {
        if !self.eof {
            let _ = self.child.kill();
            let _ = self.child.wait();
        }
    }
}

/// Open pipes of one engine, by handle number.
#[derive(Default)]
pub struct PipeTable {
    next: i64,
    pipes: BTreeMap<i64, Pipe>,
}

impl PipeTable {
    pub fn insert(&mut self, p: Pipe) -> i64 {
        self.next += 1;
        self.pipes.insert(self.next, p);
        self.next
    }

    /// Removes a pipe for a blocking read; hand it back with `restore`.
    pub fn take(&mut self, h: i64) -> Result<Pipe, ExecError> {
        self.pipes.remove(&h).ok_or(ExecError::HandleClosed(h))
    }

    pub fn restore(&mut self, h: i64, p: Pipe) {
        self.pipes.insert(h, p);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runpack::ir::MethodBody;
    use crate::runpack::ir::Builtin;

    #[test]
    fn standard_package_shape() {
        let img = standard_image();
        assert_eq!(img.name, STD_PACKAGE);
        let hg = &img.classes[HOST_GROUP_CLASS as usize];
        assert_eq!(hg.name, "host_group");
        assert!(hg.is_group() && hg.is_external());
        assert_eq!(hg.fields[HOST_GROUP_CURRENT_HOST as usize].name, "current_host");
        let children = &hg.methods[hg.method_index("children").unwrap() as usize];
        assert_eq!(children.body, MethodBody::Intrinsic(Builtin::HostChildren));
    }

    #[test]
    fn atoi_semantics() {
        assert_eq!(parse_int(b"4"), 4);
        assert_eq!(parse_int(b"  -12abc"), -12);
        assert_eq!(parse_int(b"x1"), 0);
        assert_eq!(parse_int(b""), 0);
        assert_eq!(parse_int(b"+7"), 7);
    }

    #[test]
    fn pipe_reads_match_local_execution() {
        let mut p = Pipe::open(b"echo hi").unwrap();
        let c = p.read(100);
        assert_eq!(c.data, b"hi\n");
        assert!(c.eof && !c.err);
        let again = p.read(100);
        assert_eq!(again, ReadChunk { data: vec![], eof: true, err: false });
    }

    #[test]
    fn pipe_fills_whole_buffers() {
        let mut p = Pipe::open(b"head -c 10000 /dev/zero").unwrap();
        let a = p.read(4096);
        assert_eq!((a.data.len(), a.eof), (4096, false));
        let b = p.read(4096);
        assert_eq!(b.data.len(), 4096);
        let c = p.read(4096);
        assert_eq!((c.data.len(), c.eof), (10000 - 8192, true));
    }

    #[test]
    fn unknown_handle_is_closed() {
        let mut t = PipeTable::default();
        assert_eq!(t.take(3).err(), Some(ExecError::HandleClosed(3)));
    }
}
