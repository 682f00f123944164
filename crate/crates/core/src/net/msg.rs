//! Frame payloads.

use crate::bytes::{ReadError, Reader, Writer};
use crate::security::Sid;
use crate::value::Space;

use super::codec::{read_ref_body, CodecError, WireClass, WireRef, WireRefClass};
use super::frame::FrameKind;


fn write_ref(w: &mut Writer, r: &WireRef) {
    w.str(&r.host);
    match r.space {
        Space::Heap => w.u8(0),
        Space::Partition(p) => w.u8(1).u32(p),
    };
    w.u64(r.oid);
    match &r.class {
        WireRefClass::Host => {
            w.u8(0);
        }
        WireRefClass::Queue => {
            w.u8(1);
        }
        WireRefClass::User(c) => {
            w.u8(2);
            c.write(w);
        }
    }
}

fn read_ref(r: &mut Reader) -> Result<WireRef, ReadError> {
    read_ref_body(r).map_err(|_: CodecError| ReadError::Invalid("reference"))
}

fn write_strs(w: &mut Writer, v: &[String]) {
    w.u32(v.len() as u32);
    for s in v {
        w.str(s);
    }
}

fn read_strs(r: &mut Reader) -> Result<Vec<String>, ReadError> {
    let n = r.count(4)?;
    (0..n).map(|_| r.str()).collect()
}

fn finish<T>(r: &Reader, v: T) -> Result<T, ReadError> {
    if r.is_empty() {
        Ok(v)
    } else {
        Err(ReadError::Invalid("trailing bytes"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hello {
    pub name: String,
    pub incarnation: u64,
    /// SHA-256 over the sender's host map, for diagnostics only.
    pub creds_digest: [u8; 32],
}

impl Hello {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.str(&self.name).u64(self.incarnation).raw(&self.creds_digest);
        w.into_inner()
    }

    pub fn decode(b: &[u8]) -> Result<Hello, ReadError> {
        let mut r = Reader::new(b);
        let name = r.str()?;
        let incarnation = r.u64()?;
        let creds_digest = r.take(32)?.try_into().expect("32 bytes");
        finish(&r, Hello { name, incarnation, creds_digest })
    }
}

/// Identity of a group member, used for the visited set of a traversal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeKey {
    pub host: String,
    pub space: Space,
    pub oid: u64,
}

impl NodeKey {
    fn write(&self, w: &mut Writer) {
        w.str(&self.host);
        match self.space {
            Space::Heap => w.u8(0),
            Space::Partition(p) => w.u8(1).u32(p),
        };
        w.u64(self.oid);
    }

    fn read(r: &mut Reader) -> Result<NodeKey, ReadError> {
        let host = r.str()?;
        let space = match r.u8()? {
            0 => Space::Heap,
            1 => Space::Partition(r.u32()?),
            _ => return Err(ReadError::Invalid("space")),
        };
        Ok(NodeKey { host, space, oid: r.u64()? })
    }
}

/// A remote operation. Value lists are kept in their encoded form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Op {
    Create { class: WireClass, partition: u32, args: Vec<u8> },
    CreateQueue,
    Invoke { target: WireRef, method: u32, args: Vec<u8> },
    GetField { target: WireRef, field: u32 },
    SetField { target: WireRef, field: u32, value: Vec<u8> },
    QueuedEval { qid: u64, class: WireClass, method: u32, this: Option<WireRef>, captures: Vec<u8> },
    Post { qid: u64, target: WireRef, method: u32, args: Vec<u8> },
    Iterate { node: WireRef, method: u32, args: Vec<u8>, traversal: u64, visited: Vec<NodeKey> },
    HostName,
    HostPrint { bytes: Vec<u8> },
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Create { .. } => "create",
            Op::CreateQueue => "create-queue",
            Op::Invoke { .. } => "invoke",
            Op::GetField { .. } => "get",
            Op::SetField { .. } => "set",
            Op::QueuedEval { .. } => "eval",
            Op::Post { .. } => "post",
            Op::Iterate { .. } => "iterate",
            Op::HostName => "host-name",
            Op::HostPrint { .. } => "host-print",
        }
    }

    /// Every class named by the operation's header (not its values).
    pub fn classes(&self) -> Vec<WireClass> {
        let of_ref = |r: &WireRef| match &r.class {
            WireRefClass::User(c) => vec![c.clone()],
            _ => vec![],
        };
        match self {
            Op::Create { class, .. } | Op::QueuedEval { class, .. } => {
                let mut v = vec![class.clone()];
                if let Op::QueuedEval { this: Some(t), .. } = self {
                    v.extend(of_ref(t));
                }
                v
            }
            Op::Invoke { target, .. } | Op::GetField { target, .. } | Op::SetField { target, .. } | Op::Post { target, .. } => {
                of_ref(target)
            }
            Op::Iterate { node, .. } => of_ref(node),
            Op::CreateQueue | Op::HostName | Op::HostPrint { .. } => vec![],
        }
    }
}

/// Payload of an INVOKE frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Invoke {
    /// Credentials of the calling queue; privileges are resolved by the receiver.
    pub creds: Vec<Sid>,
    /// Call chain of the caller, for re-entrant dispatch of nested calls.
    pub chain: u64,
    pub op: Op,
}

impl Invoke {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u32(self.creds.len() as u32);
        for s in &self.creds {
            w.raw(&s.0);
        }
        w.u64(self.chain);
        match &self.op {
            Op::Create { class, partition, args } => {
                w.u8(1);
                class.write(&mut w);
                w.u32(*partition).bytes(args);
            }
            Op::CreateQueue => {
                w.u8(2);
            }
            Op::Invoke { target, method, args } => {
                w.u8(3);
                write_ref(&mut w, target);
                w.u32(*method).bytes(args);
            }
            Op::GetField { target, field } => {
                w.u8(4);
                write_ref(&mut w, target);
                w.u32(*field);
            }
            Op::SetField { target, field, value } => {
                w.u8(5);
                write_ref(&mut w, target);
                w.u32(*field).bytes(value);
            }
            Op::QueuedEval { qid, class, method, this, captures } => {
                w.u8(6).u64(*qid);
                class.write(&mut w);
                w.u32(*method);
                match this {
                    None => {
                        w.u8(0);
                    }
                    Some(t) => {
                        w.u8(1);
                        write_ref(&mut w, t);
                    }
                }
                w.bytes(captures);
            }
            Op::Post { qid, target, method, args } => {
                w.u8(7).u64(*qid);
                write_ref(&mut w, target);
                w.u32(*method).bytes(args);
            }
            Op::Iterate { node, method, args, traversal, visited } => {
                w.u8(8);
                write_ref(&mut w, node);
                w.u32(*method).bytes(args).u64(*traversal);
                w.u32(visited.len() as u32);
                for v in visited {
                    v.write(&mut w);
                }
            }
            Op::HostName => {
                w.u8(9);
            }
            Op::HostPrint { bytes } => {
                w.u8(10).bytes(bytes);
            }
        }
        w.into_inner()
    }

    pub fn decode(b: &[u8]) -> Result<Invoke, ReadError> {
        let mut r = Reader::new(b);
        let n = r.count(16)?;
        let mut creds = Vec::with_capacity(n);
        for _ in 0..n {
            creds.push(Sid(r.take(16)?.try_into().expect("16 bytes")));
        }
        let chain = r.u64()?;
        let op = match r.u8()? {
            1 => Op::Create { class: WireClass::read(&mut r)?, partition: r.u32()?, args: r.bytes()?.to_vec() },
            2 => Op::CreateQueue,
            3 => Op::Invoke { target: read_ref(&mut r)?, method: r.u32()?, args: r.bytes()?.to_vec() },
            4 => Op::GetField { target: read_ref(&mut r)?, field: r.u32()? },
            5 => Op::SetField { target: read_ref(&mut r)?, field: r.u32()?, value: r.bytes()?.to_vec() },
            6 => {
                let qid = r.u64()?;
                let class = WireClass::read(&mut r)?;
                let method = r.u32()?;
                let this = match r.u8()? {
                    0 => None,
                    1 => Some(read_ref(&mut r)?),
                    _ => return Err(ReadError::Invalid("option")),
                };
                Op::QueuedEval { qid, class, method, this, captures: r.bytes()?.to_vec() }
            }
            7 => Op::Post { qid: r.u64()?, target: read_ref(&mut r)?, method: r.u32()?, args: r.bytes()?.to_vec() },
            8 => {
                let node = read_ref(&mut r)?;
                let method = r.u32()?;
                let args = r.bytes()?.to_vec();
                let traversal = r.u64()?;
                let n = r.count(13)?;
                let visited = (0..n).map(|_| NodeKey::read(&mut r)).collect::<Result<_, _>>()?;
                Op::Iterate { node, method, args, traversal, visited }
            }
            9 => Op::HostName,
            10 => Op::HostPrint { bytes: r.bytes()?.to_vec() },
            _ => return Err(ReadError::Invalid("operation")),
        };
        finish(&r, Invoke { creds, chain, op })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventPost {
    pub event: u64,
    pub slot: u32,
    pub value: Vec<u8>,
}

impl EventPost {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u64(self.event).u32(self.slot).bytes(&self.value);
        w.into_inner()
    }

    pub fn decode(b: &[u8]) -> Result<EventPost, ReadError> {
        let mut r = Reader::new(b);
        let v = EventPost { event: r.u64()?, slot: r.u32()?, value: r.bytes()?.to_vec() };
        finish(&r, v)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchPack {
    pub name: String,
    pub hash: [u8; 32],
}

impl FetchPack {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.str(&self.name).raw(&self.hash);
        w.into_inner()
    }

    pub fn decode(b: &[u8]) -> Result<FetchPack, ReadError> {
        let mut r = Reader::new(b);
        let name = r.str()?;
        let hash = r.take(32)?.try_into().expect("32 bytes");
        finish(&r, FetchPack { name, hash })
    }
}

pub const PACK_CHUNK: usize = 64 * 1024;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackData {
    pub name: String,
    pub total: u32,
    pub offset: u32,
    pub chunk: Vec<u8>,
}

impl PackData {
    /// Splits a serialized image into 64 KiB chunks (at least one, even when empty).
    pub fn split(name: &str, image: &[u8]) -> Vec<PackData> {
        let total = image.len() as u32;
        if image.is_empty() {
            return vec![PackData { name: name.to_string(), total, offset: 0, chunk: vec![] }];
        }
        image
            .chunks(PACK_CHUNK)
            .enumerate()
            .map(|(i, c)| PackData { name: name.to_string(), total, offset: (i * PACK_CHUNK) as u32, chunk: c.to_vec() })
            .collect()
    }

    pub fn is_last(&self) -> bool {
        self.offset as usize + self.chunk.len() >= self.total as usize
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.str(&self.name).u32(self.total).u32(self.offset).bytes(&self.chunk);
        w.into_inner()
    }

    pub fn decode(b: &[u8]) -> Result<PackData, ReadError> {
        let mut r = Reader::new(b);
        let v = PackData { name: r.str()?, total: r.u32()?, offset: r.u32()?, chunk: r.bytes()?.to_vec() };
        if v.offset as u64 + v.chunk.len() as u64 > v.total as u64 {
            return Err(ReadError::Invalid("chunk beyond total"));
        }
        finish(&r, v)
    }
}

/// Reachability advertisement: each entry is a destination and the hosts between
/// the sender and it.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Gossip {
    pub entries: Vec<(String, Vec<String>)>,
}

impl Gossip {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u32(self.entries.len() as u32);
        for (d, via) in &self.entries {
            w.str(d);
            write_strs(&mut w, via);
        }
        w.into_inner()
    }

    pub fn decode(b: &[u8]) -> Result<Gossip, ReadError> {
        let mut r = Reader::new(b);
        let n = r.count(8)?;
        let mut entries = Vec::with_capacity(n);
        for _ in 0..n {
            entries.push((r.str()?, read_strs(&mut r)?));
        }
        finish(&r, Gossip { entries })
    }
}

pub const INITIAL_TTL: u8 = 16;

/// A frame travelling through intermediate hosts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Route {
    pub src: String,
    pub dst: String,
    pub ttl: u8,
    /// Hosts the frame has passed through so far, starting with `src`.
    pub trail: Vec<String>,
    /// Remaining hops when the sender fixed the route; empty means "use the path table".
    pub route: Vec<String>,
    pub kind: FrameKind,
    pub corr: u64,
    pub payload: Vec<u8>,
}

impl Route {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.str(&self.src).str(&self.dst).u8(self.ttl);
        write_strs(&mut w, &self.trail);
        write_strs(&mut w, &self.route);
        w.u8(self.kind as u8).u64(self.corr).bytes(&self.payload);
        w.into_inner()
    }

    pub fn decode(b: &[u8]) -> Result<Route, ReadError> {
        let mut r = Reader::new(b);
        let src = r.str()?;
        let dst = r.str()?;
        let ttl = r.u8()?;
        let trail = read_strs(&mut r)?;
        let route = read_strs(&mut r)?;
        let kind = FrameKind::from_u8(r.u8()?).ok_or(ReadError::Invalid("frame kind"))?;
        if kind == FrameKind::Route {
            return Err(ReadError::Invalid("nested route"));
        }
        let corr = r.u64()?;
        let payload = r.bytes()?.to_vec();
        finish(&r, Route { src, dst, ttl, trail, route, kind, corr, payload })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn wref() -> WireRef {
        WireRef {
            host: "b".into(),
            space: Space::Partition(0),
            oid: 5,
            class: WireRefClass::User(WireClass { package: "p".into(), hash: [7; 32], index: 1 }),
        }
    }

    #[test]
    fn invoke_round_trips() {
        let ops = vec![
            Op::Create { class: WireClass { package: "p".into(), hash: [1; 32], index: 0 }, partition: 0, args: vec![0, 0, 0, 0] },
            Op::CreateQueue,
            Op::Invoke { target: wref(), method: 3, args: vec![1, 2] },
            Op::GetField { target: wref(), field: 1 },
            Op::SetField { target: wref(), field: 1, value: vec![9] },
            Op::QueuedEval { qid: 4, class: WireClass { package: "p".into(), hash: [1; 32], index: 0 }, method: 2, this: Some(wref()), captures: vec![] },
            Op::Post { qid: 4, target: wref(), method: 1, args: vec![] },
            Op::Iterate {
                node: wref(),
                method: 2,
                args: vec![],
                traversal: 99,
                visited: vec![NodeKey { host: "a".into(), space: Space::Partition(0), oid: 1 }],
            },
            Op::HostName,
            Op::HostPrint { bytes: b"x\n".to_vec() },
        ];
        for op in ops {
            let m = Invoke { creds: vec![Sid::ANONYMOUS, Sid([3; 16])], chain: 42, op };
            assert_eq!(Invoke::decode(&m.encode()).unwrap(), m);
        }
    }

    #[test]
    fn pack_chunks_cover_image() {
        let img: Vec<u8> = (0..200_000u32).map(|i| i as u8).collect();
        let parts = PackData::split("p", &img);
        assert_eq!(parts.len(), 4);
        assert!(parts.last().unwrap().is_last());
        assert!(!parts[0].is_last());
        let joined: Vec<u8> = parts.iter().flat_map(|p| p.chunk.clone()).collect();
        assert_eq!(joined, img);
    }

    #[test]
    fn route_rejects_nesting() {
        let r = Route {
            src: "a".into(),
            dst: "c".into(),
            ttl: INITIAL_TTL,
            trail: vec!["a".into()],
            route: vec![],
            kind: FrameKind::Invoke,
            corr: 1,
            payload: vec![1],
        };
        assert_eq!(Route::decode(&r.encode()).unwrap(), r);
        let mut b = r.encode();
        let pos = b.len() - 1 - 4 - 8 - 1;
        b[pos] = FrameKind::Route as u8;
        assert!(Route::decode(&b).is_err());
    }

    proptest! {
        #[test]
        fn decoders_are_total(b in proptest::collection::vec(any::<u8>(), 0..96)) {
            let _ = Invoke::decode(&b);
            let _ = Route::decode(&b);
            let _ = Gossip::decode(&b);
            let _ = PackData::decode(&b);
            let _ = Hello::decode(&b);
        }
    }
}
