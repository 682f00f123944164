//! Value marshaling. A payload is a count, that many values, then a node
//! table: a count and, for every object copied by value, its class and fields.
//! Value tags: 0 null, 1 bool, 2 int, 3 char, 4 array, 5 node index, 6 remote
//! reference. Nodes are numbered in encounter order and referred to only by
//! index, so shared and cyclic graphs keep their aliasing and a long chain of
//! objects does not nest.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use crate::bytes::{ReadError, Reader, Writer};
use crate::value::{ArrayData, ClassKey, Object, ObjectCell, ObjectRef, Space, Value};

pub const TAG_NULL: u8 = 0;
pub const TAG_BOOL: u8 = 1;
pub const TAG_INT: u8 = 2;
pub const TAG_CHAR: u8 = 3;
pub const TAG_ARRAY: u8 = 4;
pub const TAG_NODE: u8 = 5;
pub const TAG_REMOTE: u8 = 6;

/// Array element tag for arrays whose elements are each fully tagged values.
const ELEM_TAGGED: u8 = 0;

/// Bounds nesting of arrays inside arrays; objects never nest.
const MAX_DEPTH: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CodecError {
    #[error("malformed value encoding: {0}")]
    MalformedEncoding(String),
    #[error("unknown value tag {0}")]
    UnknownTag(u8),
    #[error("object of non-external class {0} cannot cross hosts by reference")]
    NonCopyableValue(String),
    #[error("class {0} is not loaded")]
    UnknownClass(String),
}

impl From<ReadError> for CodecError {
    fn from(e: ReadError) -> Self {
        CodecError::MalformedEncoding(e.to_string())
    }
}

/// A class as named on the wire: the package, its content hash, and the class index.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WireClass {
    pub package: String,
    pub hash: [u8; 32],
    pub index: u32,
}

impl WireClass {
    pub fn write(&self, w: &mut Writer) {
        w.str(&self.package).raw(&self.hash).u32(self.index);
    }

    pub fn read(r: &mut Reader) -> Result<WireClass, ReadError> {
        let package = r.str()?;
        let hash = r.take(32)?.try_into().expect("32 bytes");
        Ok(WireClass { package, hash, index: r.u32()? })
    }
}

/// How a value crosses a host boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// `copy`-qualified: object graphs are deep-copied.
    Copy,
    /// Unqualified: arrays are copied, external objects travel as references.
    Share,
}

/// Access to the sending side's objects and class metadata.
pub trait EncodeCtx {
    fn local_host(&self) -> &str;
    fn object(&self, r: &ObjectRef) -> Option<ObjectCell>;
    fn is_external(&self, c: &ClassKey) -> bool;
    fn wire_class(&self, c: &ClassKey) -> WireClass;
    fn class_name(&self, c: &ClassKey) -> String;
}

/// Allocation and class resolution on the receiving side.
pub trait DecodeCtx {
    fn resolve_class(&self, c: &WireClass) -> Result<ClassKey, CodecError>;
    fn wire_class_of(&self, c: &ClassKey) -> Option<WireClass>;
    fn alloc(&mut self, obj: Object) -> (ObjectRef, ObjectCell);
}

pub struct Encoder<'a, C: EncodeCtx + ?Sized> {
    ctx: &'a C,
    w: Writer,
    nodes: HashMap<ObjectRef, u32>,
    /// Nodes in index order; bodies are written by `finish`.
    pending: Vec<(ObjectRef, ObjectCell)>,
}

impl<'a, C: EncodeCtx + ?Sized> Encoder<'a, C> {
    pub fn new(ctx: &'a C) -> Self {
        Encoder { ctx, w: Writer::new(), nodes: HashMap::new(), pending: Vec::new() }
    }

    /// Node numbering is shared across every value written to one encoder.
    pub fn value(&mut self, v: &Value, mode: Mode) -> Result<(), CodecError> {
        let mut w = std::mem::take(&mut self.w);
        let r = self.value_at(&mut w, v, mode, 0);
        self.w = w;
        r
    }

    /// Appends the node table. Fields of copied objects are always copied.
    pub fn finish(mut self) -> Result<Vec<u8>, CodecError> {
        let mut body = Writer::new();
        let mut i = 0;
        while i < self.pending.len() {
            let (class, fields) = {
                let o = self.pending[i].1.borrow();
                (o.class.clone(), o.fields.clone())
            };
            self.ctx.wire_class(&class).write(&mut body);
            body.u32(fields.len() as u32);
            for f in &fields {
                self.value_at(&mut body, f, Mode::Copy, 0)?;
            }
            i += 1;
        }
        self.w.u32(self.pending.len() as u32).raw(&body.into_inner());
        Ok(self.w.into_inner())
    }

    fn value_at(&mut self, w: &mut Writer, v: &Value, mode: Mode, depth: usize) -> Result<(), CodecError> {
        if depth > MAX_DEPTH {
            return Err(CodecError::MalformedEncoding("value nesting too deep".into()));
        }
        match v {
            Value::Null => {
                w.u8(TAG_NULL);
            }
            Value::Bool(b) => {
                w.u8(TAG_BOOL).bool(*b);
            }
            Value::Int(i) => {
                w.u8(TAG_INT).i64(*i);
            }
            Value::Char(c) => {
                w.u8(TAG_CHAR).u8(*c);
            }
            Value::Array(a) => {
                let a = a.borrow();
                w.u8(TAG_ARRAY);
                match &*a {
                    ArrayData::Bool(v) => {
                        w.u8(TAG_BOOL).u32(v.len() as u32);
                        for b in v {
                            w.bool(*b);
                        }
                    }
                    ArrayData::Int(v) => {
                        w.u8(TAG_INT).u32(v.len() as u32);
                        for i in v {
                            w.i64(*i);
                        }
                    }
                    ArrayData::Char(v) => {
                        w.u8(TAG_CHAR).u32(v.len() as u32).raw(v);
                    }
                    ArrayData::Ref(v) => {
                        w.u8(ELEM_TAGGED).u32(v.len() as u32);
                        for e in v {
                            self.value_at(w, e, mode, depth + 1)?;
                        }
                    }
                }
            }
            Value::Ref(r) => self.reference(w, r, mode)?,
        }
        Ok(())
    }

    fn reference(&mut self, w: &mut Writer, r: &ObjectRef, mode: Mode) -> Result<(), CodecError> {
        let local_user = r.is_on(self.ctx.local_host()) && matches!(r.class, ClassKey::User { .. });
        let obj = if local_user { self.ctx.object(r) } else { None };
        let Some(obj) = obj else {
            write_remote_ref(w, r, |c| self.ctx.wire_class(c));
            return Ok(());
        };
        if mode == Mode::Share {
            if self.ctx.is_external(&r.class) {
                write_remote_ref(w, r, |c| self.ctx.wire_class(c));
                return Ok(());
            }
            return Err(CodecError::NonCopyableValue(self.ctx.class_name(&r.class)));
        }
        let idx = match self.nodes.get(r) {
            Some(i) => *i,
            None => {
                let i = self.pending.len() as u32;
                self.nodes.insert(r.clone(), i);
                self.pending.push((r.clone(), obj));
                i
            }
        };
        w.u8(TAG_NODE).u32(idx);
        Ok(())
    }
}

pub fn write_remote_ref(w: &mut Writer, r: &ObjectRef, wire_class: impl Fn(&ClassKey) -> WireClass) {
    w.u8(TAG_REMOTE);
    write_ref_body(w, r, wire_class);
}

/// An object reference without the leading tag.
pub fn write_ref_body(w: &mut Writer, r: &ObjectRef, wire_class: impl Fn(&ClassKey) -> WireClass) {
    w.str(&r.host);
    match r.space {
        Space::Heap => w.u8(0),
        Space::Partition(p) => w.u8(1).u32(p),
    };
    w.u64(r.oid);
    match &r.class {
        ClassKey::Host => {
            w.u8(0);
        }
        ClassKey::Queue => {
            w.u8(1);
        }
        c @ ClassKey::User { .. } => {
            w.u8(2);
            wire_class(c).write(w);
        }
    }
}

/// A reference whose class has not been resolved against the local store yet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireRef {
    pub host: String,
    pub space: Space,
    pub oid: u64,
    pub class: WireRefClass,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WireRefClass {
    Host,
    Queue,
    User(WireClass),
}

pub fn read_ref_body(r: &mut Reader) -> Result<WireRef, CodecError> {
    let host = r.str()?;
    let space = match r.u8()? {
        0 => Space::Heap,
        1 => Space::Partition(r.u32()?),
        _ => return Err(CodecError::MalformedEncoding("space".into())),
    };
    let oid = r.u64()?;
    let class = match r.u8()? {
        0 => WireRefClass::Host,
        1 => WireRefClass::Queue,
        2 => WireRefClass::User(WireClass::read(r)?),
        _ => return Err(CodecError::MalformedEncoding("reference class".into())),
    };
    Ok(WireRef { host, space, oid, class })
}

impl WireRef {
    pub fn resolve(&self, resolve: impl Fn(&WireClass) -> Result<ClassKey, CodecError>) -> Result<ObjectRef, CodecError> {
        let class = match &self.class {
            WireRefClass::Host => ClassKey::Host,
            WireRefClass::Queue => ClassKey::Queue,
            WireRefClass::User(c) => resolve(c)?,
        };
        Ok(ObjectRef { host: self.host.as_str().into(), space: self.space, oid: self.oid, class })
    }
}

/// A decoded but not yet materialized value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WireValue {
    Null,
    Bool(bool),
    Int(i64),
    Char(u8),
    Bools(Vec<bool>),
    Ints(Vec<i64>),
    Chars(Vec<u8>),
    Values(Vec<WireValue>),
    /// Index into the payload's node table.
    Node(u32),
    Remote(WireRef),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireNode {
    pub class: WireClass,
    pub fields: Vec<WireValue>,
}

/// A decoded payload: the values and the objects they copy.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WireValues {
    pub values: Vec<WireValue>,
    pub nodes: Vec<WireNode>,
}

impl WireValues {
    /// Every class named anywhere in the payload.
    pub fn classes(&self, out: &mut Vec<WireClass>) {
        for v in &self.values {
            v.classes(out);
        }
        for n in &self.nodes {
            out.push(n.class.clone());
            n.fields.iter().for_each(|x| x.classes(out));
        }
    }
}

pub fn read_wire_value(r: &mut Reader) -> Result<WireValue, CodecError> {
    read_at(r, 0)
}

fn read_at(r: &mut Reader, depth: usize) -> Result<WireValue, CodecError> {
    if depth > MAX_DEPTH {
        return Err(CodecError::MalformedEncoding("value nesting too deep".into()));
    }
    Ok(match r.u8()? {
        TAG_NULL => WireValue::Null,
        TAG_BOOL => WireValue::Bool(r.bool()?),
        TAG_INT => WireValue::Int(r.i64()?),
        TAG_CHAR => WireValue::Char(r.u8()?),
        TAG_ARRAY => {
            let elem = r.u8()?;
            match elem {
                TAG_BOOL => {
                    let n = r.count(1)?;
                    WireValue::Bools((0..n).map(|_| r.bool()).collect::<Result<_, _>>()?)
                }
                TAG_INT => {
                    let n = r.count(8)?;
                    WireValue::Ints((0..n).map(|_| r.i64()).collect::<Result<_, _>>()?)
                }
                TAG_CHAR => {
                    let n = r.count(1)?;
                    WireValue::Chars(r.take(n)?.to_vec())
                }
                ELEM_TAGGED => {
                    let n = r.count(1)?;
                    WireValue::Values((0..n).map(|_| read_at(r, depth + 1)).collect::<Result<_, _>>()?)
                }
                t => return Err(CodecError::UnknownTag(t)),
            }
        }
        TAG_NODE => WireValue::Node(r.u32()?),
        TAG_REMOTE => WireValue::Remote(read_ref_body(r)?),
        t => return Err(CodecError::UnknownTag(t)),
    })
}

impl WireValue {
    /// Classes of remote references in the value; node classes live in the table.
    pub fn classes(&self, out: &mut Vec<WireClass>) {
        match self {
            WireValue::Values(v) => v.iter().for_each(|x| x.classes(out)),
            WireValue::Remote(WireRef { class: WireRefClass::User(c), .. }) => out.push(c.clone()),
            _ => {}
        }
    }
}

/// Builds values from wire form. Every node is allocated before any field is
/// filled, so references between nodes resolve in any order.
pub struct Materializer<'a, C: DecodeCtx + ?Sized> {
    ctx: &'a mut C,
    nodes: Vec<ObjectRef>,
}

impl<'a, C: DecodeCtx + ?Sized> Materializer<'a, C> {
    pub fn new(ctx: &'a mut C) -> Self {
        Materializer { ctx, nodes: Vec::new() }
    }

    pub fn payload(&mut self, p: &WireValues) -> Result<Vec<Value>, CodecError> {
        let mut cells = Vec::with_capacity(p.nodes.len());
        for n in &p.nodes {
            let key = self.ctx.resolve_class(&n.class)?;
            let (r, cell) = self.ctx.alloc(Object { class: key, fields: Vec::new(), acl: None });
            self.nodes.push(r);
            cells.push(cell);
        }
        for (n, cell) in p.nodes.iter().zip(cells) {
            let vals = n.fields.iter().map(|x| self.value(x)).collect::<Result<Vec<_>, _>>()?;
            cell.borrow_mut().fields = vals;
        }
        p.values.iter().map(|v| self.value(v)).collect()
    }

    fn value(&mut self, w: &WireValue) -> Result<Value, CodecError> {
        Ok(match w {
            WireValue::Null => Value::Null,
            WireValue::Bool(b) => Value::Bool(*b),
            WireValue::Int(i) => Value::Int(*i),
            WireValue::Char(c) => Value::Char(*c),
            WireValue::Bools(v) => Value::array(ArrayData::Bool(v.clone())),
            WireValue::Ints(v) => Value::array(ArrayData::Int(v.clone())),
            WireValue::Chars(v) => Value::array(ArrayData::Char(v.clone())),
            WireValue::Values(v) => {
                let items = v.iter().map(|x| self.value(x)).collect::<Result<Vec<_>, _>>()?;
                Value::array(ArrayData::Ref(items))
            }
            WireValue::Remote(wr) => {
                let ctx = &*self.ctx;
                Value::Ref(wr.resolve(|c| ctx.resolve_class(c))?)
            }
            WireValue::Node(i) => match self.nodes.get(*i as usize) {
                Some(r) => Value::Ref(r.clone()),
                None => return Err(CodecError::MalformedEncoding(format!("reference to missing node {i}"))),
            },
        })
    }
}

/// Encodes a list of values with per-value modes, sharing node numbering.
pub fn encode_values<C: EncodeCtx + ?Sized>(ctx: &C, values: &[(Value, Mode)]) -> Result<Vec<u8>, CodecError> {
    let mut e = Encoder::new(ctx);
    e.w.u32(values.len() as u32);
    for (v, m) in values {
        e.value(v, *m)?;
    }
    e.finish()
}

pub fn read_wire_values(bytes: &[u8]) -> Result<WireValues, CodecError> {
    let mut r = Reader::new(bytes);
    let n = r.count(1)?;
    let values = (0..n).map(|_| read_wire_value(&mut r)).collect::<Result<Vec<_>, _>>()?;
    let n = r.count(1)?;
    let mut nodes = Vec::with_capacity(n);
    for _ in 0..n {
        let class = WireClass::read(&mut r)?;
        let k = r.count(1)?;
        let fields = (0..k).map(|_| read_wire_value(&mut r)).collect::<Result<Vec<_>, _>>()?;
        nodes.push(WireNode { class, fields });
    }
    if !r.is_empty() {
        return Err(CodecError::MalformedEncoding("trailing bytes".into()));
    }
    Ok(WireValues { values, nodes })
}

pub fn materialize_values<C: DecodeCtx + ?Sized>(ctx: &mut C, wire: &WireValues) -> Result<Vec<Value>, CodecError> {
    Materializer::new(ctx).payload(wire)
}

/// A self-contained object space, for tests and offline tools.
#[derive(Debug)]
pub struct MemorySpace {
    pub host: String,
    pub objects: crate::value::ObjectTable,
    pub external: bool,
}

impl MemorySpace {
    pub fn new(host: &str) -> Self {
        MemorySpace { host: host.to_string(), objects: Default::default(), external: false }
    }

    pub fn new_object(&mut self, class_index: u32, fields: Vec<Value>) -> ObjectRef {
        let class = ClassKey::User { package: "mem".into(), index: class_index };
        let (oid, _) = self.objects.insert(Object { class: class.clone(), fields, acl: None });
        ObjectRef { host: self.host.as_str().into(), space: Space::Heap, oid, class }
    }

    pub fn cell(&self, r: &ObjectRef) -> Option<ObjectCell> {
        if r.is_on(&self.host) {
            self.objects.get(r.oid)
        } else {
            None
        }
    }
}

impl EncodeCtx for MemorySpace {
    fn local_host(&self) -> &str {
        &self.host
    }

    fn object(&self, r: &ObjectRef) -> Option<ObjectCell> {
        self.cell(r)
    }

    fn is_external(&self, _c: &ClassKey) -> bool {
        self.external
    }

    fn wire_class(&self, c: &ClassKey) -> WireClass {
        match c {
            ClassKey::User { package, index } => WireClass { package: package.to_string(), hash: [0; 32], index: *index },
            _ => WireClass { package: String::new(), hash: [0; 32], index: 0 },
        }
    }

    fn class_name(&self, c: &ClassKey) -> String {
        format!("{c:?}")
    }
}

impl DecodeCtx for MemorySpace {
    fn resolve_class(&self, c: &WireClass) -> Result<ClassKey, CodecError> {
        Ok(ClassKey::User { package: c.package.as_str().into(), index: c.index })
    }

    fn wire_class_of(&self, c: &ClassKey) -> Option<WireClass> {
        Some(self.wire_class(c))
    }

    fn alloc(&mut self, obj: Object) -> (ObjectRef, ObjectCell) {
        let class = obj.class.clone();
        let (oid, cell) = self.objects.insert(obj);
        (ObjectRef { host: self.host.as_str().into(), space: Space::Heap, oid, class }, cell)
    }
}

/// Copies `v` from one space to another through the wire encoding.
pub fn transfer(from: &MemorySpace, to: &mut MemorySpace, v: &Value, mode: Mode) -> Result<Value, CodecError> {
    let bytes = encode_values(from, &[(v.clone(), mode)])?;
    let wire = read_wire_values(&bytes)?;
    Ok(materialize_values(to, &wire)?.remove(0))
}

pub fn shared(v: Value) -> Rc<RefCell<Value>> {
    Rc::new(RefCell::new(v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn enc(space: &MemorySpace, v: &Value) -> Vec<u8> {
        encode_values(space, &[(v.clone(), Mode::Copy)]).unwrap()
    }

    #[test]
    fn null_is_one_byte_plus_framing() {
        assert_eq!(enc(&MemorySpace::new("a"), &Value::Null), vec![0, 0, 0, 1, 0x00, 0, 0, 0, 0]);
    }

    #[test]
    fn cycle_is_two_nodes() {
        let mut s = MemorySpace::new("a");
        let a = s.new_object(0, vec![Value::Null]);
        let b = s.new_object(0, vec![Value::Ref(a.clone())]);
        s.cell(&a).unwrap().borrow_mut().fields[0] = Value::Ref(b);
        let w = read_wire_values(&enc(&s, &Value::Ref(a))).unwrap();
        assert_eq!(w.values, vec![WireValue::Node(0)]);
        assert_eq!(w.nodes.len(), 2);
        assert_eq!(w.nodes[0].fields, vec![WireValue::Node(1)]);
        assert_eq!(w.nodes[1].fields, vec![WireValue::Node(0)]);
    }

    #[test]
    fn long_chain_copies_without_nesting() {
        let mut s = MemorySpace::new("a");
        let mut next = Value::Null;
        for i in 0..100_000 {
            next = Value::Ref(s.new_object(0, vec![Value::Int(i), next]));
        }
        let mut t = MemorySpace::new("b");
        let mut v = transfer(&s, &mut t, &next, Mode::Copy).unwrap();
        let mut n = 0;
        while let Value::Ref(r) = v {
            let f = t.cell(&r).unwrap().borrow().fields.clone();
            assert_eq!(f[0], Value::Int(99_999 - n));
            v = f[1].clone();
            n += 1;
        }
        assert_eq!(n, 100_000);
    }

    #[test]
    fn share_mode_rejects_non_external_objects() {
        let mut s = MemorySpace::new("a");
        let a = s.new_object(0, vec![]);
        assert!(matches!(encode_values(&s, &[(Value::Ref(a.clone()), Mode::Share)]), Err(CodecError::NonCopyableValue(_))));
        s.external = true;
        let bytes = encode_values(&s, &[(Value::Ref(a.clone()), Mode::Share)]).unwrap();
        let mut t = MemorySpace::new("b");
        let v = materialize_values(&mut t, &read_wire_values(&bytes).unwrap()).unwrap();
        assert!(v[0].same(&Value::Ref(a)));
    }

    #[test]
    fn large_char_array_is_byte_identical() {
        let data: Vec<u8> = (0..4 * 1024 * 1024).map(|i| (i * 31 % 251) as u8).collect();
        let s = MemorySpace::new("a");
        let mut t = MemorySpace::new("b");
        let v = transfer(&s, &mut t, &Value::str(&data), Mode::Share).unwrap();
        assert_eq!(v.as_bytes().unwrap(), data);
    }

    #[test]
    fn rejects_bad_tags_and_dangling_backrefs() {
        assert_eq!(read_wire_value(&mut Reader::new(&[9])), Err(CodecError::UnknownTag(9)));
        let w = read_wire_values(&[0, 0, 0, 1, TAG_NODE, 0, 0, 0, 3, 0, 0, 0, 0]).unwrap();
        assert!(materialize_values(&mut MemorySpace::new("x"), &w).is_err());
    }

    fn scalar() -> impl Strategy<Value = Value> {
        prop_oneof![
            Just(Value::Null),
            any::<bool>().prop_map(Value::Bool),
            any::<i64>().prop_map(Value::Int),
            any::<u8>().prop_map(Value::Char),
            proptest::collection::vec(any::<u8>(), 0..16).prop_map(|b| Value::str(&b)),
            proptest::collection::vec(any::<i64>(), 0..8).prop_map(|v| Value::array(ArrayData::Int(v))),
            proptest::collection::vec(any::<bool>(), 0..8).prop_map(|v| Value::array(ArrayData::Bool(v))),
            ("[a-z]{1,6}", 0u64..100).prop_map(|(h, o)| Value::Ref(ObjectRef::queue(&h, o))),
        ]
    }

    fn value() -> impl Strategy<Value = Value> {
        scalar().prop_recursive(3, 32, 6, |inner| proptest::collection::vec(inner, 0..6).prop_map(|v| Value::array(ArrayData::Ref(v))))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn round_trip(v in value()) {
            let s = MemorySpace::new("a");
            let mut t = MemorySpace::new("b");
            let back = transfer(&s, &mut t, &v, Mode::Copy).unwrap();
            prop_assert!(back.deep_eq(&v));
        }
    }

    /// Node i's successors; an entry of n or more means null.
    fn graph(space: &mut MemorySpace, succ: &[(usize, usize)]) -> Vec<ObjectRef> {
        let refs: Vec<ObjectRef> = (0..succ.len()).map(|i| space.new_object(0, vec![Value::Int(i as i64)])).collect();
        let at = |k: usize| refs.get(k).map_or(Value::Null, |r| Value::Ref(r.clone()));
        for (r, (x, y)) in refs.iter().zip(succ) {
            let f = vec![Value::Int(r.oid as i64), at(*x), at(*y)];
            space.cell(r).unwrap().borrow_mut().fields = f;
        }
        refs
    }

    /// Breadth-first shape of the graph under `root`: (id field, successor positions).
    fn shape(space: &MemorySpace, root: &Value) -> Vec<(Value, Option<usize>, Option<usize>)> {
        let mut seen: Vec<ObjectRef> = Vec::new();
        let mut out = Vec::new();
        let Value::Ref(r) = root else { return out };
        seen.push(r.clone());
        let mut i = 0;
        while i < seen.len() {
            let f = space.cell(&seen[i]).unwrap().borrow().fields.clone();
            let mut pos = [None, None];
            for (k, v) in f[1..].iter().enumerate() {
                if let Value::Ref(s) = v {
                    pos[k] = Some(seen.iter().position(|x| x == s).unwrap_or_else(|| {
                        seen.push(s.clone());
                        seen.len() - 1
                    }));
                }
            }
            out.push((f[0].clone(), pos[0], pos[1]));
            i += 1;
        }
        out
    }

    proptest! {
        #[test]
        fn graph_copy_is_isomorphic(succ in proptest::collection::vec((0usize..24, 0usize..24), 1..20)) {
            let mut s = MemorySpace::new("a");
            let refs = graph(&mut s, &succ);
            let root = Value::Ref(refs[0].clone());
            let mut t = MemorySpace::new("b");
            let copy = transfer(&s, &mut t, &root, Mode::Copy).unwrap();
            prop_assert_eq!(shape(&t, &copy), shape(&s, &root));
        }
    }

    proptest! {
        #[test]
        fn decoder_is_total(bytes in proptest::collection::vec(any::<u8>(), 0..128)) {
            if let Ok(w) = read_wire_values(&bytes) {
                let _ = materialize_values(&mut MemorySpace::new("z"), &w);
            }
        }
    }
}
