//! Runtime values, object references, and object tables.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fmt;
use std::rc::Rc;

use crate::runpack::ir::Ty;
use crate::security::CredentialSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Space {
    /// Private to the owning engine.
    Heap,
    Partition(u32),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ClassKey {
    Host,
    Queue,
    User { package: Rc<str>, index: u32 },
}

/// A reference to an object anywhere on the network.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ObjectRef {
    pub host: Rc<str>,
    pub space: Space,
    pub oid: u64,
    pub class: ClassKey,
}

/// Object id of each host's node in the `hosts` group (partition 0).
pub const HOSTS_NODE_OID: u64 = 1;

impl ObjectRef {
    pub fn host(name: &str) -> ObjectRef {
        ObjectRef { host: name.into(), space: Space::Partition(0), oid: 0, class: ClassKey::Host }
    }

    pub fn queue(host: &str, qid: u64) -> ObjectRef {
        ObjectRef { host: host.into(), space: Space::Partition(0), oid: qid, class: ClassKey::Queue }
    }

    pub fn is_on(&self, host: &str) -> bool {
        &*self.host == host
    }
}

impl fmt::Display for ObjectRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let space = match self.space {
            Space::Heap => "heap".to_string(),
            Space::Partition(p) => format!("p{p}"),
        };
        write!(f, "{}/{}/{}", self.host, space, self.oid)
    }
}

pub type ArrayRef = Rc<RefCell<ArrayData>>;

#[derive(Debug, Clone, PartialEq)]
pub enum ArrayData {
    Int(Vec<i64>),
    Bool(Vec<bool>),
    Char(Vec<u8>),
    /// Arrays of arrays, objects, hosts or queues.
    Ref(Vec<Value>),
}

impl ArrayData {
    pub fn new(elem: &Ty, len: usize) -> ArrayData {
        match elem {
            Ty::Int => ArrayData::Int(vec![0; len]),
            Ty::Bool => ArrayData::Bool(vec![false; len]),
            Ty::Char => ArrayData::Char(vec![0; len]),
            _ => ArrayData::Ref(vec![Value::Null; len]),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ArrayData::Int(v) => v.len(),
            ArrayData::Bool(v) => v.len(),
            ArrayData::Char(v) => v.len(),
            ArrayData::Ref(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize) -> Option<Value> {
        match self {
            ArrayData::Int(v) => v.get(i).map(|x| Value::Int(*x)),
            ArrayData::Bool(v) => v.get(i).map(|x| Value::Bool(*x)),
            ArrayData::Char(v) => v.get(i).map(|x| Value::Char(*x)),
            ArrayData::Ref(v) => v.get(i).cloned(),
        }
    }

    /// Stores `val`, coercing between int and char. Returns false when out of bounds.
    pub fn set(&mut self, i: usize, val: Value) -> bool {
        if i >= self.len() {
            return false;
        }
        match self {
            ArrayData::Int(v) => v[i] = val.as_int(),
            ArrayData::Bool(v) => v[i] = val.truthy(),
            ArrayData::Char(v) => v[i] = val.as_int() as u8,
            ArrayData::Ref(v) => v[i] = val,
        }
        true
    }
}

#[derive(Debug, Clone)]
pub enum Value {
    Null,
    Bool(bool),
    Int(i64),
    Char(u8),
    Array(ArrayRef),
    Ref(ObjectRef),
}

impl Value {
    pub fn default_for(t: &Ty) -> Value {
        match t {
            Ty::Int => Value::Int(0),
            Ty::Bool => Value::Bool(false),
            Ty::Char => Value::Char(0),
            _ => Value::Null,
        }
    }

    pub fn str(s: &[u8]) -> Value {
        Value::Array(Rc::new(RefCell::new(ArrayData::Char(s.to_vec()))))
    }

    pub fn array(data: ArrayData) -> Value {
        Value::Array(Rc::new(RefCell::new(data)))
    }

    pub fn as_int(&self) -> i64 {
        match self {
            Value::Int(i) => *i,
            Value::Char(c) => *c as i64,
            Value::Bool(b) => *b as i64,
            _ => 0,
        }
    }

    pub fn truthy(&self) -> bool {
        match self {
            Value::Bool(b) => *b,
            Value::Int(i) => *i != 0,
            Value::Char(c) => *c != 0,
            Value::Null => false,
            _ => true,
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    /// Bytes of a char array, if this is one.
    pub fn as_bytes(&self) -> Option<Vec<u8>> {
        match self {
            Value::Array(a) => match &*a.borrow() {
                ArrayData::Char(v) => Some(v.clone()),
                _ => None,
            },
            _ => None,
        }
    }

    /// The `==` operator: scalars by value, arrays by identity, references by target.
    pub fn same(&self, other: &Value) -> bool {
        match (self, other) {
            (Value::Null, Value::Null) => true,
            (Value::Bool(a), Value::Bool(b)) => a == b,
            (Value::Int(_) | Value::Char(_), Value::Int(_) | Value::Char(_)) => self.as_int() == other.as_int(),
            (Value::Array(a), Value::Array(b)) => Rc::ptr_eq(a, b),
            (Value::Ref(a), Value::Ref(b)) => a.host == b.host && a.space == b.space && a.oid == b.oid,
            _ => false,
        }
    }

    /// Structural equality: arrays compared element-wise, references by target.
    pub fn deep_eq(&self, other: &Value) -> bool {
        match (self, other) {
            (Value::Array(a), Value::Array(b)) => {
                let (a, b) = (a.borrow(), b.borrow());
                match (&*a, &*b) {
                    (ArrayData::Ref(x), ArrayData::Ref(y)) => x.len() == y.len() && x.iter().zip(y).all(|(p, q)| p.deep_eq(q)),
                    (x, y) => x == y,
                }
            }
            (Value::Int(a), Value::Int(b)) => a == b,
            (Value::Char(a), Value::Char(b)) => a == b,
            _ => self.same(other),
        }
    }

    /// Copies arrays element-wise (recursively); references and scalars are shared.
    pub fn snapshot(&self) -> Value {
        match self {
            Value::Array(a) => {
                let data = match &*a.borrow() {
                    ArrayData::Ref(v) => ArrayData::Ref(v.iter().map(Value::snapshot).collect()),
                    other => other.clone(),
                };
                Value::array(data)
            }
            other => other.clone(),
        }
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        self.deep_eq(other)
    }
}

#[derive(Debug, Clone)]
pub struct Object {
    pub class: ClassKey,
    pub fields: Vec<Value>,
    pub acl: Option<CredentialSet>,
}

pub type ObjectCell = Rc<RefCell<Object>>;

/// Objects of one space. Ids are never reused.
#[derive(Debug, Default)]
pub struct ObjectTable {
    next: u64,
    objects: BTreeMap<u64, ObjectCell>,
}

impl ObjectTable {
    pub fn with_first_id(first: u64) -> Self {
        ObjectTable { next: first, objects: BTreeMap::new() }
    }

    pub fn insert(&mut self, obj: Object) -> (u64, ObjectCell) {
        let oid = self.next.max(1);
        self.next = oid + 1;
        let cell = Rc::new(RefCell::new(obj));
        self.objects.insert(oid, cell.clone());
        (oid, cell)
    }

    pub fn insert_at(&mut self, oid: u64, obj: Object) -> ObjectCell {
        let cell = Rc::new(RefCell::new(obj));
        self.objects.insert(oid, cell.clone());
        self.next = self.next.max(oid + 1);
        cell
    }

    pub fn get(&self, oid: u64) -> Option<ObjectCell> {
        self.objects.get(&oid).cloned()
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }
}

/// Renders a value the way string concatenation does.
pub fn append_display(out: &mut Vec<u8>, v: &Value) {
    match v {
        Value::Int(i) => out.extend_from_slice(i.to_string().as_bytes()),
        Value::Char(c) => out.push(*c),
        Value::Bool(b) => out.extend_from_slice(if *b { b"true" } else { b"false" }),
        Value::Array(a) => {
            if let ArrayData::Char(s) = &*a.borrow() {
                out.extend_from_slice(s);
            }
        }
        Value::Null => out.extend_from_slice(b"null"),
        Value::Ref(r) => out.extend_from_slice(r.to_string().as_bytes()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_versus_structure() {
        let a = Value::str(b"ab");
        let b = Value::str(b"ab");
        assert!(!a.same(&b));
        assert!(a.deep_eq(&b));
        assert!(a.same(&a.clone()));
        assert!(Value::Int(65).same(&Value::Char(b'A')));
    }

    #[test]
    fn snapshot_is_independent() {
        let a = Value::str(b"abc");
        let s = a.snapshot();
        if let Value::Array(arr) = &a {
            arr.borrow_mut().set(0, Value::Char(b'z'));
        }
        assert_eq!(s.as_bytes().unwrap(), b"abc");
    }

    #[test]
    fn oids_are_not_reused() {
        let mut t = ObjectTable::default();
        let o = || Object { class: ClassKey::Host, fields: vec![], acl: None };
        let (a, _) = t.insert(o());
        let (b, _) = t.insert(o());
        assert_ne!(a, b);
    }
}
