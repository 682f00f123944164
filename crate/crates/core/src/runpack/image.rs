//! The `.rpk` image: magic `HRPK`, u16 version, then length-prefixed sections
//! (name, hash, class table, constants, bodies). The hash is SHA-256 over the
//! name, class-table, constants and bodies sections as serialized.

use std::fmt;

use sha2::{Digest, Sha256};

use super::ir::{self, ClassDesc, ClassRef, Expr, ExprKind, MethodBody, Placement, Place, Stmt};
use crate::bytes::{ReadError, Reader, Writer};
use crate::frontend::CheckedPackage;

pub const MAGIC: [u8; 4] = *b"HRPK";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RunpackError {
    #[error("not a runpack (bad magic)")]
    BadMagic,
    #[error("unsupported runpack format version {0}")]
    VersionUnsupported(u16),
    #[error("runpack content hash does not match its header")]
    HashMismatch,
    #[error("runpack image is truncated")]
    TruncatedImage,
    #[error("malformed runpack: {0}")]
    Malformed(String),
    #[error("internal lowering error: {0}")]
    InternalLoweringError(String),
}

impl From<ReadError> for RunpackError {
    fn from(e: ReadError) -> Self {
        match e {
            ReadError::Truncated => RunpackError::TruncatedImage,
            ReadError::Invalid(what) => RunpackError::Malformed(what.to_string()),
        }
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct RunpackImage {
    pub version: u16,
    pub name: String,
    pub hash: [u8; 32],
    pub classes: Vec<ClassDesc>,
    pub constants: Vec<Vec<u8>>,
    pub bodies: Vec<Vec<Stmt>>,
}

impl fmt::Debug for RunpackImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RunpackImage")
            .field("name", &self.name)
            .field("hash", &self.hash_hex())
            .field("classes", &self.classes.len())
            .field("constants", &self.constants.len())
            .field("bodies", &self.bodies.len())
            .finish()
    }
}

/// Lowers a checked package into an image. Deterministic: equal input gives an equal hash.
pub fn compile(pkg: &CheckedPackage) -> Result<RunpackImage, RunpackError> {
    let mut img = RunpackImage {
        version: FORMAT_VERSION,
        name: pkg.name.clone(),
        hash: [0; 32],
        classes: pkg.classes.clone(),
        constants: pkg.constants.clone(),
        bodies: pkg.bodies.clone(),
    };
    img.validate(None).map_err(RunpackError::InternalLoweringError)?;
    img.hash = img.compute_hash();
    Ok(img)
}

struct Sections {
    name: Vec<u8>,
    classes: Vec<u8>,
    constants: Vec<u8>,
    bodies: Vec<u8>,
}

impl RunpackImage {
    fn sections(&self) -> Sections {
        let mut classes = Writer::new();
        classes.len_of(&self.classes);
        for c in &self.classes {
            ir::write_class(&mut classes, c);
        }
        let mut constants = Writer::new();
        constants.len_of(&self.constants);
        for c in &self.constants {
            constants.bytes(c);
        }
        let mut bodies = Writer::new();
        bodies.len_of(&self.bodies);
        for b in &self.bodies {
            ir::write_stmts(&mut bodies, b);
        }
        Sections {
            name: self.name.as_bytes().to_vec(),
            classes: classes.into_inner(),
            constants: constants.into_inner(),
            bodies: bodies.into_inner(),
        }
    }

    fn hash_sections(s: &Sections) -> [u8; 32] {
        let mut h = Sha256::new();
        for part in [&s.name, &s.classes, &s.constants, &s.bodies] {
            h.update((part.len() as u32).to_be_bytes());
            h.update(part);
        }
        h.finalize().into()
    }

    pub fn compute_hash(&self) -> [u8; 32] {
        Self::hash_sections(&self.sections())
    }

    pub fn hash_hex(&self) -> String {
        hex::encode(self.hash)
    }

    pub fn serialize(&self) -> Vec<u8> {
        let s = self.sections();
        let mut w = Writer::new();
        w.raw(&MAGIC).u16(self.version);
        w.bytes(&s.name).bytes(&self.hash).bytes(&s.classes).bytes(&s.constants).bytes(&s.bodies);
        w.into_inner()
    }

    /// Parses and verifies an image: magic, version, hash, then internal references.
    pub fn deserialize(data: &[u8]) -> Result<RunpackImage, RunpackError> {
        let mut r = Reader::new(data);
        let magic = r.take(4)?;
        if magic != MAGIC {
            return Err(RunpackError::BadMagic);
        }
        let version = r.u16()?;
        if version != FORMAT_VERSION {
            return Err(RunpackError::VersionUnsupported(version));
        }
        let name = r.bytes()?;
        let hash = r.bytes()?;
        let classes = r.bytes()?;
        let constants = r.bytes()?;
        let bodies = r.bytes()?;
        if !r.is_empty() {
            return Err(RunpackError::Malformed("trailing bytes".into()));
        }
        let hash: [u8; 32] = hash.try_into().map_err(|_| RunpackError::Malformed("hash length".into()))?;
        let sections = Sections {
            name: name.to_vec(),
            classes: classes.to_vec(),
            constants: constants.to_vec(),
            bodies: bodies.to_vec(),
        };
        if Self::hash_sections(&sections) != hash {
            return Err(RunpackError::HashMismatch);
        }
        let name = String::from_utf8(sections.name).map_err(|_| RunpackError::Malformed("package name".into()))?;

        let mut r = Reader::new(&sections.classes);
        let n = r.count(9)?;
        let classes = (0..n).map(|_| ir::read_class(&mut r)).collect::<Result<Vec<_>, _>>()?;
        expect_end(&r)?;

        let mut r = Reader::new(&sections.constants);
        let n = r.count(4)?;
        let constants = (0..n).map(|_| r.bytes().map(<[u8]>::to_vec)).collect::<Result<Vec<_>, _>>()?;
        expect_end(&r)?;

        let mut r = Reader::new(&sections.bodies);
        let n = r.count(4)?;
        let bodies = (0..n).map(|_| ir::read_stmts(&mut r)).collect::<Result<Vec<_>, _>>()?;
        expect_end(&r)?;

        let img = RunpackImage { version, name, hash, classes, constants, bodies };
        img.validate(Some(crate::stdlib::standard_classes())).map_err(RunpackError::Malformed)?;
        Ok(img)
    }

    pub fn class_index(&self, name: &str) -> Option<u32> {
        self.classes.iter().position(|c| c.name == name).map(|i| i as u32)
    }

    /// The static `main` method, as (class index, method index).
    pub fn main_method(&self) -> Option<(u32, u32)> {
        self.classes.iter().enumerate().find_map(|(ci, c)| {
            c.methods
                .iter()
                .position(|m| m.name == "main" && m.is_static())
                .map(|mi| (ci as u32, mi as u32))
        })
    }

    /// Checks that every class, method, field, constant, body and slot reference is in bounds.
    /// `std` is the standard class table used to validate `Std` references, when known.
    pub fn validate(&self, std: Option<&[ClassDesc]>) -> Result<(), String> {
        let v = Validator { img: self, std };
        let mut used_bodies = vec![false; self.bodies.len()];
        for (ci, c) in self.classes.iter().enumerate() {
            for f in &c.fields {
                v.ty(&f.ty)?;
            }
            for m in &c.methods {
                if m.params.len() as u32 > m.locals {
                    return Err(format!("{}.{}: fewer locals than parameters", c.name, m.name));
                }
                v.ty(&m.ret)?;
                for p in &m.params {
                    v.ty(&p.ty)?;
                }
                if let MethodBody::Code(b) = m.body {
                    let Some(body) = self.bodies.get(b as usize) else {
                        return Err(format!("{}.{}: body index {b} out of range", c.name, m.name));
                    };
                    used_bodies[b as usize] = true;
                    let ctx = Frame { class: ci as u32, locals: m.locals };
                    v.stmts(body, &ctx)?;
                }
            }
        }
        if used_bodies.iter().any(|u| !u) {
            return Err("unreferenced method body".into());
        }
        Ok(())
    }
}

fn expect_end(r: &Reader) -> Result<(), RunpackError> {
    if r.is_empty() {
        Ok(())
    } else {
        Err(RunpackError::Malformed("trailing bytes in section".into()))
    }
}

struct Frame {
    class: u32,
    locals: u32,
}

struct Validator<'a> {
    img: &'a RunpackImage,
    std: Option<&'a [ClassDesc]>,
}

impl Validator<'_> {
    fn class(&self, r: ClassRef) -> Result<Option<&ClassDesc>, String> {
        match r {
            ClassRef::Own(i) => self.img.classes.get(i as usize).map(Some).ok_or(format!("class index {i} out of range")),
            ClassRef::Std(i) => match self.std {
                Some(s) => s.get(i as usize).map(Some).ok_or(format!("standard class index {i} out of range")),
                None => Ok(None),
            },
        }
    }

    fn method(&self, r: ClassRef, m: u32) -> Result<(), String> {
        if let Some(c) = self.class(r)? {
            if m as usize >= c.methods.len() {
                return Err(format!("method index {m} out of range for class {}", c.name));
            }
        }
        Ok(())
    }

    fn field(&self, r: ClassRef, f: u32) -> Result<(), String> {
        if let Some(c) = self.class(r)? {
            if f as usize >= c.fields.len() {
                return Err(format!("field index {f} out of range for class {}", c.name));
            }
        }
        Ok(())
    }

    fn ty(&self, t: &ir::Ty) -> Result<(), String> {
        match t {
            ir::Ty::Array(e) => self.ty(e),
            ir::Ty::Class(r) => self.class(*r).map(|_| ()),
            _ => Ok(()),
        }
    }

    fn stmts(&self, ss: &[Stmt], f: &Frame) -> Result<(), String> {
        ss.iter().try_for_each(|s| self.stmt(s, f))
    }

    fn stmt(&self, s: &Stmt, f: &Frame) -> Result<(), String> {
        match s {
            Stmt::Expr(e) => self.expr(e, f),
            Stmt::Let(slot, e) => {
                self.slot(*slot, f)?;
                self.expr(e, f)
            }
            Stmt::If(c, a, b) => {
                self.expr(c, f)?;
                self.stmts(a, f)?;
                self.stmts(b, f)
            }
            Stmt::While(c, b) => {
                self.expr(c, f)?;
                self.stmts(b, f)
            }
            Stmt::For { init, cond, step, body } => {
                self.stmts(init, f)?;
                if let Some(c) = cond {
                    self.expr(c, f)?;
                }
                self.exprs(step, f)?;
                self.stmts(body, f)
            }
            Stmt::Return(e) => e.as_ref().map_or(Ok(()), |e| self.expr(e, f)),
            Stmt::Block(b) => self.stmts(b, f),
        }
    }

    fn slot(&self, slot: u32, f: &Frame) -> Result<(), String> {
        if slot < f.locals {
            Ok(())
        } else {
            Err(format!("local slot {slot} out of range"))
        }
    }

    fn exprs(&self, es: &[Expr], f: &Frame) -> Result<(), String> {
        es.iter().try_for_each(|e| self.expr(e, f))
    }

    fn place(&self, p: &Place, f: &Frame) -> Result<(), String> {
        match p {
            Place::Local(s) => self.slot(*s, f),
            Place::Field { obj, class, field } => {
                self.expr(obj, f)?;
                self.field(*class, *field)
            }
            Place::Index { arr, idx } => {
                self.expr(arr, f)?;
                self.expr(idx, f)
            }
        }
    }

    fn expr(&self, e: &Expr, f: &Frame) -> Result<(), String> {
        self.ty(&e.ty)?;
        match &e.kind {
            ExprKind::Int(_)
            | ExprKind::Bool(_)
            | ExprKind::Char(_)
            | ExprKind::Null
            | ExprKind::This
            | ExprKind::ThisHost
            | ExprKind::Hosts => Ok(()),
            ExprKind::Str(i) => {
                if (*i as usize) < self.img.constants.len() {
                    Ok(())
                } else {
                    Err(format!("constant index {i} out of range"))
                }
            }
            ExprKind::Local(s) => self.slot(*s, f),
            ExprKind::Field { obj, class, field } => {
                self.expr(obj, f)?;
                self.field(*class, *field)
            }
            ExprKind::Index { arr, idx } => {
                self.expr(arr, f)?;
                self.expr(idx, f)
            }
            ExprKind::Unary(_, a) => self.expr(a, f),
            ExprKind::Binary(_, a, b) => {
                self.expr(a, f)?;
                self.expr(b, f)
            }
            ExprKind::Cond(c, a, b) => {
                self.expr(c, f)?;
                self.expr(a, f)?;
                self.expr(b, f)
            }
            ExprKind::Assign { place, value, .. } => {
                self.place(place, f)?;
                self.expr(value, f)
            }
            ExprKind::IncDec { place, .. } => self.place(place, f),
            ExprKind::Call { recv, class, method, args } => {
                if let Some(r) = recv {
                    self.expr(r, f)?;
                }
                self.method(*class, *method)?;
                self.exprs(args, f)
            }
            ExprKind::New { class, ctor, args, placement } => {
                if let Some(c) = ctor {
                    self.method(*class, *c)?;
                } else {
                    self.class(*class)?;
                }
                if let Placement::Partition(Some(at)) = placement {
                    self.expr(at, f)?;
                }
                self.exprs(args, f)
            }
            ExprKind::NewQueue { at } => at.as_ref().map_or(Ok(()), |a| self.expr(a, f)),
            ExprKind::NewArray { elem, sizes, .. } => {
                self.ty(elem)?;
                self.exprs(sizes, f)
            }
            ExprKind::QueuedEval { queue, class, method, captures, .. } => {
                self.expr(queue, f)?;
                if *class != ClassRef::Own(f.class) {
                    return Err("queued expression lifted into a foreign class".into());
                }
                self.method(*class, *method)?;
                self.exprs(captures, f)
            }
            ExprKind::Post { queue, target, class, method, args } => {
                self.expr(queue, f)?;
                self.expr(target, f)?;
                self.method(*class, *method)?;
                self.exprs(args, f)
            }
            ExprKind::Iterate { group, class, method, args } => {
                self.expr(group, f)?;
                self.method(*class, *method)?;
                self.exprs(args, f)
            }
            ExprKind::Builtin { args, .. } => self.exprs(args, f),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{translate, SourceUnit};

    fn image(src: &str) -> RunpackImage {
        compile(&translate(&[SourceUnit::new("a.hlo", src)]).unwrap()).unwrap()
    }

    const HELLO: &str = "package Hello_world;\nclass HelloWorld {\n public static void main() {\n  hosts.+print(\"Hello, world!\\n\" + this_host.name() + \":-)\\n\");\n }\n};\n";

    #[test]
    fn hello_world_has_one_class_with_main() {
        let img = image(HELLO);
        assert_eq!(img.classes.len(), 1);
        assert!(img.main_method().is_some());
    }

    #[test]
    fn empty_package_is_valid() {
        let img = image("package empty;");
        assert!(img.classes.is_empty());
        assert_eq!(RunpackImage::deserialize(&img.serialize()).unwrap(), img);
    }

    #[test]
    fn two_compiles_are_byte_identical() {
        assert_eq!(image(HELLO).serialize(), image(HELLO).serialize());
    }

    #[test]
    fn round_trip() {
        let img = image(HELLO);
        assert_eq!(RunpackImage::deserialize(&img.serialize()).unwrap(), img);
    }

    #[test]
    fn every_payload_byte_flip_is_detected() {
        let bytes = image(HELLO).serialize();
        for i in 6..bytes.len() {
            let mut b = bytes.clone();
            b[i] ^= 0x01;
            assert!(RunpackImage::deserialize(&b).is_err(), "flip at {i} accepted");
        }
    }

    #[test]
    fn body_flip_is_hash_mismatch() {
        let mut b = image(HELLO).serialize();
        let n = b.len();
        b[n - 3] ^= 0xff;
        assert_eq!(RunpackImage::deserialize(&b), Err(RunpackError::HashMismatch));
    }

    #[test]
    fn degenerate_inputs() {
        assert_eq!(RunpackImage::deserialize(&[]), Err(RunpackError::TruncatedImage));
        assert_eq!(RunpackImage::deserialize(b"XXXX\0\x01"), Err(RunpackError::BadMagic));
        assert_eq!(RunpackImage::deserialize(b"HRPK\0\x09"), Err(RunpackError::VersionUnsupported(9)));
        assert_eq!(RunpackImage::deserialize(b"HRPK\0\x01\0\0"), Err(RunpackError::TruncatedImage));
    }
}
