//! Binds the value codec to an engine's object spaces and class store.

use crate::error::{EngineError, EngineResult, FaultCode};
use crate::net::codec::{
    self, CodecError, DecodeCtx, EncodeCtx, Mode, WireClass, WireRef, WireRefClass, WireValues,
};
use crate::runpack::ir::{method_flags, MethodDesc, ParamDesc};
use crate::value::{ArrayData, ClassKey, Object, ObjectCell, ObjectRef, Space, Value};

use super::Engine;

impl EncodeCtx for Engine {
    fn local_host(&self) -> &str {
        self.name()
    }

    fn object(&self, r: &ObjectRef) -> Option<ObjectCell> {
        Engine::object(self, r)
    }

    fn is_external(&self, c: &ClassKey) -> bool {
        self.class_info(c).map(|ci| ci.desc().is_external()).unwrap_or(false)
    }

    fn wire_class(&self, c: &ClassKey) -> WireClass {
        match c {
            ClassKey::User { package, index } => {
                let hash = self.image(package).map(|(_, img)| img.hash).unwrap_or([0; 32]);
                WireClass { package: package.to_string(), hash, index: *index }
            }
            _ => WireClass { package: String::new(), hash: [0; 32], index: 0 },
        }
    }

    fn class_name(&self, c: &ClassKey) -> String {
        Engine::class_name(self, c)
    }
}

/// Decoding context that allocates into one space of an engine.
pub(crate) struct Alloc<'a> {
    pub eng: &'a Engine,
    pub space: Space,
}

impl DecodeCtx for Alloc<'_> {
    fn resolve_class(&self, c: &WireClass) -> Result<ClassKey, CodecError> {
        self.eng.resolve_wire_class(c).map_err(|_| CodecError::UnknownClass(format!("{}#{}", c.package, c.index)))
    }

    fn wire_class_of(&self, c: &ClassKey) -> Option<WireClass> {
        matches!(c, ClassKey::User { .. }).then(|| self.eng.wire_class(c))
    }

    fn alloc(&mut self, obj: Object) -> (ObjectRef, ObjectCell) {
        self.eng.alloc(self.space, obj)
    }
}

pub(crate) fn codec_err(eng: &Engine, e: CodecError) -> EngineError {
    match e {
        CodecError::NonCopyableValue(c) => eng.fault(FaultCode::NonCopyableValue, format!("{c} is not external")),
        CodecError::UnknownClass(c) => EngineError::UnknownClass(c),
        other => eng.fault(FaultCode::MalformedEncoding, other.to_string()),
    }
}

pub(crate) fn param_mode(p: &ParamDesc) -> Mode {
    if p.copy {
        Mode::Copy
    } else {
        Mode::Share
    }
}

pub(crate) fn ret_mode(m: &MethodDesc) -> Mode {
    if m.has(method_flags::COPY_RET) {
        Mode::Copy
    } else {
        Mode::Share
    }
}

impl Engine {
    /// A wire class resolved against installed images; the hash must match.
    pub(crate) fn resolve_wire_class(&self, c: &WireClass) -> EngineResult<ClassKey> {
        let (pkg, img) = self.image(&c.package).ok_or_else(|| EngineError::UnknownClass(format!("{}#{}", c.package, c.index)))?;
        if img.hash != c.hash {
            return Err(EngineError::HashMismatch(c.package.clone()));
        }
        if c.index as usize >= img.classes.len() {
            return Err(EngineError::UnknownClass(format!("{}#{}", c.package, c.index)));
        }
        Ok(ClassKey::User { package: pkg, index: c.index })
    }

    pub(crate) fn resolve_wire_ref(&self, r: &WireRef) -> EngineResult<ObjectRef> {
        let class = match &r.class {
            WireRefClass::Host => ClassKey::Host,
            WireRefClass::Queue => ClassKey::Queue,
            WireRefClass::User(c) => self.resolve_wire_class(c)?,
        };
        Ok(ObjectRef { host: r.host.as_str().into(), space: r.space, oid: r.oid, class })
    }

    pub(crate) fn wire_ref(&self, r: &ObjectRef) -> WireRef {
        let class = match &r.class {
            ClassKey::Host => WireRefClass::Host,
            ClassKey::Queue => WireRefClass::Queue,
            c => WireRefClass::User(self.wire_class(c)),
        };
        WireRef { host: r.host.to_string(), space: r.space, oid: r.oid, class }
    }

    pub(crate) fn encode(&self, values: &[(Value, Mode)]) -> EngineResult<Vec<u8>> {
        codec::encode_values(self, values).map_err(|e| codec_err(self, e))
    }

    /// Encodes call arguments with the modes their parameters declare.
    pub(crate) fn encode_args(&self, params: &[ParamDesc], args: &[Value]) -> EngineResult<Vec<u8>> {
        let vals: Vec<(Value, Mode)> =
            args.iter().enumerate().map(|(i, v)| (v.clone(), params.get(i).map(param_mode).unwrap_or(Mode::Share))).collect();
        self.encode(&vals)
    }

    pub(crate) fn read_wire(&self, bytes: &[u8]) -> EngineResult<WireValues> {
        codec::read_wire_values(bytes).map_err(|e| codec_err(self, e))
    }

    /// Builds heap objects from already-fetched wire values.
    pub(crate) fn materialize(&self, wire: &WireValues) -> EngineResult<Vec<Value>> {
        let mut a = Alloc { eng: self, space: Space::Heap };
        codec::materialize_values(&mut a, wire).map_err(|e| codec_err(self, e))
    }

    /// Decodes a value list sent by `origin`, fetching any packages it names first.
    pub(crate) async fn decode_from(&self, origin: &str, bytes: &[u8]) -> EngineResult<Vec<Value>> {
        let wire = self.read_wire(bytes)?;
        let mut classes = Vec::new();
        wire.classes(&mut classes);
        self.ensure_classes(origin, &classes).await?;
        self.materialize(&wire)
    }

    /// Deep copy within this host, as a `copy` parameter receives it.
    pub(crate) fn local_copy(&self, v: &Value) -> EngineResult<Value> {
        match v {
            Value::Array(a) if !matches!(&*a.borrow(), ArrayData::Ref(_)) => Ok(v.snapshot()),
            Value::Array(_) | Value::Ref(_) => {
                let bytes = self.encode(&[(v.clone(), Mode::Copy)])?;
                let wire = self.read_wire(&bytes)?;
                Ok(self.materialize(&wire)?.pop().unwrap_or(Value::Null))
            }
            other => Ok(other.clone()),
        }
    }

    /// Applies `copy` parameter semantics to arguments of a local call.
    pub(crate) fn prepare_local_args(&self, params: &[ParamDesc], args: Vec<Value>) -> EngineResult<Vec<Value>> {
        args.into_iter()
            .enumerate()
            .map(|(i, v)| if params.get(i).is_some_and(|p| p.copy) { self.local_copy(&v) } else { Ok(v) })
            .collect()
    }

    /// Serializes `v` as it would cross the network (tools and tests).
    pub fn export_value(&self, v: &Value, copy: bool) -> EngineResult<Vec<u8>> {
        self.encode(&[(v.clone(), if copy { Mode::Copy } else { Mode::Share })])
    }

    /// Materializes a value produced by [`Engine::export_value`]; classes must be installed.
    pub fn import_value(&self, bytes: &[u8]) -> EngineResult<Value> {
        let wire = self.read_wire(bytes)?;
        Ok(self.materialize(&wire)?.pop().unwrap_or(Value::Null))
    }
}
