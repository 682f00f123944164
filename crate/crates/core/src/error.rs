//! Runtime errors and their wire form.

use std::fmt;

use crate::bytes::{ReadError, Reader, Writer};
use crate::security::Layer;

/// Faults raised by program execution itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u16)]
pub enum FaultCode {
    NullReference = 1,
    ArithmeticFault = 2,
    IndexOutOfBounds = 3,
    BadDimension = 4,
    NonCopyableValue = 5,
    ExecFailed = 6,
    HandleClosed = 7,
    NegativeArraySize = 8,
    QueueDeadlock = 9,
    MalformedEncoding = 10,
}

impl FaultCode {
    const ALL: [FaultCode; 10] = [
        FaultCode::NullReference,
        FaultCode::ArithmeticFault,
        FaultCode::IndexOutOfBounds,
        FaultCode::BadDimension,
        FaultCode::NonCopyableValue,
        FaultCode::ExecFailed,
        FaultCode::HandleClosed,
        FaultCode::NegativeArraySize,
        FaultCode::QueueDeadlock,
        FaultCode::MalformedEncoding,
    ];

    pub fn from_u16(v: u16) -> Option<FaultCode> {
        Self::ALL.iter().copied().find(|c| *c as u16 == v)
    }
}

impl fmt::Display for FaultCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EngineError {
    /// A fault raised while executing program code; `host` is where it happened.
    #[error("{code} on {host}: {message}")]
    RemoteException { code: FaultCode, host: String, message: String },
    #[error("host {0} is unreachable")]
    HostUnreachable(String),
    #[error("request to {0} timed out")]
    Timeout(String),
    #[error("access denied at the {} layer", match .0 { Layer::Host => "host", Layer::Object => "object" })]
    AccessDenied(Layer),
    #[error("access violation: {0}")]
    AccessViolation(String),
    #[error("queue is closed")]
    QueueClosed,
    #[error("unknown class: {0}")]
    UnknownClass(String),
    #[error("no main method found")]
    NoMainFound,
    #[error("package {0} not found at its origin")]
    PackNotFoundAtOrigin(String),
    #[error("content hash mismatch for package {0}")]
    HashMismatch(String),
    #[error("unknown event {0}")]
    UnknownEvent(u64),
    #[error("event slot {0} already filled")]
    SlotAlreadyFilled(u32),
    #[error("event slot {0} out of range")]
    SlotOutOfRange(u32),
    #[error("{} of the group members failed", .0.len())]
    PartialFailure(Vec<(String, EngineError)>),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("host name {0} is already in use")]
    NameCollision(String),
    #[error("connection refused: {0}")]
    ConnectRefused(String),
    #[error("handshake timed out")]
    HandshakeTimeout,
}

impl EngineError {
    pub fn fault(code: FaultCode, host: &str, message: impl Into<String>) -> EngineError {
        EngineError::RemoteException { code, host: host.to_string(), message: message.into() }
    }

    /// Stable short name, used in transcripts and exit diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            EngineError::RemoteException { .. } => "RemoteException",
            EngineError::HostUnreachable(_) => "HostUnreachable",
            EngineError::Timeout(_) => "Timeout",
            EngineError::AccessDenied(_) => "AccessDenied",
            EngineError::AccessViolation(_) => "AccessViolation",
            EngineError::QueueClosed => "QueueClosed",
            EngineError::UnknownClass(_) => "UnknownClass",
            EngineError::NoMainFound => "NoMainFound",
            EngineError::PackNotFoundAtOrigin(_) => "PackNotFoundAtOrigin",
            EngineError::HashMismatch(_) => "HashMismatch",
            EngineError::UnknownEvent(_) => "UnknownEvent",
            EngineError::SlotAlreadyFilled(_) => "SlotAlreadyFilled",
            EngineError::SlotOutOfRange(_) => "SlotOutOfRange",
            EngineError::PartialFailure(_) => "PartialFailure",
            EngineError::Protocol(_) => "Protocol",
            EngineError::NameCollision(_) => "NameCollision",
            EngineError::ConnectRefused(_) => "ConnectRefused",
            EngineError::HandshakeTimeout => "HandshakeTimeout",
        }
    }

    pub fn fault_code(&self) -> Option<FaultCode> {
        match self {
            EngineError::RemoteException { code, .. } => Some(*code),
            _ => None,
        }
    }

    pub fn encode(&self, w: &mut Writer) {
        match self {
            EngineError::RemoteException { code, host, message } => {
                w.u16(1).u16(*code as u16).str(host).str(message);
            }
            EngineError::HostUnreachable(h) => {
                w.u16(2).str(h);
            }
            EngineError::Timeout(h) => {
                w.u16(3).str(h);
            }
            EngineError::AccessDenied(l) => {
                w.u16(4).u8(matches!(l, Layer::Object) as u8);
            }
            EngineError::AccessViolation(m) => {
                w.u16(5).str(m);
            }
            EngineError::QueueClosed => {
                w.u16(6);
            }
            EngineError::UnknownClass(c) => {
                w.u16(7).str(c);
            }
            EngineError::NoMainFound => {
                w.u16(8);
            }
            EngineError::PackNotFoundAtOrigin(p) => {
                w.u16(9).str(p);
            }
            EngineError::HashMismatch(p) => {
                w.u16(10).str(p);
            }
            EngineError::UnknownEvent(e) => {
                w.u16(11).u64(*e);
            }
            EngineError::SlotAlreadyFilled(s) => {
                w.u16(12).u32(*s);
            }
            EngineError::SlotOutOfRange(s) => {
                w.u16(13).u32(*s);
            }
            EngineError::PartialFailure(list) => {
                w.u16(14).u32(list.len() as u32);
                for (h, e) in list {
                    w.str(h);
                    e.encode(w);
                }
            }
            EngineError::Protocol(m) => {
                w.u16(15).str(m);
            }
            EngineError::NameCollision(n) => {
                w.u16(16).str(n);
            }
            EngineError::ConnectRefused(m) => {
                w.u16(17).str(m);
            }
            EngineError::HandshakeTimeout => {
                w.u16(18);
            }
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.encode(&mut w);
        w.into_inner()
    }

    pub fn decode(r: &mut Reader) -> Result<EngineError, ReadError> {
        Self::decode_at(r, 0)
    }

    fn decode_at(r: &mut Reader, depth: u32) -> Result<EngineError, ReadError> {
        if depth > 8 {
            return Err(ReadError::Invalid("error nesting"));
        }
        Ok(match r.u16()? {
            1 => {
                let code = FaultCode::from_u16(r.u16()?).ok_or(ReadError::Invalid("fault code"))?;
                EngineError::RemoteException { code, host: r.str()?, message: r.str()? }
            }
            2 => EngineError::HostUnreachable(r.str()?),
            3 => EngineError::Timeout(r.str()?),
            4 => EngineError::AccessDenied(if r.bool()? { Layer::Object } else { Layer::Host }),
            5 => EngineError::AccessViolation(r.str()?),
            6 => EngineError::QueueClosed,
            7 => EngineError::UnknownClass(r.str()?),
            8 => EngineError::NoMainFound,
            9 => EngineError::PackNotFoundAtOrigin(r.str()?),
            10 => EngineError::HashMismatch(r.str()?),
            11 => EngineError::UnknownEvent(r.u64()?),
            12 => EngineError::SlotAlreadyFilled(r.u32()?),
            13 => EngineError::SlotOutOfRange(r.u32()?),
            14 => {
                let n = r.count(6)?;
                let mut list = Vec::with_capacity(n);
                for _ in 0..n {
                    let h = r.str()?;
                    list.push((h, Self::decode_at(r, depth + 1)?));
                }
                EngineError::PartialFailure(list)
            }
            15 => EngineError::Protocol(r.str()?),
            16 => EngineError::NameCollision(r.str()?),
            17 => EngineError::ConnectRefused(r.str()?),
            18 => EngineError::HandshakeTimeout,
            _ => return Err(ReadError::Invalid("error code")),
        })
    }

    pub fn from_bytes(b: &[u8]) -> Result<EngineError, ReadError> {
        EngineError::decode(&mut Reader::new(b))
    }
}

pub type EngineResult<T> = Result<T, EngineError>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_round_trip() {
        let samples = vec![
            EngineError::fault(FaultCode::NullReference, "b", "null"),
            EngineError::HostUnreachable("c".into()),
            EngineError::AccessDenied(Layer::Object),
            EngineError::PartialFailure(vec![("x".into(), EngineError::Timeout("x".into()))]),
            EngineError::HandshakeTimeout,
        ];
        for e in samples {
            assert_eq!(EngineError::from_bytes(&e.to_bytes()).unwrap(), e);
        }
    }

    #[test]
    fn fault_codes_are_stable() {
        assert_eq!(FaultCode::ArithmeticFault as u16, 2);
        assert_eq!(FaultCode::from_u16(10), Some(FaultCode::MalformedEncoding));
        assert_eq!(FaultCode::from_u16(0), None);
    }
}
