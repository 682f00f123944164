//! Wire protocol: framing, value marshaling, message payloads, routing, and transports.

pub mod codec;
pub mod frame;
pub mod msg;
pub mod routing;
pub mod tcp;

pub use frame::{Frame, FrameDecoder, FrameError, FrameKind, PREAMBLE};
pub use routing::PathTable;

/// One direction of a connection as seen by an engine.
///
/// `note` is a short human-readable description of the frame, recorded by the
/// simulated transport and ignored by TCP.
pub trait Link {
    fn send(&self, frame: &Frame, note: &str);
    fn close(&self);
}
