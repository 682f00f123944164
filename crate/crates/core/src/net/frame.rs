//! Connection preamble and frame layout: u32 payload length, u8 kind, u64
//! correlation id, payload. All integers big-endian.

use std::fmt;

pub const PREAMBLE: [u8; 4] = *b"HLO1";
pub const HEADER_LEN: usize = 13;
/// Upper bound on a single frame payload; larger lengths are rejected as malformed.
pub const MAX_PAYLOAD: u32 = 64 * 1024 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum FrameKind {
    Hello = 0x01,
    HelloAck = 0x02,
    Invoke = 0x03,
    Reply = 0x04,
    Error = 0x05,
    FetchPack = 0x06,
    PackData = 0x07,
    EventPost = 0x08,
    Ping = 0x09,
    Pong = 0x0A,
    Gossip = 0x0B,
    Route = 0x0C,
}

impl FrameKind {
    pub const ALL: [FrameKind; 12] = [
        FrameKind::Hello,
        FrameKind::HelloAck,
        FrameKind::Invoke,
        FrameKind::Reply,
        FrameKind::Error,
        FrameKind::FetchPack,
        FrameKind::PackData,
        FrameKind::EventPost,
        FrameKind::Ping,
        FrameKind::Pong,
        FrameKind::Gossip,
        FrameKind::Route,
    ];

    pub fn from_u8(b: u8) -> Option<FrameKind> {
        FrameKind::ALL.iter().copied().find(|k| *k as u8 == b)
    }

    pub fn name(self) -> &'static str {
        match self {
            FrameKind::Hello => "HELLO",
            FrameKind::HelloAck => "HELLO_ACK",
            FrameKind::Invoke => "INVOKE",
            FrameKind::Reply => "REPLY",
            FrameKind::Error => "ERROR",
            FrameKind::FetchPack => "FETCH_PACK",
            FrameKind::PackData => "PACK_DATA",
            FrameKind::EventPost => "EVENT_POST",
            FrameKind::Ping => "PING",
            FrameKind::Pong => "PONG",
            FrameKind::Gossip => "GOSSIP",
            FrameKind::Route => "ROUTE",
        }
    }
}

impl fmt::Display for FrameKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub kind: FrameKind,
    pub corr: u64,
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum FrameError {
    #[error("unknown frame kind 0x{0:02x}")]
    UnknownKind(u8),
    #[error("frame payload length {0} exceeds the limit")]
    TooLarge(u32),
    #[error("bad connection preamble")]
    BadPreamble,
}

impl Frame {
    pub fn new(kind: FrameKind, corr: u64, payload: Vec<u8>) -> Frame {
        Frame { kind, corr, payload }
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.payload.len()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        self.encode_into(&mut out);
        out
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&(self.payload.len() as u32).to_be_bytes());
        out.push(self.kind as u8);
        out.extend_from_slice(&self.corr.to_be_bytes());
        out.extend_from_slice(&self.payload);
    }

    /// Decodes one frame from the front of `buf`. `Ok(None)` means more bytes are needed.
    pub fn decode(buf: &[u8]) -> Result<Option<(Frame, usize)>, FrameError> {
        if buf.len() < HEADER_LEN {
            // The kind byte can be rejected early.
            if buf.len() >= 5 && FrameKind::from_u8(buf[4]).is_none() {
                return Err(FrameError::UnknownKind(buf[4]));
            }
            return Ok(None);
        }
        let len = u32::from_be_bytes(buf[0..4].try_into().expect("4 bytes"));
        let kind = FrameKind::from_u8(buf[4]).ok_or(FrameError::UnknownKind(buf[4]))?;
        if len > MAX_PAYLOAD {
            return Err(FrameError::TooLarge(len));
        }
        let corr = u64::from_be_bytes(buf[5..13].try_into().expect("8 bytes"));
        let total = HEADER_LEN + len as usize;
        if buf.len() < total {
            return Ok(None);
        }
        Ok(Some((Frame { kind, corr, payload: buf[HEADER_LEN..total].to_vec() }, total)))
    }
}

/// Incremental decoder for a byte stream: preamble first, then frames.
#[derive(Debug, Default)]
pub struct FrameDecoder {
    buf: Vec<u8>,
    preamble_seen: bool,
    expect_preamble: bool,
}

impl FrameDecoder {
    pub fn new(expect_preamble: bool) -> Self {
        FrameDecoder { buf: Vec::new(), preamble_seen: !expect_preamble, expect_preamble }
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    pub fn next_frame(&mut self) -> Result<Option<Frame>, FrameError> {
        if !self.preamble_seen {
            let n = self.buf.len().min(4);
            if self.buf[..n] != PREAMBLE[..n] {
                return Err(FrameError::BadPreamble);
            }
            if n < 4 {
                return Ok(None);
            }
            self.buf.drain(..4);
            self.preamble_seen = true;
        }
        match Frame::decode(&self.buf)? {
            Some((f, used)) => {
                self.buf.drain(..used);
                Ok(Some(f))
            }
            None => Ok(None),
        }
    }

    pub fn expects_preamble(&self) -> bool {
        self.expect_preamble
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn layout_is_bit_exact() {
        let f = Frame::new(FrameKind::Ping, 0x0102030405060708, vec![0xaa]);
        assert_eq!(f.encode(), vec![0, 0, 0, 1, 0x09, 1, 2, 3, 4, 5, 6, 7, 8, 0xaa]);
        assert_eq!(PREAMBLE, [0x48, 0x4C, 0x4F, 0x31]);
    }

    #[test]
    fn unknown_kind_is_rejected() {
        let mut b = Frame::new(FrameKind::Pong, 1, vec![]).encode();
        b[4] = 0x0D;
        assert_eq!(Frame::decode(&b), Err(FrameError::UnknownKind(0x0D)));
        b[4] = 0;
        assert_eq!(Frame::decode(&b), Err(FrameError::UnknownKind(0)));
    }

    #[test]
    fn stream_decoder_handles_split_input() {
        let mut bytes = PREAMBLE.to_vec();
        Frame::new(FrameKind::Gossip, 7, b"abc".to_vec()).encode_into(&mut bytes);
        Frame::new(FrameKind::Pong, 8, vec![]).encode_into(&mut bytes);
        let mut d = FrameDecoder::new(true);
        let mut out = Vec::new();
        for b in bytes {
            d.push(&[b]);
            while let Some(f) = d.next_frame().unwrap() {
                out.push(f);
            }
        }
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].payload, b"abc");
        assert_eq!(out[1].corr, 8);
    }

    #[test]
    fn bad_preamble() {
        let mut d = FrameDecoder::new(true);
        d.push(b"HLX");
        assert_eq!(d.next_frame(), Err(FrameError::BadPreamble));
    }

    proptest! {
        #[test]
        fn decoder_is_total(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
            let _ = Frame::decode(&bytes);
            let mut d = FrameDecoder::new(true);
            d.push(&bytes);
            while let Ok(Some(_)) = d.next_frame() {}
        }

        #[test]
        fn round_trip(kind in 0usize..12, corr in any::<u64>(), payload in proptest::collection::vec(any::<u8>(), 0..64)) {
            let f = Frame::new(FrameKind::ALL[kind], corr, payload);
            let b = f.encode();
            let (g, used) = Frame::decode(&b).unwrap().unwrap();
            prop_assert_eq!(used, b.len());
            prop_assert_eq!(g, f);
        }
    }
}
