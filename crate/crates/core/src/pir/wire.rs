//! Length-prefixed frames: a type byte, a big-endian `u32` length, then the
//! payload.

use std::io::{Read, Write};

use crate::error::{Error, Result};

/// Largest payload a peer will accept.
pub const MAX_PAYLOAD: usize = 1 << 30;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum FrameKind {
    QueryDirect = 0x01,
    QueryBatch = 0x02,
    UpdateDirect = 0x03,
    UpdateRewrite = 0x04,
    RespBucket = 0x05,
    RespStore = 0x06,
    Ack = 0x07,
    Err = 0x08,
    SendInit = 0x10,
    SendId = 0x11,
    SendPayload = 0x12,
    SendIndex = 0x13,
    RetrieveBegin = 0x14,
    RerandPub = 0x15,
    Hello = 0x20,
    RecordFetch = 0x21,
    Record = 0x22,
}

impl FrameKind {
    pub fn from_byte(b: u8) -> Result<Self> {
        use FrameKind as K;
        Ok(match b {
            0x01 => K::QueryDirect,
            0x02 => K::QueryBatch,
            0x03 => K::UpdateDirect,
            0x04 => K::UpdateRewrite,
            0x05 => K::RespBucket,
            0x06 => K::RespStore,
            0x07 => K::Ack,
            0x08 => K::Err,
            0x10 => K::SendInit,
            0x11 => K::SendId,
            0x12 => K::SendPayload,
            0x13 => K::SendIndex,
            0x14 => K::RetrieveBegin,
            0x15 => K::RerandPub,
            0x20 => K::Hello,
            0x21 => K::RecordFetch,
            0x22 => K::Record,
            _ => return Err(Error::Transport(format!("unknown frame type 0x{b:02x}"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub kind: FrameKind,
    pub payload: Vec<u8>,
}

/// Error codes carried by [`FrameKind::Err`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum ErrCode {
    Protocol = 1,
    Overflow = 2,
    UnknownIdentifier = 3,
    Stale = 4,
}

impl Frame {
    pub fn new(kind: FrameKind, payload: Vec<u8>) -> Self {
        Self { kind, payload }
    }

    pub fn empty(kind: FrameKind) -> Self {
        Self::new(kind, Vec::new())
    }

    pub fn ack() -> Self {
        Self::empty(FrameKind::Ack)
    }

    /// ERR payload: code, a `u64` argument, then a UTF-8 message.
    pub fn error(code: ErrCode, arg: u64, msg: &str) -> Self {
        let mut p = vec![code as u8];
        p.extend_from_slice(&arg.to_be_bytes());
        p.extend_from_slice(msg.as_bytes());
        Self::new(FrameKind::Err, p)
    }

    /// The library error an ERR frame stands for.
    pub fn to_error(&self) -> Error {
        if self.payload.len() < 9 {
            return Error::Protocol("malformed error frame".into());
        }
        let arg = u64::from_be_bytes(self.payload[1..9].try_into().unwrap());
        let msg = String::from_utf8_lossy(&self.payload[9..]).into_owned();
        match self.payload[0] {
            2 => Error::Overflow { bucket: arg as usize },
            3 => Error::UnknownIdentifier(arg),
            _ => Error::Protocol(msg),
        }
    }

    /// Fails unless the frame has the expected kind, turning ERR frames into
    /// their error.
    pub fn expect(self, kind: FrameKind) -> Result<Self> {
        if self.kind == kind {
            Ok(self)
        } else if self.kind == FrameKind::Err {
            Err(self.to_error())
        } else {
            Err(Error::Protocol(format!("expected {kind:?}, got {:?}", self.kind)))
        }
    }

    pub fn encoded_len(&self) -> usize {
        5 + self.payload.len()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.push(self.kind as u8);
        out.extend_from_slice(&(self.payload.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    /// Parses exactly one frame occupying all of `bytes`.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 5 {
            return Err(Error::Transport("truncated frame header".into()));
        }
        let kind = FrameKind::from_byte(bytes[0])?;
        let len = u32::from_be_bytes(bytes[1..5].try_into().unwrap()) as usize;
        if bytes.len() != 5 + len {
            return Err(Error::Transport(format!(
                "frame declares {len} payload bytes, {} present",
                bytes.len() - 5
            )));
        }
        Ok(Self::new(kind, bytes[5..].to_vec()))
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(&self.encode())?;
        w.flush()?;
        Ok(())
    }

    /// Reads one frame; `Ok(None)` on a clean end of stream.
    pub fn read_from<R: Read>(r: &mut R) -> Result<Option<Self>> {
        let mut head = [0u8; 5];
        let mut got = 0;
        while got < head.len() {
            match r.read(&mut head[got..])? {
                0 if got == 0 => return Ok(None),
                0 => return Err(Error::Transport("truncated frame header".into())),
                n => got += n,
            }
        }
        let kind = FrameKind::from_byte(head[0])?;
        let len = u32::from_be_bytes(head[1..5].try_into().unwrap()) as usize;
        if len > MAX_PAYLOAD {
            return Err(Error::Transport(format!("frame of {len} bytes exceeds limit")));
        }
        let mut payload = vec![0u8; len];
        r.read_exact(&mut payload)
            .map_err(|_| Error::Transport("truncated frame payload".into()))?;
        Ok(Some(Self::new(kind, payload)))
    }
}

/// Cursor over a payload with big-endian integer accessors.
pub struct PayloadReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> PayloadReader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::format("payload too short"))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_be_bytes(self.bytes(2)?.try_into().unwrap()))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_be_bytes(self.bytes(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_be_bytes(self.bytes(8)?.try_into().unwrap()))
    }

    /// A `u32` length followed by that many bytes.
    pub fn var_bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.u32()? as usize;
        self.bytes(n)
    }

    pub fn rest(&mut self) -> &'a [u8] {
        let out = &self.buf[self.pos..];
        self.pos = self.buf.len();
        out
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    /// Fails if unread bytes remain.
    pub fn finish(self) -> Result<()> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(Error::format(format!("{} trailing bytes", self.buf.len() - self.pos)))
        }
    }
}

pub(crate) fn put_var_bytes(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
    out.extend_from_slice(bytes);
}
