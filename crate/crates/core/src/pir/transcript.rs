use super::channel::Channel;
use super::wire::{put_var_bytes, Frame, PayloadReader};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    ToServer,
    ToClient,
}

/// Every frame exchanged during one operation, byte for byte.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Transcript {
    entries: Vec<(Direction, Vec<u8>)>,
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, dir: Direction, frame: &Frame) {
        self.entries.push((dir, frame.encode()));
    }

    pub fn entries(&self) -> &[(Direction, Vec<u8>)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Direction, frame type and length of each message.
    pub fn shape(&self) -> Vec<(Direction, u8, usize)> {
        self.entries.iter().map(|(d, b)| (*d, b[0], b.len())).collect()
    }

    pub fn total_bytes(&self) -> usize {
        self.entries.iter().map(|(_, b)| b.len()).sum()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = (self.entries.len() as u32).to_be_bytes().to_vec();
        for (d, b) in &self.entries {
            out.push(match d {
                Direction::ToServer => 0,
                Direction::ToClient => 1,
            });
            put_var_bytes(&mut out, b);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = PayloadReader::new(bytes);
        let n = r.u32()?;
        let mut entries = Vec::new();
        for _ in 0..n {
            let d = match r.u8()? {
                0 => Direction::ToServer,
                1 => Direction::ToClient,
                x => return Err(Error::format(format!("bad direction byte {x}"))),
            };
            let b = r.var_bytes()?.to_vec();
            Frame::decode(&b)?;
            entries.push((d, b));
        }
        r.finish()?;
        Ok(Self { entries })
    }

    /// A channel answering with the recorded responses, provided the client
    /// repeats the recorded requests exactly.
    pub fn replay(&self) -> Replay<'_> {
        Replay { transcript: self, pos: 0 }
    }
}

/// Wraps a channel and records everything that crosses it.
pub struct Recording<C> {
    inner: C,
    transcript: Transcript,
}

impl<C: Channel> Recording<C> {
    pub fn new(inner: C) -> Self {
        Self {
            inner,
            transcript: Transcript::new(),
        }
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn into_parts(self) -> (C, Transcript) {
        (self.inner, self.transcript)
    }
}

impl<C: Channel> Channel for Recording<C> {
    fn exchange(&mut self, request: Frame) -> Result<Frame> {
        self.transcript.push(Direction::ToServer, &request);
        let resp = self.inner.exchange(request)?;
        self.transcript.push(Direction::ToClient, &resp);
        Ok(resp)
    }
}

pub struct Replay<'a> {
    transcript: &'a Transcript,
    pos: usize,
}

impl Channel for Replay<'_> {
    fn exchange(&mut self, request: Frame) -> Result<Frame> {
        let e = self.transcript.entries();
        match (e.get(self.pos), e.get(self.pos + 1)) {
            (Some((Direction::ToServer, req)), Some((Direction::ToClient, resp))) => {
                if *req != request.encode() {
                    return Err(Error::Transport(format!("request {} diverges from transcript", self.pos / 2)));
                }
                self.pos += 2;
                Frame::decode(resp)
            }
            _ => Err(Error::Transport("transcript exhausted".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pir::FrameKind;

    #[test]
    fn record_serialize_replay() {
        let echo = |f: Frame| -> Result<Frame> { Ok(Frame::new(FrameKind::Ack, f.payload)) };
        let mut rec = Recording::new(crate::pir::FnChannel(echo));
        rec.exchange(Frame::new(FrameKind::QueryDirect, vec![0, 0, 0, 1])).unwrap();
        rec.exchange(Frame::empty(FrameKind::QueryBatch)).unwrap();
        let t = rec.transcript().clone();
        assert_eq!(t.len(), 4);
        assert_eq!(
            t.shape(),
            vec![
                (Direction::ToServer, 0x01, 9),
                (Direction::ToClient, 0x07, 9),
                (Direction::ToServer, 0x02, 5),
                (Direction::ToClient, 0x07, 5),
            ]
        );
        let back = Transcript::from_bytes(&t.to_bytes()).unwrap();
        assert_eq!(back, t);

        let mut replay = back.replay();
        let r = replay.exchange(Frame::new(FrameKind::QueryDirect, vec![0, 0, 0, 1])).unwrap();
        assert_eq!(r.payload, vec![0, 0, 0, 1]);
        assert!(replay.exchange(Frame::empty(FrameKind::Ack)).is_err());
    }
}
