use super::wire::Frame;
use crate::error::Result;

/// A request/response link to a server.
pub trait Channel {
    fn exchange(&mut self, request: Frame) -> Result<Frame>;
}

impl<C: Channel + ?Sized> Channel for &mut C {
    fn exchange(&mut self, request: Frame) -> Result<Frame> {
        (**self).exchange(request)
    }
}

impl<C: Channel + ?Sized> Channel for Box<C> {
    fn exchange(&mut self, request: Frame) -> Result<Frame> {
        (**self).exchange(request)
    }
}

/// Adapts a closure into a [`Channel`].
pub struct FnChannel<F>(pub F);

impl<F: FnMut(Frame) -> Result<Frame>> Channel for FnChannel<F> {
    fn exchange(&mut self, request: Frame) -> Result<Frame> {
        (self.0)(request)
    }
}

/// Counts frames and bytes crossing a channel.
#[derive(Debug)]
pub struct Metered<C> {
    inner: C,
    pub requests: u64,
    pub bytes_up: u64,
    pub bytes_down: u64,
}

impl<C> Metered<C> {
    pub fn new(inner: C) -> Self {
        Self {
            inner,
            requests: 0,
            bytes_up: 0,
            bytes_down: 0,
        }
    }

    pub fn into_inner(self) -> C {
        self.inner
    }
}

impl<C: Channel> Channel for Metered<C> {
    fn exchange(&mut self, request: Frame) -> Result<Frame> {
        self.requests += 1;
        self.bytes_up += request.encoded_len() as u64;
        let resp = self.inner.exchange(request)?;
        self.bytes_down += resp.encoded_len() as u64;
        Ok(resp)
    }
}
