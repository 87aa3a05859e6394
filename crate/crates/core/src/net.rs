//! TCP transport for the wire frames.

use std::io::{BufReader, BufWriter, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::pir::{Channel, Frame, FrameKind};
use crate::protocol::Server;

/// Called after every request that may have changed the server state.
pub type WriteHook = Arc<dyn Fn(&Server) + Send + Sync>;

fn mutates(kind: FrameKind) -> bool {
    matches!(
        kind,
        FrameKind::SendInit | FrameKind::SendPayload | FrameKind::UpdateDirect | FrameKind::UpdateRewrite
    )
}

/// Answers frames from one connection until the peer hangs up.
pub fn serve_connection(server: &Server, stream: TcpStream, on_write: Option<&WriteHook>) -> Result<()> {
    stream.set_nodelay(true)?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream);
    let mut session = server.session();
    while let Some(request) = Frame::read_from(&mut reader)? {
        let kind = request.kind;
        let resp = server.handle(&mut session, request);
        if mutates(kind) && resp.kind != FrameKind::Err {
            if let Some(hook) = on_write {
                hook(server);
            }
        }
        resp.write_to(&mut writer)?;
        writer.flush()?;
    }
    Ok(())
}

/// Accepts connections forever, one thread each. Reads proceed in parallel;
/// the server serializes writes.
pub fn serve(listener: TcpListener, server: Arc<Server>, on_write: Option<WriteHook>) -> Result<()> {
    for stream in listener.incoming() {
        let stream = stream?;
        let server = Arc::clone(&server);
        let hook = on_write.clone();
        std::thread::spawn(move || {
            if let Err(e) = serve_connection(&server, stream, hook.as_ref()) {
                eprintln!("connection closed: {e}");
            }
        });
    }
    Ok(())
}

/// Client end of a TCP connection.
#[derive(Debug)]
pub struct TcpChannel {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
}

impl TcpChannel {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self> {
        let stream = TcpStream::connect(addr).map_err(|e| Error::Transport(format!("connect: {e}")))?;
        stream.set_nodelay(true)?;
        Ok(Self {
            reader: BufReader::new(stream.try_clone()?),
            writer: BufWriter::new(stream),
        })
    }
}

impl Channel for TcpChannel {
    fn exchange(&mut self, request: Frame) -> Result<Frame> {
        request.write_to(&mut self.writer)?;
        self.writer.flush()?;
        Frame::read_from(&mut self.reader)?.ok_or_else(|| Error::Transport("server closed the connection".into()))
    }
}
