use std::io::{self, BufReader, BufWriter};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};

use crate::error::{Error, Result};
use crate::protocol::wire::{self, Envelope};

/// Request/response link to a peer. One outstanding request at a time.
pub trait Channel: Send {
    fn exchange(&mut self, request: &[u8]) -> Result<Vec<u8>>;
}

/// A party that answers framed payloads. Never panics on bad input; errors
/// come back as ABORT payloads.
pub trait Service: Send + Sync {
    fn handle(&self, request: &[u8]) -> Vec<u8>;
}

/// Opens new channels to a fixed peer.
pub trait Connector: Send + Sync {
    fn connect(&self) -> Result<Box<dyn Channel>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Link {
    ClientToY,
    ClientToX,
    YToX,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Request,
    Response,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranscriptFrame {
    pub link: Link,
    pub direction: Direction,
    /// Length prefix included.
    pub bytes: Vec<u8>,
}

impl TranscriptFrame {
    pub fn envelope(&self) -> Result<Envelope> {
        Envelope::decode(&self.bytes[4..])
    }
}

/// Every frame crossing the recorded links, in order.
#[derive(Debug, Clone, Default)]
pub struct Transcript(Arc<Mutex<Vec<TranscriptFrame>>>);

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, link: Link, direction: Direction, payload: &[u8]) {
        self.0.lock().unwrap().push(TranscriptFrame { link, direction, bytes: wire::frame(payload) });
    }

    pub fn frames(&self) -> Vec<TranscriptFrame> {
        self.0.lock().unwrap().clone()
    }

    /// All recorded bytes concatenated.
    pub fn bytes(&self) -> Vec<u8> {
        self.0.lock().unwrap().iter().flat_map(|f| f.bytes.iter().copied()).collect()
    }

    pub fn envelopes(&self) -> Result<Vec<(Link, Direction, Envelope)>> {
        self.frames().iter().map(|f| Ok((f.link, f.direction, f.envelope()?))).collect()
    }

    pub fn len(&self) -> usize {
        self.0.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clear(&self) {
        self.0.lock().unwrap().clear();
    }
}

/// In-process channel. Frames go through the same encode/split path as TCP.
pub struct LoopbackChannel {
    service: Arc<dyn Service>,
    link: Link,
    transcript: Option<Transcript>,
}

impl LoopbackChannel {
    pub fn new(service: Arc<dyn Service>, link: Link, transcript: Option<Transcript>) -> Self {
        Self { service, link, transcript }
    }
}

impl Channel for LoopbackChannel {
    fn exchange(&mut self, request: &[u8]) -> Result<Vec<u8>> {
        let framed = wire::frame(request);
        let payload = wire::split_frames(&framed)?[0];
        if let Some(t) = &self.transcript {
            t.record(self.link, Direction::Request, payload);
        }
        let response = self.service.handle(payload);
        if let Some(t) = &self.transcript {
            t.record(self.link, Direction::Response, &response);
        }
        Ok(response)
    }
}

pub struct LoopbackConnector {
    service: Arc<dyn Service>,
    link: Link,
    transcript: Option<Transcript>,
}

impl LoopbackConnector {
    pub fn new(service: Arc<dyn Service>, link: Link, transcript: Option<Transcript>) -> Self {
        Self { service, link, transcript }
    }
}

impl Connector for LoopbackConnector {
    fn connect(&self) -> Result<Box<dyn Channel>> {
        Ok(Box::new(LoopbackChannel::new(self.service.clone(), self.link, self.transcript.clone())))
    }
}

pub struct TcpChannel {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
    link: Link,
    transcript: Option<Transcript>,
}

impl TcpChannel {
    pub fn connect(addr: SocketAddr, link: Link, transcript: Option<Transcript>) -> Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(Self { reader: BufReader::new(stream.try_clone()?), writer: BufWriter::new(stream), link, transcript })
    }
}

impl Channel for TcpChannel {
    fn exchange(&mut self, request: &[u8]) -> Result<Vec<u8>> {
        if let Some(t) = &self.transcript {
            t.record(self.link, Direction::Request, request);
        }
        wire::write_frame(&mut self.writer, request)?;
        let response = wire::read_frame(&mut self.reader)?
            .ok_or_else(|| Error::Io(io::Error::new(io::ErrorKind::UnexpectedEof, "peer closed the connection")))?;
        if let Some(t) = &self.transcript {
            t.record(self.link, Direction::Response, &response);
        }
        Ok(response)
    }
}

pub struct TcpConnector {
    addr: SocketAddr,
    link: Link,
    transcript: Option<Transcript>,
}

impl TcpConnector {
    pub fn new(addr: SocketAddr, link: Link, transcript: Option<Transcript>) -> Self {
        Self { addr, link, transcript }
    }
}

impl Connector for TcpConnector {
    fn connect(&self) -> Result<Box<dyn Channel>> {
        Ok(Box::new(TcpChannel::connect(self.addr, self.link, self.transcript.clone())?))
    }
}

fn serve_connection(stream: TcpStream, service: Arc<dyn Service>) -> io::Result<()> {
    stream.set_nodelay(true)?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream);
    while let Some(request) = wire::read_frame(&mut reader)? {
        let response = service.handle(&request);
        wire::write_frame(&mut writer, &response)?;
    }
    Ok(())
}

/// Accepts connections forever, one thread each.
pub fn serve_tcp(listener: TcpListener, service: Arc<dyn Service>) -> io::Result<()> {
    for stream in listener.incoming() {
        let stream = stream?;
        let service = service.clone();
        thread::spawn(move || {
            let peer = stream.peer_addr().ok();
            if let Err(e) = serve_connection(stream, service) {
                log::debug!("connection {peer:?} ended: {e}");
            }
        });
    }
    Ok(())
}

/// Binds `addr` and serves in a background thread.
pub fn spawn_tcp_service(addr: &str, service: Arc<dyn Service>) -> Result<(SocketAddr, JoinHandle<()>)> {
    let listener = TcpListener::bind(addr)?;
    let local = listener.local_addr()?;
    let handle = thread::spawn(move || {
        if let Err(e) = serve_tcp(listener, service) {
            log::error!("listener on {local} failed: {e}");
        }
    });
    Ok((local, handle))
}
