//! Message transports: in-process loopback and length-prefixed TCP.

use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use thiserror::Error;

use super::server::{handle_bytes, ServerState};
use super::wire::{self, WireError};
use crate::field::Field;

const MAX_FRAME: u32 = 1 << 30;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("frame of {0} bytes exceeds the limit")]
    FrameTooLarge(u32),
    #[error("server rejected message: {0}")]
    Wire(#[from] WireError),
    #[error("endpoint unavailable")]
    Unavailable,
}

/// A server reachable with one request/response exchange per call.
pub trait Endpoint: Send + Sync {
    fn call(&self, request: &[u8]) -> Result<Vec<u8>, TransportError>;
    fn describe(&self) -> String;
}

pub struct Loopback {
    state: Arc<ServerState>,
}

impl Loopback {
    pub fn new(state: Arc<ServerState>) -> Self {
        Loopback { state }
    }

    pub fn state(&self) -> &Arc<ServerState> {
        &self.state
    }
}

impl Endpoint for Loopback {
    fn call(&self, request: &[u8]) -> Result<Vec<u8>, TransportError> {
        Ok(handle_bytes(&self.state, request)?)
    }

    fn describe(&self) -> String {
        format!("loopback x={}", self.state.field().to_biguint(self.state.coord()))
    }
}

pub fn write_frame<W: Write>(w: &mut W, payload: &[u8]) -> Result<(), TransportError> {
    let len = u32::try_from(payload.len()).map_err(|_| TransportError::FrameTooLarge(u32::MAX))?;
    if len > MAX_FRAME {
        return Err(TransportError::FrameTooLarge(len));
    }
    w.write_all(&len.to_be_bytes())?;
    w.write_all(payload)?;
    w.flush()?;
    Ok(())
}

/// `Ok(None)` on a clean end of stream.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<Vec<u8>>, TransportError> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let len = u32::from_be_bytes(len);
    if len > MAX_FRAME {
        return Err(TransportError::FrameTooLarge(len));
    }
    let mut buf = vec![0u8; len as usize];
    r.read_exact(&mut buf)?;
    Ok(Some(buf))
}

pub struct TcpEndpoint {
    addr: SocketAddr,
    timeout: Duration,
}

impl TcpEndpoint {
    pub fn new<A: ToSocketAddrs>(addr: A) -> io::Result<Self> {
        let addr = addr
            .to_socket_addrs()?
            .next()
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "no address"))?;
        Ok(TcpEndpoint {
            addr,
            timeout: Duration::from_secs(30),
        })
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }
}

impl Endpoint for TcpEndpoint {
    fn call(&self, request: &[u8]) -> Result<Vec<u8>, TransportError> {
        let mut stream = TcpStream::connect_timeout(&self.addr, self.timeout)?;
        stream.set_read_timeout(Some(self.timeout))?;
        stream.set_nodelay(true)?;
        write_frame(&mut stream, request)?;
        read_frame(&mut stream)?.ok_or(TransportError::Unavailable)
    }

    fn describe(&self) -> String {
        format!("tcp {}", self.addr)
    }
}

fn serve_connection(state: &ServerState, mut stream: TcpStream) {
    let _ = stream.set_nodelay(true);
    while let Ok(Some(frame)) = read_frame(&mut stream) {
        let Ok(reply) = handle_bytes(state, &frame) else {
            return;
        };
        if write_frame(&mut stream, &reply).is_err() {
            return;
        }
    }
}

/// Accept loop with one worker thread per connection.
pub struct TcpServer {
    addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl TcpServer {
    pub fn spawn<A: ToSocketAddrs>(state: Arc<ServerState>, bind: A) -> io::Result<Self> {
        let listener = TcpListener::bind(bind)?;
        let addr = listener.local_addr()?;
        let shutdown = Arc::new(AtomicBool::new(false));
        let stop = shutdown.clone();
        let handle = std::thread::spawn(move || {
            for stream in listener.incoming() {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                if let Ok(stream) = stream {
                    let state = state.clone();
                    std::thread::spawn(move || serve_connection(&state, stream));
                }
            }
        });
        Ok(TcpServer {
            addr,
            shutdown,
            handle: Some(handle),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Blocks until the accept loop exits (i.e. forever unless shut down elsewhere).
    pub fn join(mut self) {
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for TcpServer {
    fn drop(&mut self) {
        if self.handle.is_some() {
            self.stop();
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Never answers.
    Down,
    /// Adds one to the given payload word of every ok response.
    TamperWord(usize),
}

/// Wraps an endpoint to simulate a crashed or misbehaving server.
pub struct Faulty {
    inner: Box<dyn Endpoint>,
    field: Field,
    fault: Fault,
}

impl Faulty {
    pub fn new(inner: Box<dyn Endpoint>, field: Field, fault: Fault) -> Self {
        Faulty { inner, field, fault }
    }
}

impl Endpoint for Faulty {
    fn call(&self, request: &[u8]) -> Result<Vec<u8>, TransportError> {
        match self.fault {
            Fault::Down => Err(TransportError::Unavailable),
            Fault::TamperWord(word) => {
                let bytes = self.inner.call(request)?;
                let mut resp = wire::decode_response(&self.field, &bytes)?;
                if let Some(v) = resp.payload.get_mut(word) {
                    *v = self.field.add(v, &self.field.one());
                }
                Ok(wire::encode_response(&self.field, &resp))
            }
        }
    }

    fn describe(&self) -> String {
        format!("{} ({:?})", self.inner.describe(), self.fault)
    }
}
