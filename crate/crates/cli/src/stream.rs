//! Links over byte streams such as TCP sockets.
//!
//! Frames carry their own length, so a stream needs no extra framing. A
//! reader thread splits incoming bytes into frames and hands them over a
//! channel; the [`Link`] side never blocks except in [`StreamLink::wait_frame`].

use std::collections::VecDeque;
use std::io::{Read, Write};
use std::net::{Shutdown, TcpStream};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, TryRecvError};
use std::thread;
use std::time::{Duration, Instant};

use mcl_core::client::Conduit;
use mcl_core::frame::{frame_len, MAGIC};
use mcl_core::link::{Link, LinkError, LinkState, Millis};
use mcl_core::transport::TransportError;

/// Larger announced lengths are treated as garbage.
pub const MAX_STREAM_FRAME: usize = 64 << 20;

/// Incremental splitter for a stream of concatenated frames. Bytes that
/// cannot start a frame are skipped up to the next magic sequence; the
/// decoder reports everything else.
#[derive(Debug, Default)]
pub struct FrameSplitter {
    buf: Vec<u8>,
    skipped: usize,
}

impl FrameSplitter {
    pub fn new() -> Self {
        FrameSplitter::default()
    }

    /// Bytes discarded while resynchronising.
    pub fn skipped(&self) -> usize {
        self.skipped
    }

    pub fn push(&mut self, bytes: &[u8]) -> Vec<Vec<u8>> {
        self.buf.extend_from_slice(bytes);
        let mut out = Vec::new();
        loop {
            let start = self
                .buf
                .windows(MAGIC.len())
                .position(|w| w == MAGIC)
                .unwrap_or(self.buf.len().saturating_sub(MAGIC.len() - 1));
            if start > 0 {
                self.skipped += start;
                self.buf.drain(..start);
            }
            match frame_len(&self.buf) {
                Some(n) if n > MAX_STREAM_FRAME => {
                    self.skipped += 1;
                    self.buf.drain(..1);
                }
                Some(n) if self.buf.len() >= n => out.push(self.buf.drain(..n).collect()),
                _ => return out,
            }
        }
    }
}

enum Incoming {
    Frame(Vec<u8>),
    Closed,
}

/// A [`Link`] over a byte stream. It reports itself up even after the peer
/// goes away: a closed stream will not come back, so callers get `Closed`
/// errors instead of buffering.
pub struct StreamLink {
    writer: Box<dyn Write + Send>,
    rx: Receiver<Incoming>,
    pending: VecDeque<Vec<u8>>,
    closed: bool,
    socket: Option<TcpStream>,
}

impl StreamLink {
    pub fn new<R, W>(mut reader: R, writer: W) -> Self
    where
        R: Read + Send + 'static,
        W: Write + Send + 'static,
    {
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let mut splitter = FrameSplitter::new();
            let mut buf = vec![0u8; 64 * 1024];
            loop {
                match reader.read(&mut buf) {
                    Ok(0) | Err(_) => break,
                    Ok(n) => {
                        for f in splitter.push(&buf[..n]) {
                            if tx.send(Incoming::Frame(f)).is_err() {
                                return;
                            }
                        }
                    }
                }
            }
            let _ = tx.send(Incoming::Closed);
        });
        StreamLink {
            writer: Box::new(writer),
            rx,
            pending: VecDeque::new(),
            closed: false,
            socket: None,
        }
    }

    pub fn tcp(stream: TcpStream) -> std::io::Result<Self> {
        stream.set_nodelay(true)?;
        let reader = stream.try_clone()?;
        let handle = stream.try_clone()?;
        let mut link = StreamLink::new(reader, stream);
        link.socket = Some(handle);
        Ok(link)
    }

    pub fn is_closed(&self) -> bool {
        self.closed && self.pending.is_empty()
    }

    fn accept(&mut self, msg: Incoming) {
        match msg {
            Incoming::Frame(f) => self.pending.push_back(f),
            Incoming::Closed => self.closed = true,
        }
    }

    /// Blocks until a frame arrives, the peer closes, or `timeout` passes.
    pub fn wait_frame(&mut self, timeout: Duration) {
        if !self.pending.is_empty() || self.closed {
            return;
        }
        match self.rx.recv_timeout(timeout) {
            Ok(msg) => self.accept(msg),
            Err(RecvTimeoutError::Timeout) => {}
            Err(RecvTimeoutError::Disconnected) => self.closed = true,
        }
    }
}

impl Drop for StreamLink {
    fn drop(&mut self) {
        // The reader thread holds its own handle; shut down so the peer sees EOF.
        if let Some(s) = &self.socket {
            let _ = s.shutdown(Shutdown::Both);
        }
    }
}

impl Link for StreamLink {
    fn state(&self, _now: Millis) -> LinkState {
        LinkState::Up
    }

    fn send(&mut self, frame: &[u8], _now: Millis) -> Result<(), LinkError> {
        if self.closed {
            return Err(LinkError::Closed);
        }
        self.writer
            .write_all(frame)
            .and_then(|()| self.writer.flush())
            .map_err(|e| LinkError::Io(e.to_string()))
    }

    fn recv(&mut self, _now: Millis) -> Result<Vec<Vec<u8>>, LinkError> {
        loop {
            match self.rx.try_recv() {
                Ok(msg) => self.accept(msg),
                Err(TryRecvError::Empty) => break,
                Err(TryRecvError::Disconnected) => {
                    self.closed = true;
                    break;
                }
            }
        }
        if self.pending.is_empty() && self.closed {
            return Err(LinkError::Closed);
        }
        Ok(self.pending.drain(..).collect())
    }

    fn next_event(&self, _now: Millis) -> Option<Millis> {
        None
    }
}

/// Milliseconds since `start` on the wall clock.
pub fn elapsed_ms(start: Instant) -> Millis {
    start.elapsed().as_millis() as Millis
}

/// Client conduit over a real socket.
pub struct StreamConduit {
    link: StreamLink,
    start: Instant,
}

impl StreamConduit {
    pub fn new(link: StreamLink) -> Self {
        StreamConduit {
            link,
            start: Instant::now(),
        }
    }

    pub fn connect(addr: &str) -> std::io::Result<Self> {
        Ok(StreamConduit::new(StreamLink::tcp(TcpStream::connect(
            addr,
        )?)?))
    }
}

impl Conduit for StreamConduit {
    fn now(&self) -> Millis {
        elapsed_ms(self.start)
    }

    fn link(&mut self) -> &mut dyn Link {
        &mut self.link
    }

    fn wait(&mut self, deadline: Millis) -> Result<(), TransportError> {
        let now = self.now();
        if deadline > now {
            self.link.wait_frame(Duration::from_millis(deadline - now));
        }
        Ok(())
    }
}
