//! Line-protocol network source: one TCP producer, one JSON object per line,
//! `{"t":<seconds>,"uv":<microvolts>}`.
//!
//! Unparseable lines are skipped and counted. A timestamp that does not
//! advance ends the stream with an error. Closing the connection ends the
//! stream cleanly.

use std::io::{BufRead, BufReader, ErrorKind};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::Deserialize;

use super::{sample_is_sane, IngestError, MonotoneGuard};
use crate::signal::Sample;

const POLL: Duration = Duration::from_millis(50);

#[derive(Deserialize)]
struct WireSample {
    t: f64,
    uv: f64,
}

#[derive(Debug)]
pub struct NetworkListener {
    listener: TcpListener,
    addr: SocketAddr,
}

impl NetworkListener {
    pub fn bind(address: impl ToSocketAddrs + std::fmt::Display) -> Result<Self, IngestError> {
        let display = address.to_string();
        let listener = TcpListener::bind(address).map_err(|e| IngestError::io(&display, e))?;
        let addr = listener
            .local_addr()
            .map_err(|e| IngestError::io(&display, e))?;
        Ok(Self { listener, addr })
    }

    /// The bound address (useful after binding port 0).
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Waits for the single producer. With a cancel flag the wait polls and
    /// gives up with [`IngestError::Cancelled`] once the flag is set.
    pub fn accept(self, cancel: Option<Arc<AtomicBool>>) -> Result<NetworkSource, IngestError> {
        let display = self.addr.to_string();
        let io = |e| IngestError::io(&display, e);
        let stream = match &cancel {
            None => self.listener.accept().map_err(io)?.0,
            Some(flag) => {
                self.listener.set_nonblocking(true).map_err(io)?;
                loop {
                    if flag.load(Ordering::Relaxed) {
                        return Err(IngestError::Cancelled);
                    }
                    match self.listener.accept() {
                        Ok((s, _)) => break s,
                        Err(e) if e.kind() == ErrorKind::WouldBlock => std::thread::sleep(POLL),
                        Err(e) => return Err(io(e)),
                    }
                }
            }
        };
        stream.set_nonblocking(false).map_err(io)?;
        if cancel.is_some() {
            stream.set_read_timeout(Some(POLL)).map_err(io)?;
        }
        Ok(NetworkSource {
            peer: display,
            reader: BufReader::new(stream),
            buf: Vec::new(),
            line: 0,
            guard: MonotoneGuard::default(),
            skipped: Arc::new(AtomicU64::new(0)),
            cancel,
            done: false,
        })
    }
}

/// Binds `address` and blocks until one producer connects.
pub fn listen(address: &str) -> Result<NetworkSource, IngestError> {
    NetworkListener::bind(address)?.accept(None)
}

pub struct NetworkSource {
    peer: String,
    reader: BufReader<TcpStream>,
    buf: Vec<u8>,
    line: usize,
    guard: MonotoneGuard,
    skipped: Arc<AtomicU64>,
    cancel: Option<Arc<AtomicBool>>,
    done: bool,
}

impl NetworkSource {
    /// Shared counter of skipped lines; stays valid after the source is dropped.
    pub fn skip_counter(&self) -> Arc<AtomicU64> {
        self.skipped.clone()
    }

    pub fn skip_count(&self) -> u64 {
        self.skipped.load(Ordering::Relaxed)
    }

    fn parse(&self, raw: &[u8]) -> Option<Sample> {
        let w: WireSample = serde_json::from_slice(raw).ok()?;
        let s = Sample::new(w.t, w.uv);
        sample_is_sane(&s).then_some(s)
    }
}

impl Iterator for NetworkSource {
    type Item = Result<Sample, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        while !self.done {
            if self.cancel.as_ref().is_some_and(|c| c.load(Ordering::Relaxed)) {
                self.done = true;
                return Some(Err(IngestError::Cancelled));
            }
            // read_until keeps partial data in `buf` across timeouts.
            match self.reader.read_until(b'\n', &mut self.buf) {
                Ok(0) => {
                    self.done = true;
                    if !self.buf.is_empty() {
                        // Unterminated final line.
                        self.skipped.fetch_add(1, Ordering::Relaxed);
                    }
                    return None;
                }
                Ok(_) if self.buf.last() != Some(&b'\n') => continue,
                Ok(_) => {}
                Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {
                    continue
                }
                Err(e) if e.kind() == ErrorKind::Interrupted => continue,
                Err(e) => {
                    self.done = true;
                    return Some(Err(IngestError::io(&self.peer, e)));
                }
            }
            self.line += 1;
            let raw = std::mem::take(&mut self.buf);
            let trimmed = raw.trim_ascii();
            if trimmed.is_empty() {
                continue;
            }
            match self.parse(trimmed) {
                None => {
                    self.skipped.fetch_add(1, Ordering::Relaxed);
                }
                Some(sample) => {
                    return Some(match self.guard.check(&sample, self.line) {
                        Ok(()) => Ok(sample),
                        Err(e) => {
                            self.done = true;
                            Err(e)
                        }
                    });
                }
            }
        }
        None
    }
}
