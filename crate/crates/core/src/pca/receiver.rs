//! Position receiver: socket server for the `POS x y` wire protocol.

use std::io::{self, Read};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use crate::domain::Point2;
use crate::wire;

/// Longest accepted line, newline excluded. Longer lines count as malformed.
pub const MAX_LINE: usize = 128;

const POLL: Duration = Duration::from_millis(2);

pub trait PositionObserver: Send + Sync {
    fn position_changed(&self, position: Point2);
}

impl<F> PositionObserver for F
where
    F: Fn(Point2) + Send + Sync,
{
    fn position_changed(&self, position: Point2) {
        self(position)
    }
}

/// Holds the latest received position and notifies observers after each
/// update.
#[derive(Default)]
pub struct PositionSubject {
    latest: Mutex<Option<Point2>>,
    observers: Mutex<Vec<Arc<dyn PositionObserver>>>,
}

impl PositionSubject {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn attach(&self, observer: Arc<dyn PositionObserver>) {
        self.observers.lock().expect("observers lock").push(observer);
    }

    pub fn latest(&self) -> Option<Point2> {
        *self.latest.lock().expect("latest lock")
    }

    pub fn set(&self, position: Point2) {
        *self.latest.lock().expect("latest lock") = Some(position);
        let observers = self.observers.lock().expect("observers lock").clone();
        for observer in observers {
            observer.position_changed(position);
        }
    }
}

#[derive(Debug, Default)]
pub struct ReceiverStats {
    pub received: AtomicU64,
    pub malformed: AtomicU64,
    pub connections: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ReceiverCounts {
    pub received: u64,
    pub malformed: u64,
    pub connections: u64,
}

impl ReceiverStats {
    pub fn counts(&self) -> ReceiverCounts {
        ReceiverCounts {
            received: self.received.load(Ordering::Relaxed),
            malformed: self.malformed.load(Ordering::Relaxed),
            connections: self.connections.load(Ordering::Relaxed),
        }
    }
}

/// Splits a byte stream into lines and parses them.
#[derive(Debug, Default)]
pub struct LineDecoder {
    buffer: Vec<u8>,
    overflowed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decoded {
    Position(f64, f64),
    Malformed,
}

impl LineDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn feed(&mut self, bytes: &[u8], out: &mut Vec<Decoded>) {
        for &b in bytes {
            if b == b'\n' {
                let decoded = if self.overflowed {
                    Decoded::Malformed
                } else {
                    let line = std::str::from_utf8(&self.buffer).ok();
                    match line.and_then(|l| wire::parse_position(l.trim_end_matches('\r'))) {
                        Some((x, y)) => Decoded::Position(x, y),
                        None => Decoded::Malformed,
                    }
                };
                out.push(decoded);
                self.buffer.clear();
                self.overflowed = false;
            } else if self.buffer.len() < MAX_LINE {
                self.buffer.push(b);
            } else {
                self.overflowed = true;
            }
        }
    }

    pub fn reset(&mut self) {
        self.buffer.clear();
        self.overflowed = false;
    }
}

/// Listens for one client at a time; a new connection preempts the old.
pub struct PositionReceiver {
    local_addr: SocketAddr,
    stats: Arc<ReceiverStats>,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl PositionReceiver {
    pub fn bind(addr: impl ToSocketAddrs, subject: Arc<PositionSubject>) -> io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        let local_addr = listener.local_addr()?;
        let stats = Arc::new(ReceiverStats::default());
        let stop = Arc::new(AtomicBool::new(false));
        let thread = {
            let (stats, stop) = (stats.clone(), stop.clone());
            thread::Builder::new()
                .name("position-receiver".into())
                .spawn(move || serve(listener, subject, stats, stop))?
        };
        log::info!("position receiver listening on {local_addr}");
        Ok(PositionReceiver { local_addr, stats, stop, thread: Some(thread) })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    pub fn stats(&self) -> Arc<ReceiverStats> {
        self.stats.clone()
    }

    /// Closes the listener and any client connection.
    pub fn shutdown(mut self) {
        self.stop_thread();
    }

    fn stop_thread(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for PositionReceiver {
    fn drop(&mut self) {
        self.stop_thread();
    }
}

fn serve(listener: TcpListener, subject: Arc<PositionSubject>, stats: Arc<ReceiverStats>, stop: Arc<AtomicBool>) {
    let mut client: Option<TcpStream> = None;
    let mut decoder = LineDecoder::new();
    let mut decoded = Vec::new();
    let mut buf = [0u8; 4096];
    while !stop.load(Ordering::Relaxed) {
        let mut idle = true;
        match listener.accept() {
            Ok((stream, peer)) => {
                if stream.set_nonblocking(true).is_ok() {
                    if let Some(old) = client.replace(stream) {
                        let _ = old.shutdown(Shutdown::Both);
                    }
                    decoder.reset();
                    stats.connections.fetch_add(1, Ordering::Relaxed);
                    log::info!("position client connected from {peer}");
                    idle = false;
                }
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => {}
            Err(e) => log::warn!("accept failed: {e}"),
        }
        if let Some(stream) = client.as_mut() {
            match stream.read(&mut buf) {
                Ok(0) => {
                    log::info!("position client disconnected");
                    client = None;
                    decoder.reset();
                }
                Ok(n) => {
                    idle = false;
                    decoder.feed(&buf[..n], &mut decoded);
                    for d in decoded.drain(..) {
                        match d {
                            Decoded::Position(x, y) => {
                                stats.received.fetch_add(1, Ordering::Relaxed);
                                subject.set(Point2::new(x, y));
                            }
                            Decoded::Malformed => {
                                stats.malformed.fetch_add(1, Ordering::Relaxed);
                            }
                        }
                    }
                }
                Err(e) if e.kind() == io::ErrorKind::WouldBlock || e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => {
                    log::info!("position client error: {e}");
                    client = None;
                    decoder.reset();
                }
            }
        }
        if idle {
            thread::sleep(POLL);
        }
    }
    if let Some(stream) = client {
        let _ = stream.shutdown(Shutdown::Both);
    }
}
