//! Fire-and-forget delivery of fixes to the position receiver.

use std::io::{self, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::sync::atomic::Ordering;
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use crossbeam::channel::{self, Receiver, Sender, TrySendError};

use super::PipelineStats;
use crate::domain::PositionFix;
use crate::wire;

/// Capacity of the queue between the estimation loop and the sender.
pub const SEND_BUFFER: usize = 8;

/// Writes one wire message for `fix`.
pub fn stream_fix<W: Write>(fix: &PositionFix, connection: &mut W) -> io::Result<()> {
    let line = wire::format_position(fix.x, fix.y)
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "non-finite fix"))?;
    connection.write_all(line.as_bytes())
}

/// Producer side of the bounded latest-wins queue. When the queue is full
/// the oldest pending fix is evicted and counted as dropped.
#[derive(Clone)]
pub(crate) struct FixQueue {
    tx: Sender<PositionFix>,
    evict: Receiver<PositionFix>,
    stats: Arc<PipelineStats>,
}

impl FixQueue {
    pub(crate) fn new(stats: Arc<PipelineStats>) -> (Self, Receiver<PositionFix>) {
        let (tx, rx) = channel::bounded(SEND_BUFFER);
        (FixQueue { tx, evict: rx.clone(), stats }, rx)
    }

    pub(crate) fn push(&self, fix: PositionFix) {
        let mut pending = fix;
        loop {
            match self.tx.try_send(pending) {
                Ok(()) => return,
                Err(TrySendError::Full(back)) => {
                    if self.evict.try_recv().is_ok() {
                        self.stats.dropped.fetch_add(1, Ordering::Relaxed);
                    }
                    pending = back;
                }
                Err(TrySendError::Disconnected(_)) => return,
            }
        }
    }
}

/// Client connection to the position receiver with reconnect backoff.
pub(crate) struct Link {
    endpoint: String,
    stream: Option<TcpStream>,
    next_attempt: Instant,
    backoff: Duration,
    min_backoff: Duration,
    max_backoff: Duration,
    connect_timeout: Duration,
}

impl Link {
    /// Backoff grows from a quarter period up to one period so a restarted
    /// receiver is picked up within two cycles.
    pub(crate) fn new(endpoint: String, update_period: Duration) -> Self {
        let min_backoff = update_period / 4;
        Link {
            endpoint,
            stream: None,
            next_attempt: Instant::now(),
            backoff: min_backoff,
            min_backoff,
            max_backoff: update_period,
            connect_timeout: (update_period / 2).min(Duration::from_millis(250)),
        }
    }

    #[cfg(test)]
    pub(crate) fn is_connected(&self) -> bool {
        self.stream.is_some()
    }

    fn connect(&mut self, stats: &PipelineStats) -> bool {
        let now = Instant::now();
        if now < self.next_attempt {
            return false;
        }
        let stream = self
            .endpoint
            .to_socket_addrs()
            .ok()
            .into_iter()
            .flatten()
            .find_map(|addr| TcpStream::connect_timeout(&addr, self.connect_timeout).ok());
        match stream {
            Some(s) => {
                let _ = s.set_nodelay(true);
                let _ = s.set_write_timeout(Some(self.max_backoff));
                log::info!("connected to position receiver at {}", self.endpoint);
                stats.reconnects.fetch_add(1, Ordering::Relaxed);
                self.stream = Some(s);
                self.backoff = self.min_backoff;
                true
            }
            None => {
                log::debug!("position receiver {} unreachable", self.endpoint);
                self.next_attempt = now + self.backoff;
                self.backoff = (self.backoff * 2).min(self.max_backoff);
                false
            }
        }
    }

    /// Sends one fix; counts it as sent or dropped. Never fails.
    pub(crate) fn send(&mut self, fix: &PositionFix, stats: &PipelineStats) {
        if self.stream.as_ref().is_some_and(peer_closed) {
            log::info!("position receiver closed the connection");
            self.stream = None;
            self.next_attempt = Instant::now();
        }
        for _ in 0..2 {
            if self.stream.is_none() && !self.connect(stats) {
                break;
            }
            let stream = self.stream.as_mut().expect("connected");
            match stream_fix(fix, stream) {
                Ok(()) => {
                    stats.sent.fetch_add(1, Ordering::Relaxed);
                    return;
                }
                Err(e) => {
                    log::debug!("send failed: {e}");
                    self.stream = None;
                    self.next_attempt = Instant::now();
                }
            }
        }
        stats.dropped.fetch_add(1, Ordering::Relaxed);
    }
}

/// The receiver never writes back, so a readable socket means EOF or error.
fn peer_closed(stream: &TcpStream) -> bool {
    if stream.set_nonblocking(true).is_err() {
        return true;
    }
    let mut probe = [0u8; 64];
    let closed = match (&*stream).read(&mut probe) {
        Ok(0) => true,
        Ok(_) => false,
        Err(e) if e.kind() == io::ErrorKind::WouldBlock => false,
        Err(_) => true,
    };
    closed || stream.set_nonblocking(false).is_err()
}

pub(crate) fn spawn_sender(
    rx: Receiver<PositionFix>,
    endpoint: String,
    update_period: Duration,
    stats: Arc<PipelineStats>,
) -> JoinHandle<()> {
    thread::Builder::new()
        .name("fix-sender".into())
        .spawn(move || {
            let mut link = Link::new(endpoint, update_period);
            for fix in rx {
                link.send(&fix, &stats);
            }
        })
        .expect("spawn sender thread")
}
