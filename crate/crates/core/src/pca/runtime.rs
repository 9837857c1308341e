//! Wires receiver, execution environment and UI bridge together.
//!
//! The receiver thread notifies an observer that appends to an ordered
//! queue; a single event thread drains it into the execution environment
//! and publishes a render snapshot after every update.

use std::io;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use crossbeam::channel::{self, Receiver};

use super::bridge::{StateBoard, UiBridge};
use super::env::{ExecutionEnvironment, RenderState};
use super::events::DEFAULT_CLICK_COUNT;
use super::mapping::CanvasCalibration;
use super::receiver::{PositionReceiver, PositionSubject, ReceiverCounts};
use crate::domain::{AnchorSet, Point2};

pub const DEFAULT_LISTEN: &str = "127.0.0.1:5005";

#[derive(Debug, Clone)]
pub struct PcaConfig {
    pub listen: String,
    pub canvas: CanvasCalibration,
    pub click_count: u32,
    /// WebSocket address for the UI bridge; no bridge when `None`.
    pub bridge: Option<String>,
    pub anchors: Option<AnchorSet>,
}

impl PcaConfig {
    pub fn new(canvas: CanvasCalibration) -> Self {
        PcaConfig { listen: DEFAULT_LISTEN.into(), canvas, click_count: DEFAULT_CLICK_COUNT, bridge: None, anchors: None }
    }
}

pub struct PcaRuntime {
    receiver: Option<PositionReceiver>,
    bridge: Option<UiBridge>,
    board: Arc<StateBoard>,
    stop: Arc<AtomicBool>,
    event_thread: Option<JoinHandle<()>>,
}

impl PcaRuntime {
    pub fn start(config: PcaConfig) -> io::Result<Self> {
        config.canvas.validate().map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e.to_string()))?;
        if config.click_count == 0 {
            return Err(io::Error::new(io::ErrorKind::InvalidInput, "click count must be positive"));
        }
        let mut env = ExecutionEnvironment::new(config.canvas, config.click_count);
        if let Some(set) = &config.anchors {
            env = env.with_anchors(set);
        }
        let board = Arc::new(StateBoard::new());
        board.publish(env.render());

        let (pos_tx, pos_rx) = channel::unbounded::<(Instant, Point2)>();
        let subject = Arc::new(PositionSubject::new());
        subject.attach(Arc::new(move |p: Point2| {
            let _ = pos_tx.send((Instant::now(), p));
        }));
        let receiver = PositionReceiver::bind(config.listen.as_str(), subject)?;

        let (select_tx, select_rx) = channel::unbounded::<String>();
        let bridge = match &config.bridge {
            Some(addr) => Some(UiBridge::bind(addr.as_str(), board.clone(), select_tx)?),
            None => None,
        };

        let stop = Arc::new(AtomicBool::new(false));
        let event_thread = {
            let (board, stop) = (board.clone(), stop.clone());
            thread::Builder::new()
                .name("pca-events".into())
                .spawn(move || event_loop(env, pos_rx, select_rx, board, stop))?
        };
        Ok(PcaRuntime { receiver: Some(receiver), bridge, board, stop, event_thread: Some(event_thread) })
    }

    pub fn listen_addr(&self) -> SocketAddr {
        self.receiver.as_ref().expect("running").local_addr()
    }

    pub fn bridge_addr(&self) -> Option<SocketAddr> {
        self.bridge.as_ref().map(UiBridge::local_addr)
    }

    pub fn state(&self) -> RenderState {
        self.board.latest().1.expect("state published at start")
    }

    pub fn state_version(&self) -> u64 {
        self.board.version()
    }

    pub fn receiver_counts(&self) -> ReceiverCounts {
        self.receiver.as_ref().expect("running").stats().counts()
    }

    /// Stops all threads and closes every socket. Returns the final state.
    pub fn shutdown(mut self) -> RenderState {
        self.stop_all();
        self.state()
    }

    fn stop_all(&mut self) {
        if let Some(r) = self.receiver.take() {
            r.shutdown();
        }
        if let Some(b) = self.bridge.take() {
            b.shutdown();
        }
        self.stop.store(true, Ordering::Relaxed);
        if let Some(t) = self.event_thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for PcaRuntime {
    fn drop(&mut self) {
        self.stop_all();
    }
}

fn event_loop(
    mut env: ExecutionEnvironment,
    positions: Receiver<(Instant, Point2)>,
    selects: Receiver<String>,
    board: Arc<StateBoard>,
    stop: Arc<AtomicBool>,
) {
    let start = Instant::now();
    while !stop.load(Ordering::Relaxed) {
        channel::select! {
            recv(positions) -> msg => match msg {
                Ok((at, p)) => {
                    env.on_position(at.saturating_duration_since(start).as_secs_f64(), p);
                    board.publish(env.render());
                }
                Err(_) => break,
            },
            recv(selects) -> msg => {
                if let Ok(id) = msg {
                    if env.select(&id) {
                        board.publish(env.render());
                    } else {
                        log::warn!("ui asked for unknown app {id}");
                    }
                }
            },
            default(Duration::from_millis(20)) => {}
        }
    }
}
