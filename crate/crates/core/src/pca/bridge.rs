//! WebSocket bridge between the execution environment and the web UI.
//!
//! Every frame is one JSON text message tagged by `type`:
//!
//! * `{"type":"state","state":{...}}` server to client, a [`RenderState`]
//!   snapshot, sent on connect and whenever the state changes.
//! * `{"type":"steer","mode":"drag"|"keys","x":..,"y":..}` client to server.
//!   `drag` carries a target in meters, `keys` a velocity in m/s. The bridge
//!   relays it unchanged to every other client, which is how a pipeline
//!   running a live trajectory picks it up.
//! * `{"type":"select","app_id":"..."}` client to server, switches the
//!   current app.

use std::io;
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use crossbeam::channel::Sender;
use serde::{Deserialize, Serialize};
use tungstenite::{Message, WebSocket};

use super::env::RenderState;
use crate::domain::Point2;
use crate::pipeline::{SteeredVisitor, Steering, StopSignal};

pub const DEFAULT_BRIDGE_PORT: u16 = 5006;

const POLL: Duration = Duration::from_millis(10);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SteerMode {
    Drag,
    Keys,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum BridgeMessage {
    State { state: Box<RenderState> },
    Steer { mode: SteerMode, x: f64, y: f64 },
    Select { app_id: String },
}

impl BridgeMessage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("bridge message serializes")
    }

    pub fn from_json(text: &str) -> Option<Self> {
        serde_json::from_str(text).ok()
    }

    pub fn steering(&self) -> Option<Steering> {
        match *self {
            BridgeMessage::Steer { mode, x, y } if x.is_finite() && y.is_finite() => Some(match mode {
                SteerMode::Drag => Steering::Target(Point2::new(x, y)),
                SteerMode::Keys => Steering::Velocity(Point2::new(x, y)),
            }),
            _ => None,
        }
    }
}

/// Latest published render state with a version counter.
#[derive(Debug, Default)]
pub struct StateBoard {
    inner: Mutex<(u64, Option<RenderState>)>,
}

impl StateBoard {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn publish(&self, state: RenderState) {
        let mut inner = self.inner.lock().expect("board lock");
        inner.0 += 1;
        inner.1 = Some(state);
    }

    pub fn version(&self) -> u64 {
        self.inner.lock().expect("board lock").0
    }

    pub fn latest(&self) -> (u64, Option<RenderState>) {
        self.inner.lock().expect("board lock").clone()
    }
}

pub struct UiBridge {
    local_addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl UiBridge {
    /// `select` receives the app ids asked for by clients.
    pub fn bind(addr: impl ToSocketAddrs, board: Arc<StateBoard>, select: Sender<String>) -> io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        let local_addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let thread = {
            let stop = stop.clone();
            thread::Builder::new().name("ui-bridge".into()).spawn(move || serve(listener, board, select, stop))?
        };
        log::info!("ui bridge listening on ws://{local_addr}");
        Ok(UiBridge { local_addr, stop, thread: Some(thread) })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

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

impl Drop for UiBridge {
    fn drop(&mut self) {
        self.stop_thread();
    }
}

struct Client {
    id: u64,
    ws: WebSocket<TcpStream>,
}

fn would_block(e: &tungstenite::Error) -> bool {
    matches!(e, tungstenite::Error::Io(io) if io.kind() == io::ErrorKind::WouldBlock || io.kind() == io::ErrorKind::TimedOut)
}

/// Sends or queues a frame. False when the client is gone.
fn push(ws: &mut WebSocket<TcpStream>, text: &str) -> bool {
    match ws.send(Message::text(text)) {
        Ok(()) => true,
        Err(e) => would_block(&e),
    }
}

fn handshake(stream: TcpStream) -> Option<WebSocket<TcpStream>> {
    stream.set_nonblocking(false).ok()?;
    stream.set_read_timeout(Some(Duration::from_secs(2))).ok()?;
    let ws = tungstenite::accept(stream).ok()?;
    ws.get_ref().set_nonblocking(true).ok()?;
    Some(ws)
}

fn serve(listener: TcpListener, board: Arc<StateBoard>, select: Sender<String>, stop: Arc<AtomicBool>) {
    let mut clients: Vec<Client> = Vec::new();
    let mut next_id = 0u64;
    let mut sent_version = 0u64;
    while !stop.load(Ordering::Relaxed) {
        let mut idle = true;
        if let Ok((stream, peer)) = listener.accept() {
            idle = false;
            if let Some(mut ws) = handshake(stream) {
                log::info!("ui client connected from {peer}");
                let (_, state) = board.latest();
                if let Some(state) = state {
                    push(&mut ws, &BridgeMessage::State { state: Box::new(state) }.to_json());
                }
                clients.push(Client { id: next_id, ws });
                next_id += 1;
            }
        }

        let mut relay: Vec<(u64, String)> = Vec::new();
        let mut gone: Vec<u64> = Vec::new();
        for client in &mut clients {
            loop {
                match client.ws.read() {
                    Ok(Message::Text(text)) => {
                        idle = false;
                        match BridgeMessage::from_json(&text) {
                            Some(msg @ BridgeMessage::Steer { .. }) => relay.push((client.id, msg.to_json())),
                            Some(BridgeMessage::Select { app_id }) => {
                                let _ = select.send(app_id);
                            }
                            _ => log::debug!("ignoring ui message {text}"),
                        }
                    }
                    Ok(Message::Close(_)) => {
                        gone.push(client.id);
                        break;
                    }
                    Ok(_) => {}
                    Err(e) if would_block(&e) => break,
                    Err(_) => {
                        gone.push(client.id);
                        break;
                    }
                }
            }
        }

        let (version, state) = board.latest();
        let state_frame = (version != sent_version)
            .then(|| state.map(|s| BridgeMessage::State { state: Box::new(s) }.to_json()))
            .flatten();
        sent_version = version;
        for client in &mut clients {
            if gone.contains(&client.id) {
                continue;
            }
            let mut alive = true;
            if let Some(frame) = &state_frame {
                alive &= push(&mut client.ws, frame);
            }
            for (from, frame) in &relay {
                if *from != client.id {
                    alive &= push(&mut client.ws, frame);
                }
            }
            match client.ws.flush() {
                Ok(()) => {}
                Err(e) if would_block(&e) => {}
                Err(_) => alive = false,
            }
            if !alive {
                gone.push(client.id);
            }
        }
        if !gone.is_empty() {
            clients.retain(|c| !gone.contains(&c.id));
            log::info!("ui client disconnected ({} remaining)", clients.len());
        }
        if idle {
            thread::sleep(POLL);
        }
    }
    for mut client in clients {
        let _ = client.ws.close(None);
        let _ = client.ws.flush();
    }
}

fn host_port(url: &str) -> Option<&str> {
    let rest = url.strip_prefix("ws://")?;
    Some(rest.split('/').next().unwrap_or(rest))
}

fn follow_once(url: &str, visitor: &SteeredVisitor, stop: &StopSignal) -> Result<(), String> {
    let addr = host_port(url)
        .ok_or_else(|| format!("unsupported bridge url {url}"))?
        .to_socket_addrs()
        .map_err(|e| e.to_string())?
        .next()
        .ok_or("bridge address did not resolve")?;
    let stream = TcpStream::connect_timeout(&addr, Duration::from_secs(1)).map_err(|e| e.to_string())?;
    stream.set_read_timeout(Some(Duration::from_millis(100))).map_err(|e| e.to_string())?;
    let (mut ws, _) = tungstenite::client(url, stream).map_err(|e| e.to_string())?;
    log::info!("following steering from {url}");
    while !stop.is_raised() {
        match ws.read() {
            Ok(Message::Text(text)) => {
                if let Some(steering) = BridgeMessage::from_json(&text).as_ref().and_then(BridgeMessage::steering) {
                    visitor.steer(steering);
                }
            }
            Ok(Message::Close(_)) => return Err("bridge closed".into()),
            Ok(_) => {}
            Err(e) if would_block(&e) => {}
            Err(e) => return Err(e.to_string()),
        }
    }
    let _ = ws.close(None);
    Ok(())
}

/// Applies every `steer` message seen on the bridge at `url` to `visitor`
/// until `stop` is raised, reconnecting as needed.
pub fn follow_steering(url: String, visitor: Arc<SteeredVisitor>, stop: StopSignal) -> JoinHandle<()> {
    thread::Builder::new()
        .name("steering".into())
        .spawn(move || {
            while !stop.is_raised() {
                if let Err(e) = follow_once(&url, &visitor, &stop) {
                    log::debug!("steering link: {e}");
                    stop.wait_until(Instant::now() + Duration::from_millis(500));
                }
            }
        })
        .expect("spawn steering thread")
}
