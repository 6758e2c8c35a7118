//! Blocking bridge client.
//!
//! One I/O thread owns the socket; one dispatch thread runs callbacks, so
//! handlers never run concurrently with each other and always see frames
//! in arrival order. After [`Client::close`] returns no handler runs again.

use std::collections::{BTreeMap, VecDeque};
use std::io;
use std::net::TcpStream;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Condvar, Mutex, OnceLock};
use std::thread::{self, JoinHandle, ThreadId};
use std::time::{Duration, Instant};

use blockbot_core::msg::{MsgType, RosMessage};
use blockbot_core::program::{to_json, BlockProgram};
use blockbot_core::runtime::{Inbound, Key, Link, LinkError};
use serde_json::{json, Value};
use thiserror::Error;
use tungstenite::{Message, WebSocket};

pub const CONNECT_TIMEOUT: Duration = Duration::from_secs(5);
const POLL_INTERVAL: Duration = Duration::from_millis(5);
const CLOSE_GRACE: Duration = Duration::from_secs(1);
/// Recently sent requests remembered for matching status replies.
const PENDING_REQUESTS: usize = 256;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("invalid URL `{0}`: expected ws://host:port[/path]")]
    InvalidUrl(String),
    #[error("cannot connect to {url}: {source}")]
    Connect { url: String, source: io::Error },
    #[error("handshake with {url} failed: {reason}")]
    Handshake { url: String, reason: String },
    #[error("connection closed")]
    Closed,
    #[error("cannot encode message: {0}")]
    Encode(String),
}

/// Errors reported asynchronously.
#[derive(Debug, Clone, PartialEq)]
pub enum ClientEvent {
    /// A status error from the server; `request` is the frame that caused
    /// it, when it can be matched by id.
    Status {
        msg: String,
        id: Option<String>,
        request: Option<Value>,
    },
    /// A message that did not decode as its topic's type.
    Decode {
        topic: String,
        reason: String,
    },
    Disconnected(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProgramEvent {
    Print(String),
    /// `completed`, `stopped` or `time_limit`.
    Finished(String),
    Error {
        path: String,
        code: String,
        message: String,
    },
    /// The server refused to start the program.
    Rejected(String),
}

type Callback<T> = Arc<Mutex<dyn FnMut(T) + Send>>;

fn callback<T>(f: impl FnMut(T) + Send + 'static) -> Callback<T> {
    Arc::new(Mutex::new(f))
}

struct Subscription {
    ty: MsgType,
    handlers: Vec<Callback<RosMessage>>,
}

#[derive(Default)]
struct Inner {
    subscriptions: Mutex<BTreeMap<String, Subscription>>,
    on_error: Mutex<Vec<Callback<ClientEvent>>>,
    on_program: Mutex<Vec<Callback<ProgramEvent>>>,
    on_key: Mutex<Vec<Callback<Key>>>,
    pending: Mutex<VecDeque<(String, Value)>>,
    next_id: AtomicU64,
    closed: AtomicBool,
    connected: AtomicBool,
    /// Held while a callback runs; `close` takes it to wait one out.
    dispatching: Mutex<()>,
    dispatch_thread: OnceLock<ThreadId>,
}

enum Outgoing {
    Text(String),
    Close,
}

pub struct Client {
    inner: Arc<Inner>,
    outgoing: Sender<Outgoing>,
    threads: Mutex<Vec<JoinHandle<()>>>,
}

impl Client {
    pub fn connect(url: &str) -> Result<Client, ClientError> {
        Self::connect_timeout(url, CONNECT_TIMEOUT)
    }

    pub fn connect_timeout(url: &str, timeout: Duration) -> Result<Client, ClientError> {
        let parsed = url::Url::parse(url).map_err(|_| ClientError::InvalidUrl(url.to_string()))?;
        if parsed.scheme() != "ws" || parsed.host_str().is_none() {
            return Err(ClientError::InvalidUrl(url.to_string()));
        }
        let addrs =
            parsed.socket_addrs(|| Some(80)).map_err(|source| ClientError::Connect { url: url.to_string(), source })?;
        let stream =
            connect_any(&addrs, timeout).map_err(|source| ClientError::Connect { url: url.to_string(), source })?;
        let handshake_err = |reason: String| ClientError::Handshake { url: url.to_string(), reason };
        stream.set_read_timeout(Some(timeout)).map_err(|e| handshake_err(e.to_string()))?;
        stream.set_nodelay(true).map_err(|e| handshake_err(e.to_string()))?;
        let (ws, _) = tungstenite::client(url, stream).map_err(|e| handshake_err(e.to_string()))?;
        ws.get_ref().set_read_timeout(Some(POLL_INTERVAL)).map_err(|e| handshake_err(e.to_string()))?;

        let inner = Arc::new(Inner::default());
        inner.connected.store(true, Ordering::SeqCst);
        let (out_tx, out_rx) = mpsc::channel();
        let (in_tx, in_rx) = mpsc::channel();
        let io = {
            let inner = inner.clone();
            thread::spawn(move || io_loop(ws, out_rx, in_tx, &inner))
        };
        let dispatch = {
            let inner = inner.clone();
            thread::spawn(move || dispatch_loop(in_rx, &inner))
        };
        Ok(Client { inner, outgoing: out_tx, threads: Mutex::new(vec![io, dispatch]) })
    }

    pub fn is_connected(&self) -> bool {
        self.inner.connected.load(Ordering::SeqCst) && !self.inner.closed.load(Ordering::SeqCst)
    }

    pub fn advertise(&self, topic: &str, ty: MsgType) -> Result<(), ClientError> {
        self.request(json!({"op": "advertise", "topic": topic, "type": ty.name()}))
    }

    pub fn unadvertise(&self, topic: &str) -> Result<(), ClientError> {
        self.request(json!({"op": "unadvertise", "topic": topic}))
    }

    pub fn publish(&self, topic: &str, msg: &RosMessage) -> Result<(), ClientError> {
        let body = msg.to_json().map_err(|e| ClientError::Encode(e.to_string()))?;
        self.request(json!({"op": "publish", "topic": topic, "msg": body}))
    }

    /// Adds a handler for `topic`; the first handler also subscribes on the
    /// server.
    pub fn subscribe(
        &self,
        topic: &str,
        ty: MsgType,
        handler: impl FnMut(RosMessage) + Send + 'static,
    ) -> Result<(), ClientError> {
        let first = {
            let mut subs = self.inner.subscriptions.lock().unwrap();
            let entry = subs.entry(topic.to_string()).or_insert_with(|| Subscription { ty, handlers: Vec::new() });
            entry.ty = ty;
            entry.handlers.push(callback(handler));
            entry.handlers.len() == 1
        };
        if first {
            self.request(json!({"op": "subscribe", "topic": topic, "type": ty.name()}))?;
        }
        Ok(())
    }

    /// Drops every handler of `topic`.
    pub fn unsubscribe(&self, topic: &str) -> Result<(), ClientError> {
        self.inner.subscriptions.lock().unwrap().remove(topic);
        self.request(json!({"op": "unsubscribe", "topic": topic}))
    }

    pub fn run_program(&self, program: &BlockProgram) -> Result<(), ClientError> {
        self.request(json!({"op": "x_run_program", "program": to_json(program)}))
    }

    pub fn stop_program(&self) -> Result<(), ClientError> {
        self.request(json!({"op": "x_stop_program"}))
    }

    pub fn send_key(&self, key: Key) -> Result<(), ClientError> {
        self.request(json!({"op": "x_key", "key": key.as_str()}))
    }

    /// Sends a frame verbatim, without an id.
    pub fn send_raw(&self, text: &str) -> Result<(), ClientError> {
        self.send(text.to_string())
    }

    pub fn on_error(&self, f: impl FnMut(ClientEvent) + Send + 'static) {
        self.inner.on_error.lock().unwrap().push(callback(f));
    }

    pub fn on_program_event(&self, f: impl FnMut(ProgramEvent) + Send + 'static) {
        self.inner.on_program.lock().unwrap().push(callback(f));
    }

    pub fn on_key(&self, f: impl FnMut(Key) + Send + 'static) {
        self.inner.on_key.lock().unwrap().push(callback(f));
    }

    /// Closes the connection. Once this returns no callback is running or
    /// will run (unless called from inside a callback, which cannot wait
    /// for itself).
    pub fn close(&self) {
        if self.inner.closed.swap(true, Ordering::SeqCst) {
            return;
        }
        let _ = self.outgoing.send(Outgoing::Close);
        let on_dispatch = self.inner.dispatch_thread.get() == Some(&thread::current().id());
        if on_dispatch {
            return;
        }
        drop(self.inner.dispatching.lock().unwrap());
        for t in self.threads.lock().unwrap().drain(..) {
            let _ = t.join();
        }
    }

    fn request(&self, mut frame: Value) -> Result<(), ClientError> {
        let id = format!("c{}", self.inner.next_id.fetch_add(1, Ordering::Relaxed));
        frame["id"] = json!(id);
        let text = frame.to_string();
        {
            let mut pending = self.inner.pending.lock().unwrap();
            if pending.len() >= PENDING_REQUESTS {
                pending.pop_front();
            }
            pending.push_back((id, frame));
        }
        self.send(text)
    }

    fn send(&self, text: String) -> Result<(), ClientError> {
        if !self.is_connected() {
            return Err(ClientError::Closed);
        }
        self.outgoing.send(Outgoing::Text(text)).map_err(|_| ClientError::Closed)
    }
}

impl Drop for Client {
    fn drop(&mut self) {
        self.close();
    }
}

fn connect_any(addrs: &[std::net::SocketAddr], timeout: Duration) -> io::Result<TcpStream> {
    let mut last = io::Error::new(io::ErrorKind::NotFound, "no address");
    for a in addrs {
        match TcpStream::connect_timeout(a, timeout) {
            Ok(s) => return Ok(s),
            Err(e) => last = e,
        }
    }
    Err(last)
}

fn is_timeout(e: &tungstenite::Error) -> bool {
    matches!(e, tungstenite::Error::Io(io) if matches!(io.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut))
}

enum Incoming {
    Frame(String),
    Lost(String),
}

fn io_loop(mut ws: WebSocket<TcpStream>, outgoing: Receiver<Outgoing>, incoming: Sender<Incoming>, inner: &Inner) {
    let mut closing: Option<Instant> = None;
    let lost = loop {
        let mut failed = None;
        loop {
            match outgoing.try_recv() {
                Ok(Outgoing::Text(t)) => {
                    if let Err(e) = ws.send(Message::text(t)) {
                        failed = Some(e.to_string());
                        break;
                    }
                }
                Ok(Outgoing::Close) | Err(mpsc::TryRecvError::Disconnected) => {
                    if closing.is_none() {
                        let _ = ws.close(None);
                        let _ = ws.flush();
                        closing = Some(Instant::now());
                    }
                    break;
                }
                Err(mpsc::TryRecvError::Empty) => break,
            }
        }
        if let Some(e) = failed {
            break closing.is_none().then_some(e);
        }
        if closing.is_some_and(|t| t.elapsed() > CLOSE_GRACE) {
            break None;
        }
        match ws.read() {
            Ok(Message::Text(t)) => {
                let _ = incoming.send(Incoming::Frame(t.to_string()));
            }
            Ok(Message::Close(_)) => {}
            Ok(_) => {}
            Err(e) if is_timeout(&e) => {}
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => {
                break closing.is_none().then(|| "connection closed by server".to_string());
            }
            Err(e) => break closing.is_none().then(|| e.to_string()),
        }
    };
    inner.connected.store(false, Ordering::SeqCst);
    if let Some(reason) = lost {
        let _ = incoming.send(Incoming::Lost(reason));
    }
}

fn dispatch_loop(incoming: Receiver<Incoming>, inner: &Inner) {
    let _ = inner.dispatch_thread.set(thread::current().id());
    while let Ok(item) = incoming.recv() {
        let _guard = inner.dispatching.lock().unwrap();
        if inner.closed.load(Ordering::SeqCst) {
            return;
        }
        match item {
            Incoming::Frame(text) => dispatch_frame(&text, inner),
            Incoming::Lost(reason) => fire(&inner.on_error, ClientEvent::Disconnected(reason)),
        }
    }
}

fn fire<T: Clone>(list: &Mutex<Vec<Callback<T>>>, value: T) {
    let handlers: Vec<_> = list.lock().unwrap().clone();
    for h in handlers {
        (h.lock().unwrap())(value.clone());
    }
}

fn dispatch_frame(text: &str, inner: &Inner) {
    let Ok(frame) = serde_json::from_str::<Value>(text) else {
        tracing::warn!("ignoring non-JSON frame from server");
        return;
    };
    match frame["op"].as_str() {
        Some("publish") => {
            let topic = frame["topic"].as_str().unwrap_or_default();
            let (ty, handlers) = {
                let subs = inner.subscriptions.lock().unwrap();
                match subs.get(topic) {
                    Some(s) => (s.ty, s.handlers.clone()),
                    None => return,
                }
            };
            match RosMessage::from_json(ty, &frame["msg"]) {
                Ok(msg) => {
                    for h in handlers {
                        (h.lock().unwrap())(msg.clone());
                    }
                }
                Err(e) => {
                    fire(&inner.on_error, ClientEvent::Decode { topic: topic.to_string(), reason: e.to_string() })
                }
            }
        }
        Some("status") if frame["level"] == "error" => {
            let msg = frame["msg"].as_str().unwrap_or_default().to_string();
            let id = frame["id"].as_str().map(str::to_string);
            let request = id
                .as_ref()
                .and_then(|id| inner.pending.lock().unwrap().iter().find(|(k, _)| k == id).map(|(_, v)| v.clone()));
            if request.as_ref().is_some_and(|r| r["op"] == "x_run_program") {
                fire(&inner.on_program, ProgramEvent::Rejected(msg.clone()));
            }
            fire(&inner.on_error, ClientEvent::Status { msg, id, request });
        }
        Some("x_program_event") => {
            let data = &frame["data"];
            let text = |v: &Value| v.as_str().unwrap_or_default().to_string();
            let event = match frame["kind"].as_str() {
                Some("print") => ProgramEvent::Print(text(data)),
                Some("finished") => ProgramEvent::Finished(text(&data["reason"])),
                Some("error") => ProgramEvent::Error {
                    path: text(&data["path"]),
                    code: text(&data["code"]),
                    message: text(&data["message"]),
                },
                _ => return,
            };
            fire(&inner.on_program, event);
        }
        Some("x_key") => {
            if let Some(k) = frame["key"].as_str().and_then(Key::from_name) {
                fire(&inner.on_key, k);
            }
        }
        _ => {}
    }
}

/// Interpreter link over a remote bridge, for standalone programs. Ticks
/// follow the server's `/clock`.
pub struct WsLink {
    client: Option<Client>,
    state: Arc<(Mutex<LinkState>, Condvar)>,
    period: f64,
    last_tick: f64,
    now: f64,
    clock_timeout: Duration,
}

#[derive(Default)]
struct LinkState {
    inbox: Inbound,
    clock: Option<f64>,
    error: Option<String>,
    lost: Option<String>,
}

impl Default for WsLink {
    fn default() -> Self {
        Self::new(0.05)
    }
}

impl WsLink {
    pub fn new(period: f64) -> Self {
        Self { client: None, state: Arc::default(), period, last_tick: 0.0, now: 0.0, clock_timeout: CONNECT_TIMEOUT }
    }

    fn client(&mut self) -> Result<&Client, LinkError> {
        let mut st = self.state.0.lock().unwrap();
        if let Some(e) = st.error.take() {
            return Err(LinkError::Rejected(e));
        }
        if let Some(e) = &st.lost {
            return Err(LinkError::Closed(e.clone()));
        }
        drop(st);
        self.client.as_ref().ok_or(LinkError::NotConnected)
    }
}

fn closed(e: ClientError) -> LinkError {
    LinkError::Closed(e.to_string())
}

impl Link for WsLink {
    fn connect(&mut self, url: &str) -> Result<(), LinkError> {
        let client = Client::connect(url).map_err(|e| LinkError::Connect(e.to_string()))?;
        let state = self.state.clone();
        client.on_error(move |ev| {
            let (m, cv) = &*state;
            let mut st = m.lock().unwrap();
            match ev {
                ClientEvent::Status { msg, .. } => {
                    st.error.get_or_insert(msg);
                }
                ClientEvent::Disconnected(r) => st.lost = Some(r),
                ClientEvent::Decode { topic, reason } => tracing::warn!("{topic}: {reason}"),
            }
            cv.notify_all();
        });
        let state = self.state.clone();
        client.on_key(move |k| state.0.lock().unwrap().inbox.keys.push(k));
        let state = self.state.clone();
        client
            .subscribe(blockbot_core::topics::CLOCK, MsgType::Clock, move |m| {
                if let RosMessage::Clock(c) = m {
                    let (m, cv) = &*state;
                    m.lock().unwrap().clock = Some(c.as_secs_f64());
                    cv.notify_all();
                }
            })
            .map_err(closed)?;
        // Take the first clock reading as the start of time.
        let (m, cv) = &*self.state;
        let st = m.lock().unwrap();
        let (st, _) = cv.wait_timeout_while(st, self.clock_timeout, |s| s.clock.is_none() && s.lost.is_none()).unwrap();
        self.now = st.clock.unwrap_or(0.0);
        self.last_tick = self.now;
        drop(st);
        self.client = Some(client);
        Ok(())
    }

    fn advertise(&mut self, topic: &str, ty: MsgType) -> Result<(), LinkError> {
        self.client()?.advertise(topic, ty).map_err(closed)
    }

    fn publish(&mut self, topic: &str, msg: &RosMessage) -> Result<(), LinkError> {
        self.client()?.publish(topic, msg).map_err(closed)
    }

    fn subscribe(&mut self, topic: &str, ty: MsgType) -> Result<(), LinkError> {
        let state = self.state.clone();
        let name = topic.to_string();
        self.client()?
            .subscribe(topic, ty, move |m| state.0.lock().unwrap().inbox.messages.push((name.clone(), m)))
            .map_err(closed)
    }

    fn poll(&mut self) -> Inbound {
        std::mem::take(&mut self.state.0.lock().unwrap().inbox)
    }

    fn wait_tick(&mut self) -> Result<f64, LinkError> {
        self.client()?;
        let target = self.last_tick + self.period - 1e-6;
        let (m, cv) = &*self.state;
        let st = m.lock().unwrap();
        let (st, timeout) = cv
            .wait_timeout_while(st, self.clock_timeout, |s| {
                s.clock.is_none_or(|c| c < target) && s.lost.is_none() && s.error.is_none()
            })
            .unwrap();
        if let Some(e) = &st.lost {
            return Err(LinkError::Closed(e.clone()));
        }
        if timeout.timed_out() {
            return Err(LinkError::Closed("no clock from the server".into()));
        }
        if let Some(c) = st.clock.filter(|c| *c >= target) {
            // Skip ahead whole periods if the server outran us.
            let periods = ((c - self.last_tick) / self.period).floor().max(1.0);
            self.last_tick += periods * self.period;
            self.now = c;
        }
        drop(st);
        self.client()?;
        Ok(self.now)
    }

    fn now(&self) -> f64 {
        self.now
    }
}

impl Drop for WsLink {
    fn drop(&mut self) {
        if let Some(c) = self.client.take() {
            c.close();
        }
    }
}

/// Waits up to `timeout` for `pred` to hold, polling.
pub fn wait_until(timeout: Duration, mut pred: impl FnMut() -> bool) -> bool {
    let deadline = Instant::now() + timeout;
    loop {
        if pred() {
            return true;
        }
        if Instant::now() >= deadline {
            return false;
        }
        thread::sleep(Duration::from_millis(2));
    }
}
