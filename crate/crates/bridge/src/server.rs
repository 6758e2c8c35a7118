//! HTTP/WebSocket front end. `/` upgrades to a bridge session when asked
//! to, and otherwise serves the bundled UI page; `/world.json` serves the
//! loaded world.

use std::io;
use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::{self, JoinHandle};

use axum::extract::ws::rejection::WebSocketUpgradeRejection;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::{Html, IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use futures::{SinkExt, StreamExt};
use tokio::sync::{oneshot, Notify};

use crate::host::{apply, Shared};
use crate::protocol::BridgeError;

pub const INDEX_HTML: &str = include_str!("../assets/index.html");

pub(crate) struct ServerHandle {
    pub(crate) addr: SocketAddr,
    shutdown: oneshot::Sender<()>,
    thread: JoinHandle<()>,
}

impl ServerHandle {
    pub(crate) fn stop(self) {
        let _ = self.shutdown.send(());
        let _ = self.thread.join();
    }
}

/// Binds synchronously (so port errors surface to the caller) and serves
/// on a dedicated runtime thread.
pub(crate) fn spawn(shared: Arc<Shared>, addr: SocketAddr) -> io::Result<ServerHandle> {
    let listener = std::net::TcpListener::bind(addr)?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let runtime = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build()?;
    let (tx, rx) = oneshot::channel::<()>();
    let thread = thread::spawn(move || {
        runtime.block_on(async move {
            let listener = match tokio::net::TcpListener::from_std(listener) {
                Ok(l) => l,
                Err(e) => {
                    tracing::error!("listener: {e}");
                    return;
                }
            };
            let app = router(shared);
            let server = axum::serve(listener, app);
            tokio::select! {
                r = server => if let Err(e) = r { tracing::error!("server: {e}") },
                _ = rx => {}
            }
        });
        // Drop open sessions rather than waiting for clients.
        runtime.shutdown_background();
    });
    Ok(ServerHandle { addr, shutdown: tx, thread })
}

fn router(shared: Arc<Shared>) -> Router {
    Router::new()
        .route("/", get(root))
        .route("/index.html", get(|| async { Html(INDEX_HTML) }))
        .route("/world.json", get(world))
        .with_state(shared)
}

async fn root(State(shared): State<Arc<Shared>>, ws: Result<WebSocketUpgrade, WebSocketUpgradeRejection>) -> Response {
    match ws {
        Ok(ws) => ws.on_upgrade(move |socket| session(socket, shared)),
        Err(_) => Html(INDEX_HTML).into_response(),
    }
}

async fn world(State(shared): State<Arc<Shared>>) -> Json<serde_json::Value> {
    Json(shared.world.clone())
}

async fn session(socket: WebSocket, shared: Arc<Shared>) {
    let notify = Arc::new(Notify::new());
    let wake = notify.clone();
    let id = shared.hub.lock().unwrap().open_session(Some(Arc::new(move || wake.notify_one())));
    tracing::debug!("session {id} opened");
    let (mut tx, mut rx) = socket.split();

    let writer_shared = shared.clone();
    let writer = tokio::spawn(async move {
        loop {
            notify.notified().await;
            let frames = writer_shared.hub.lock().unwrap().drain(id);
            for f in frames {
                if tx.send(Message::Text(f.to_string().into())).await.is_err() {
                    return;
                }
            }
        }
    });

    while let Some(Ok(msg)) = rx.next().await {
        match msg {
            Message::Text(text) => {
                let effect = shared.hub.lock().unwrap().handle_op(id, text.as_str());
                if let Some(effect) = effect {
                    apply(&shared, effect);
                }
            }
            Message::Binary(_) => shared.hub.lock().unwrap().reject(id, &BridgeError::Binary, None),
            Message::Close(_) => break,
            Message::Ping(_) | Message::Pong(_) => {}
        }
    }

    let dropped = shared.hub.lock().unwrap().close_session(id);
    writer.abort();
    if dropped > 0 {
        tracing::info!("session {id} closed; {dropped} messages dropped on full queues");
    } else {
        tracing::debug!("session {id} closed");
    }
}
