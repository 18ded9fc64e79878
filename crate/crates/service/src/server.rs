//! HTTP/WebSocket transport: `/ws` speaks the wire protocol, everything else
//! is served from the static asset directory.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use airpen_core::classifiers::ClassifierModel;
use airpen_core::streaming::SegmenterConfig;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::{Html, IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use futures::future::BoxFuture;
use tokio::net::TcpListener;
use tokio::sync::watch;
use tower_http::services::ServeDir;

use crate::protocol::{ErrorCode, WireMessage};
use crate::registry::SessionRegistry;

pub const DEFAULT_PORT: u16 = 8765;

const PLACEHOLDER_INDEX: &str = include_str!("../static/index.html");

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Core(#[from] airpen_core::Error),
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error("server error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug)]
#[derive(Default)]
pub struct ServiceConfig {
    pub segmenter: SegmenterConfig,
    /// Directory of the browser demo build; a placeholder page is served if unset.
    pub static_dir: Option<PathBuf>,
}


#[derive(Clone)]
struct AppState {
    registry: Arc<SessionRegistry>,
    shutdown: watch::Receiver<bool>,
}

pub fn router(registry: Arc<SessionRegistry>, static_dir: Option<&Path>, shutdown: watch::Receiver<bool>) -> Router {
    let state = AppState { registry, shutdown };
    let app = Router::new().route("/ws", get(ws_handler)).with_state(state);
    match static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app.route("/", get(|| async { Html(PLACEHOLDER_INDEX) })),
    }
}

async fn ws_handler(ws: WebSocketUpgrade, State(state): State<AppState>) -> Response {
    ws.on_upgrade(move |socket| connection(socket, state)).into_response()
}

async fn connection(mut socket: WebSocket, state: AppState) {
    let mut shutdown = state.shutdown.clone();
    let mut conn = state.registry.connect();
    if *shutdown.borrow() {
        let _ = socket.send(Message::Close(None)).await;
        return;
    }
    loop {
        tokio::select! {
            incoming = socket.recv() => {
                let replies = match incoming {
                    Some(Ok(Message::Text(text))) => {
                        let registry = state.registry.clone();
                        let text = text.to_string();
                        let mut c = conn.clone();
                        // Classification can take tens of milliseconds; keep it off the reactor.
                        let (c, replies) = tokio::task::spawn_blocking(move || {
                            let r = registry.handle_text(&mut c, &text);
                            (c, r)
                        })
                        .await
                        .expect("message handler panicked");
                        conn = c;
                        replies
                    }
                    Some(Ok(Message::Binary(_))) => {
                        vec![WireMessage::error(ErrorCode::BadMessage, "binary frames are not supported")]
                    }
                    Some(Ok(Message::Ping(_) | Message::Pong(_))) => continue,
                    Some(Ok(Message::Close(_))) | Some(Err(_)) | None => break,
                };
                let mut failed = false;
                for reply in replies {
                    if socket.send(Message::Text(reply.to_json().into())).await.is_err() {
                        failed = true;
                        break;
                    }
                }
                if failed {
                    break;
                }
            }
            _ = shutdown.changed() => {
                let _ = socket.send(Message::Close(None)).await;
                break;
            }
        }
    }
    state.registry.disconnect(&mut conn);
}

/// A bound, not yet running service.
pub struct Service {
    listener: TcpListener,
    registry: Arc<SessionRegistry>,
    static_dir: Option<PathBuf>,
}

impl Service {
    pub async fn bind(addr: SocketAddr, model: Arc<ClassifierModel>, config: ServiceConfig) -> Result<Self, ServiceError> {
        let registry = Arc::new(SessionRegistry::new(model, config.segmenter)?);
        let listener = TcpListener::bind(addr)
            .await
            .map_err(|source| ServiceError::Bind { addr, source })?;
        Ok(Service {
            listener,
            registry,
            static_dir: config.static_dir,
        })
    }

    pub fn local_addr(&self) -> std::io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    pub fn registry(&self) -> Arc<SessionRegistry> {
        self.registry.clone()
    }

    /// Serves until `shutdown` resolves, then closes every open socket.
    pub async fn run(self, shutdown: BoxFuture<'static, ()>) -> Result<(), ServiceError> {
        let (tx, rx) = watch::channel(false);
        let app = router(self.registry.clone(), self.static_dir.as_deref(), rx);
        tracing::info!(addr = %self.listener.local_addr()?, "listening");
        axum::serve(self.listener, app)
            .with_graceful_shutdown(async move {
                shutdown.await;
                tracing::info!("shutting down");
                let _ = tx.send(true);
            })
            .await?;
        Ok(())
    }
}

/// Loads the model at `model_path` and serves on `addr` until Ctrl-C.
pub async fn run_service(addr: SocketAddr, model_path: &Path, config: ServiceConfig) -> Result<(), ServiceError> {
    let model = Arc::new(ClassifierModel::load(model_path)?);
    let service = Service::bind(addr, model, config).await?;
    service
        .run(Box::pin(async {
            let _ = tokio::signal::ctrl_c().await;
        }))
        .await
}
