//! HTTP and WebSocket endpoints.

use std::net::SocketAddr;
use std::path::{Component, Path, PathBuf};
use std::sync::Arc;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::http::{header, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use futures::{SinkExt, StreamExt};
use selcube_core::coordinator::CoordinatorOptions;
use selcube_core::executor::Executor;
use selcube_core::planner::SCHEMA;
use selcube_engine::Database;
use serde_json::json;
use tokio::net::TcpListener;
use tokio::sync::mpsc;

use crate::protocol;
use crate::session::{CountingExecutor, ServerStats, Session, SessionOptions};

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub host: String,
    pub port: u16,
    pub options: SessionOptions,
    /// Directory served at `/`; a built-in page is used when absent.
    pub assets: Option<PathBuf>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            host: "127.0.0.1".into(),
            port: 8080,
            options: SessionOptions {
                coordinator: CoordinatorOptions::default(),
                stable_frames: false,
            },
            assets: None,
        }
    }
}

pub struct AppState {
    db: Arc<Database>,
    executor: Arc<dyn Executor>,
    stats: Arc<ServerStats>,
    config: ServerConfig,
}

impl AppState {
    pub fn new(db: Arc<Database>, config: ServerConfig) -> Arc<AppState> {
        let stats = Arc::new(ServerStats::default());
        let executor = Arc::new(CountingExecutor::new(db.clone(), stats.clone()));
        Arc::new(AppState {
            db,
            executor,
            stats,
            config,
        })
    }

    pub fn stats(&self) -> &ServerStats {
        &self.stats
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/session", get(session))
        .route("/healthz", get(healthz))
        .route("/stats", get(stats))
        .fallback(get(asset))
        .with_state(state)
}

/// Binds and serves in the background; returns the bound address.
pub async fn start(db: Arc<Database>, config: ServerConfig) -> std::io::Result<(SocketAddr, tokio::task::JoinHandle<()>)> {
    let listener = TcpListener::bind((config.host.as_str(), config.port)).await?;
    let addr = listener.local_addr()?;
    let app = router(AppState::new(db, config));
    let task = tokio::spawn(async move {
        if let Err(e) = axum::serve(listener, app).await {
            log::error!("server stopped: {e}");
        }
    });
    Ok((addr, task))
}

async fn healthz() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

async fn stats(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    let mut v = serde_json::to_value(state.stats.snapshot()).expect("json");
    let tables = state.db.table_names();
    let prefix = format!("{SCHEMA}.");
    v["materializedTables"] = json!(tables.iter().filter(|t| t.starts_with(&prefix)).count());
    v["tables"] = json!(tables.len());
    v["optimize"] = json!(state.config.options.coordinator.optimize);
    v["cacheCapacity"] = json!(state.config.options.coordinator.cache_entries);
    Json(v)
}

async fn session(ws: WebSocketUpgrade, State(state): State<Arc<AppState>>) -> Response {
    ws.on_upgrade(move |socket| run_socket(socket, state))
}

async fn run_socket(socket: WebSocket, state: Arc<AppState>) {
    let (mut tx, mut rx) = socket.split();
    let (out_tx, mut out_rx) = mpsc::unbounded_channel::<String>();
    let (in_tx, in_rx) = std::sync::mpsc::channel::<String>();

    // the coordinator API is blocking, so the session lives on a thread
    let front_out = out_tx.clone();
    let exec = state.executor.clone();
    let stats = state.stats.clone();
    let options = state.config.options;
    let front = std::thread::Builder::new().name("session-front".into()).spawn(move || {
        let out = Arc::new(move |f: String| {
            let _ = front_out.send(f);
        });
        let mut s = Session::new(exec, options, stats, out);
        for text in in_rx {
            s.handle_text(&text);
        }
    });
    if let Err(e) = front {
        log::error!("cannot start session: {e}");
        return;
    }

    let writer = tokio::spawn(async move {
        while let Some(f) = out_rx.recv().await {
            if tx.send(Message::Text(f.into())).await.is_err() {
                break;
            }
        }
        let _ = tx.close().await;
    });

    while let Some(Ok(msg)) = rx.next().await {
        match msg {
            Message::Text(t) => {
                if in_tx.send(t.to_string()).is_err() {
                    break;
                }
            }
            Message::Binary(_) => {
                let _ = out_tx.send(protocol::error_frame(None, None, "binary frames are not supported"));
            }
            Message::Close(_) => break,
            _ => {}
        }
    }
    drop(in_tx);
    drop(out_tx);
    let _ = writer.await;
}

const INDEX: &str = r#"<!doctype html>
<html><head><meta charset="utf-8"><title>selcube</title></head>
<body><h1>selcube session server</h1>
<p>WebSocket endpoint: <code>/session</code>. Health: <a href="/healthz">/healthz</a>. Counters: <a href="/stats">/stats</a>.</p>
<p>Start the server with <code>--assets &lt;dir&gt;</code> to serve the dashboard here.</p>
</body></html>
"#;

fn content_type(p: &Path) -> &'static str {
    match p.extension().and_then(|e| e.to_str()).unwrap_or("") {
        "html" => "text/html; charset=utf-8",
        "js" | "mjs" => "text/javascript; charset=utf-8",
        "css" => "text/css; charset=utf-8",
        "json" | "map" => "application/json",
        "svg" => "image/svg+xml",
        "png" => "image/png",
        "ico" => "image/x-icon",
        "wasm" => "application/wasm",
        _ => "application/octet-stream",
    }
}

/// Maps a request path under `root`, refusing anything but plain components.
fn resolve(root: &Path, uri_path: &str) -> Option<PathBuf> {
    let rel = uri_path.trim_start_matches('/');
    let rel = if rel.is_empty() { "index.html" } else { rel };
    let mut out = root.to_path_buf();
    for c in Path::new(rel).components() {
        match c {
            Component::Normal(s) => out.push(s),
            _ => return None,
        }
    }
    Some(out)
}

async fn asset(State(state): State<Arc<AppState>>, uri: Uri) -> Response {
    let Some(root) = &state.config.assets else {
        return if uri.path() == "/" || uri.path() == "/index.html" {
            ([(header::CONTENT_TYPE, "text/html; charset=utf-8")], INDEX).into_response()
        } else {
            StatusCode::NOT_FOUND.into_response()
        };
    };
    let Some(path) = resolve(root, uri.path()) else {
        return StatusCode::BAD_REQUEST.into_response();
    };
    match tokio::fs::read(&path).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, content_type(&path))], bytes).into_response(),
        Err(_) => StatusCode::NOT_FOUND.into_response(),
    }
}
