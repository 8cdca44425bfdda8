//! End-to-end sessions over real sockets.

use std::path::Path;
use std::sync::Arc;

use futures::{SinkExt, StreamExt};
use selcube_core::coordinator::CoordinatorOptions;
use selcube_core::data::{compare_results, Column};
use selcube_engine::Database;
use selcube_server::protocol::decode_result;
use selcube_server::{ServerConfig, SessionOptions};
use serde_json::{json, Value};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

type Ws = WebSocketStream<MaybeTlsStream<TcpStream>>;

fn flights(db: &Database, n: usize) {
    // offset so no value sits on a pixel boundary of the brush scale
    let delay: Vec<f64> = (0..n).map(|i| ((i * 7919) % 2500) as f64 / 10.0 - 59.987).collect();
    let time: Vec<f64> = (0..n).map(|i| ((i * 104_729) % 2400) as f64 / 100.0).collect();
    let dist: Vec<f64> = (0..n).map(|i| 50.0 + ((i * 1_299_709) % 29_500) as f64 / 10.0).collect();
    db.register_table(
        "flights",
        vec![Column::float("delay", delay), Column::float("time", time), Column::float("distance", dist)],
    )
    .unwrap();
}

fn config(stable: bool) -> ServerConfig {
    ServerConfig {
        port: 0,
        options: SessionOptions {
            coordinator: CoordinatorOptions::default(),
            stable_frames: stable,
        },
        ..ServerConfig::default()
    }
}

async fn connect(addr: std::net::SocketAddr) -> Ws {
    connect_async(format!("ws://{addr}/session")).await.unwrap().0
}

async fn send(ws: &mut Ws, kind: &str, id: u64, payload: Value) {
    let f = json!({ "kind": kind, "id": id, "payload": payload });
    ws.send(Message::Text(f.to_string().into())).await.unwrap();
}

async fn next_text(ws: &mut Ws) -> String {
    loop {
        match ws.next().await.expect("socket open").unwrap() {
            Message::Text(t) => return t.to_string(),
            Message::Close(_) => panic!("closed"),
            _ => {}
        }
    }
}

/// Sends a stats request and returns every frame up to its reply.
async fn barrier(ws: &mut Ws, id: u64) -> Vec<String> {
    send(ws, "stats", id, json!({})).await;
    let mut out = Vec::new();
    loop {
        let t = next_text(ws).await;
        let v: Value = serde_json::from_str(&t).unwrap();
        if v["kind"] == "stats" && v["id"] == id {
            return out;
        }
        out.push(t);
    }
}

async fn http_get(addr: std::net::SocketAddr, path: &str) -> (u16, String) {
    let mut s = TcpStream::connect(addr).await.unwrap();
    s.write_all(format!("GET {path} HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n").as_bytes())
        .await
        .unwrap();
    let mut buf = String::new();
    s.read_to_string(&mut buf).await.unwrap();
    let status = buf[9..12].parse().unwrap();
    let body = buf.split_once("\r\n\r\n").map(|(_, b)| b.to_string()).unwrap_or_default();
    (status, body)
}

const VIEWS: [(&str, &str); 3] = [
    ("delay", "SELECT 10 * FLOOR(delay / 10) AS x, COUNT(*) AS y FROM flights GROUP BY x"),
    ("time", "SELECT FLOOR(time) AS x, COUNT(*) AS y FROM flights GROUP BY x"),
    ("distance", "SELECT 100 * FLOOR(distance / 100) AS x, COUNT(*) AS y FROM flights GROUP BY x"),
];

fn scale() -> Value {
    json!({ "type": "linear", "domain": [-60, 190], "range": [0, 500] })
}

fn brush(lo: f64, hi: f64) -> Value {
    json!({
        "selection": "brush", "source": "delay", "views": ["delay"],
        "predicate": { "op": "between", "field": "delay", "range": [lo, hi] },
        "meta": { "type": "interval", "pixelSize": 1, "bin": "FLOOR", "scales": [scale()] }
    })
}

async fn register_all(ws: &mut Ws) -> Vec<Value> {
    let mut out = Vec::new();
    for (i, (id, sql)) in VIEWS.iter().enumerate() {
        send(
            ws,
            "registerView",
            i as u64 + 1,
            json!({ "id": id, "sql": sql, "filterStable": true,
                    "selection": { "name": "brush", "resolver": "intersect", "cross": true } }),
        )
        .await;
        out.push(serde_json::from_str(&next_text(ws).await).unwrap());
    }
    out
}

fn frames(texts: &[String]) -> Vec<Value> {
    texts.iter().map(|t| serde_json::from_str(t).unwrap()).collect()
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn brushing_session_matches_direct_queries() {
    let db = Arc::new(Database::new());
    flights(&db, 20_000);
    let (addr, _task) = selcube_server::start(db.clone(), config(false)).await.unwrap();
    let mut ws = connect(addr).await;

    send(&mut ws, "hello", 100, json!({})).await;
    let hello: Value = serde_json::from_str(&next_text(&mut ws).await).unwrap();
    assert_eq!(hello["kind"], "hello");
    assert_eq!(hello["payload"]["optimize"], true);

    let initial = register_all(&mut ws).await;
    for (f, (id, _)) in initial.iter().zip(VIEWS) {
        assert_eq!(f["kind"], "result");
        assert_eq!(f["payload"]["view"], id);
    }

    send(&mut ws, "activate", 200, brush(0.0, 10.0)).await;
    let ack: Value = serde_json::from_str(&next_text(&mut ws).await).unwrap();
    assert_eq!((ack["kind"].as_str(), ack["id"].as_u64()), (Some("ack"), Some(200)));

    let mut seq = 300;
    for (lo, hi) in [(0.0, 30.0), (-20.0, 75.5), (120.0, 121.0)] {
        send(&mut ws, "clauseUpdate", seq, brush(lo, hi)).await;
        let got = frames(&barrier(&mut ws, seq + 1).await);
        // cross-filtering: the brushed view is not re-queried
        let views: Vec<&str> = got.iter().map(|f| f["payload"]["view"].as_str().unwrap()).collect();
        assert_eq!(views, ["time", "distance"]);
        for f in &got {
            assert_eq!(f["kind"], "result");
            assert_eq!(f["id"], seq);
            assert_eq!(f["payload"]["path"], "optimized");
            let view = f["payload"]["view"].as_str().unwrap();
            let sql = VIEWS.iter().find(|v| v.0 == view).unwrap().1;
            let direct = db
                .execute(&sql.replace("GROUP BY", &format!("WHERE delay BETWEEN {lo} AND {hi} GROUP BY")))
                .unwrap();
            let r = decode_result(&f["payload"]["result"]).unwrap();
            compare_results(&direct, &r, &[0], 0.0).unwrap_or_else(|e| panic!("{view} [{lo},{hi}]: {e}"));
        }
        seq += 2;
    }

    send(&mut ws, "clauseRemove", 900, json!({ "selection": "brush", "source": "delay" })).await;
    let got = frames(&barrier(&mut ws, 901).await);
    assert_eq!(got.len(), 2);
    for (f, (_, sql)) in got.iter().zip(&VIEWS[1..]) {
        let r = decode_result(&f["payload"]["result"]).unwrap();
        compare_results(&db.execute(sql).unwrap(), &r, &[0], 0.0).unwrap();
    }

    let (status, body) = http_get(addr, "/stats").await;
    assert_eq!(status, 200);
    let stats: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(stats["sessionsActive"], 1);
    assert_eq!(stats["materializedTables"], 2);
    assert_eq!(stats["createStatements"], 2);
    assert_eq!(stats["optimizedResults"], 6);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn malformed_messages_get_error_frames_and_the_connection_survives() {
    let db = Arc::new(Database::new());
    flights(&db, 100);
    let (addr, _task) = selcube_server::start(db, config(false)).await.unwrap();
    let mut ws = connect(addr).await;

    ws.send(Message::Text("{not json".into())).await.unwrap();
    let e: Value = serde_json::from_str(&next_text(&mut ws).await).unwrap();
    assert_eq!(e["kind"], "error");
    assert_eq!(e["id"], Value::Null);

    send(&mut ws, "teleport", 5, json!({})).await;
    let e: Value = serde_json::from_str(&next_text(&mut ws).await).unwrap();
    assert_eq!((e["kind"].as_str(), e["id"].as_u64()), (Some("error"), Some(5)));

    send(
        &mut ws,
        "clauseUpdate",
        6,
        json!({ "selection": "nobody", "source": "s", "predicate": { "op": "eq", "field": "delay", "value": 1 } }),
    )
    .await;
    let e: Value = serde_json::from_str(&next_text(&mut ws).await).unwrap();
    assert_eq!((e["kind"].as_str(), e["id"].as_u64()), (Some("error"), Some(6)));

    send(&mut ws, "registerView", 7, json!({ "id": "v", "sql": "SELECT COUNT(*) AS n FROM nowhere" })).await;
    let e: Value = serde_json::from_str(&next_text(&mut ws).await).unwrap();
    assert_eq!((e["kind"].as_str(), e["id"].as_u64()), (Some("error"), Some(7)));
    assert_eq!(e["payload"]["view"], "v");

    send(&mut ws, "hello", 8, json!({})).await;
    let h: Value = serde_json::from_str(&next_text(&mut ws).await).unwrap();
    assert_eq!((h["kind"].as_str(), h["id"].as_u64()), (Some("hello"), Some(8)));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn health_and_static_index() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<p>dash</p>").unwrap();
    std::fs::write(dir.path().join("app.js"), "console.log(1)").unwrap();
    let db = Arc::new(Database::new());
    let (addr, _task) = selcube_server::start(db.clone(), config(false)).await.unwrap();
    assert_eq!(http_get(addr, "/healthz").await, (200, r#"{"status":"ok"}"#.to_string()));
    let (status, body) = http_get(addr, "/").await;
    assert_eq!(status, 200);
    assert!(body.contains("/session"));

    let cfg = ServerConfig {
        assets: Some(dir.path().to_path_buf()),
        ..config(false)
    };
    let (addr, _task) = selcube_server::start(db, cfg).await.unwrap();
    assert_eq!(http_get(addr, "/").await, (200, "<p>dash</p>".to_string()));
    assert_eq!(http_get(addr, "/app.js").await.0, 200);
    assert_eq!(http_get(addr, "/missing.css").await.0, 404);
}

async fn replay(db: Arc<Database>) -> Vec<String> {
    let (addr, _task) = selcube_server::start(db, config(true)).await.unwrap();
    let mut ws = connect(addr).await;
    let mut out: Vec<String> = Vec::new();
    for (i, (id, sql)) in VIEWS.iter().enumerate() {
        let payload = json!({ "id": id, "sql": sql, "selection": { "name": "brush", "cross": true } });
        send(&mut ws, "registerView", i as u64, payload).await;
        out.extend(barrier(&mut ws, 50 + i as u64).await);
    }
    send(&mut ws, "activate", 10, brush(0.0, 1.0)).await;
    out.extend(barrier(&mut ws, 11).await);
    let mut id = 12;
    for step in 0..25 {
        let lo = -60.0 + 5.0 * f64::from(step);
        send(&mut ws, "clauseUpdate", id, brush(lo, lo + 40.0)).await;
        out.extend(barrier(&mut ws, id + 1).await);
        id += 2;
    }
    out
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn replayed_trace_yields_identical_bytes() {
    let a = Arc::new(Database::new());
    flights(&a, 30_000);
    let b = Arc::new(Database::new());
    flights(&b, 30_000);
    let first = replay(a).await;
    let second = replay(b).await;
    assert_eq!(first.len(), 3 + 1 + 25 * 2);
    assert_eq!(first, second);
}

async fn one_session(dir: &Path) -> Value {
    let db = Arc::new(Database::open(dir).unwrap());
    let (addr, _task) = selcube_server::start(db, config(false)).await.unwrap();
    let mut ws = connect(addr).await;
    register_all(&mut ws).await;
    send(&mut ws, "clauseUpdate", 20, brush(10.0, 20.0)).await;
    barrier(&mut ws, 21).await;
    let (_, body) = http_get(addr, "/stats").await;
    serde_json::from_str(&body).unwrap()
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn materialized_tables_are_created_once_per_database() {
    let dir = tempfile::tempdir().unwrap();
    flights(&Database::open(dir.path()).unwrap(), 5_000);
    let first = one_session(dir.path()).await;
    assert_eq!(first["createStatements"], 2);
    // a fresh process on the same directory finds the tables on disk
    let second = one_session(dir.path()).await;
    assert_eq!(second["createStatements"], 0);
    assert_eq!(second["materializedTables"], 2);
}
