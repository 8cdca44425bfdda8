//! One client session: decodes frames, keeps the selection names and
//! forwards work to a coordinator running on its own thread.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;

use selcube_core::coordinator::{Coordinator, CoordinatorOptions, QueryPath};
use selcube_core::data::QueryResult;
use selcube_core::executor::{ExecError, Executor, Priority};
use selcube_core::query::ClientViewDescriptor;
use selcube_core::runner::{SessionEvent, SessionHandle, SessionRunner};
use selcube_core::selection::{Clause, SelectionConfig, SelectionId};
use selcube_core::sql::parse_query;
use serde::Serialize;

use crate::protocol::{self, ClausePayload, ClientMessage};

/// Server-wide counters, shared by every session.
#[derive(Debug, Default)]
pub struct ServerStats {
    pub sessions_opened: AtomicU64,
    pub sessions_active: AtomicUsize,
    pub frames_in: AtomicU64,
    pub executor_calls: AtomicU64,
    pub create_statements: AtomicU64,
    pub cache_results: AtomicU64,
    pub optimized_results: AtomicU64,
    pub direct_results: AtomicU64,
    pub errors: AtomicU64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct StatsSnapshot {
    pub sessions_opened: u64,
    pub sessions_active: usize,
    pub frames_in: u64,
    pub executor_calls: u64,
    pub create_statements: u64,
    pub cache_results: u64,
    pub optimized_results: u64,
    pub direct_results: u64,
    pub errors: u64,
}

impl ServerStats {
    pub fn snapshot(&self) -> StatsSnapshot {
        let get = |a: &AtomicU64| a.load(Ordering::Relaxed);
        StatsSnapshot {
            sessions_opened: get(&self.sessions_opened),
            sessions_active: self.sessions_active.load(Ordering::Relaxed),
            frames_in: get(&self.frames_in),
            executor_calls: get(&self.executor_calls),
            create_statements: get(&self.create_statements),
            cache_results: get(&self.cache_results),
            optimized_results: get(&self.optimized_results),
            direct_results: get(&self.direct_results),
            errors: get(&self.errors),
        }
    }

    fn bump(a: &AtomicU64) {
        a.fetch_add(1, Ordering::Relaxed);
    }
}

/// Counts calls and `CREATE TABLE` statements on the way to `inner`.
pub struct CountingExecutor {
    inner: Arc<dyn Executor>,
    stats: Arc<ServerStats>,
}

impl CountingExecutor {
    pub fn new(inner: Arc<dyn Executor>, stats: Arc<ServerStats>) -> Self {
        CountingExecutor { inner, stats }
    }
}

impl Executor for CountingExecutor {
    fn submit(&self, sql: &str, priority: Priority) -> Result<QueryResult, ExecError> {
        ServerStats::bump(&self.stats.executor_calls);
        let head: String = sql.trim_start().chars().take(12).collect();
        if head.eq_ignore_ascii_case("CREATE TABLE") {
            ServerStats::bump(&self.stats.create_statements);
        }
        self.inner.submit(sql, priority)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SessionOptions {
    pub coordinator: CoordinatorOptions,
    /// Write zero for timing fields so replays produce identical bytes.
    pub stable_frames: bool,
}

pub type Outbox = Arc<dyn Fn(String) + Send + Sync>;

pub struct Session {
    handle: SessionHandle,
    selections: HashMap<String, SelectionId>,
    options: SessionOptions,
    stats: Arc<ServerStats>,
    out: Outbox,
}

impl Session {
    pub fn new(executor: Arc<dyn Executor>, options: SessionOptions, stats: Arc<ServerStats>, out: Outbox) -> Self {
        let coordinator = Coordinator::new(executor, options.coordinator);
        let sink_out = out.clone();
        let sink_stats = stats.clone();
        let stable = options.stable_frames;
        let handle = SessionRunner::spawn(coordinator, move |ev| {
            let frame = match ev {
                SessionEvent::Result { tag, delivery } => {
                    let counter = match (&delivery.result, delivery.path) {
                        (Err(_), _) => &sink_stats.errors,
                        (Ok(_), QueryPath::Cache) => &sink_stats.cache_results,
                        (Ok(_), QueryPath::Optimized) => &sink_stats.optimized_results,
                        (Ok(_), QueryPath::Direct) => &sink_stats.direct_results,
                    };
                    ServerStats::bump(counter);
                    protocol::delivery_frame(tag, &delivery, stable)
                }
                SessionEvent::Error { tag, view, message } => {
                    ServerStats::bump(&sink_stats.errors);
                    protocol::error_frame(Some(tag), view.as_deref(), &message)
                }
                SessionEvent::Ack { tag } => protocol::ack_frame(tag),
            };
            sink_out(frame);
        });
        stats.sessions_opened.fetch_add(1, Ordering::Relaxed);
        stats.sessions_active.fetch_add(1, Ordering::Relaxed);
        Session {
            handle,
            selections: HashMap::new(),
            options,
            stats,
            out,
        }
    }

    fn error(&self, id: Option<u64>, view: Option<&str>, message: &str) {
        ServerStats::bump(&self.stats.errors);
        (self.out)(protocol::error_frame(id, view, message));
    }

    /// Handles one text frame. Responses may arrive later, from the runner.
    pub fn handle_text(&mut self, text: &str) {
        ServerStats::bump(&self.stats.frames_in);
        match protocol::decode_client(text) {
            Ok((id, msg)) => self.handle(id, msg),
            Err(e) => self.error(e.id, None, &e.message),
        }
    }

    pub fn handle(&mut self, id: u64, msg: ClientMessage) {
        match msg {
            ClientMessage::Hello => {
                let c = self.options.coordinator;
                (self.out)(protocol::hello_frame(id, c.optimize, c.cache_entries));
            }
            ClientMessage::RegisterView(rv) => {
                let query = match parse_query(&rv.sql) {
                    Ok(q) => q,
                    Err(e) => return self.error(Some(id), Some(&rv.id), &e.to_string()),
                };
                let mut view = ClientViewDescriptor::new(&rv.id, query).with_filter_stable(rv.filter_stable);
                if let Some(bins) = rv.client_bins {
                    view = view.with_client_bins(bins);
                }
                if let Some(s) = rv.selection {
                    view = view.with_selection(self.selection(&s.name, s.config));
                }
                self.handle.register_view(id, view);
            }
            ClientMessage::UnregisterView { id: view } => self.handle.unregister_view(id, &view),
            ClientMessage::ClauseUpdate(p) => {
                if let Some((sel, clause)) = self.clause(id, p) {
                    self.handle.update(id, sel, clause);
                }
            }
            ClientMessage::Activate(p) => {
                if let Some((sel, clause)) = self.clause(id, p) {
                    self.handle.activate(id, sel, clause);
                }
            }
            ClientMessage::ClauseRemove(r) => match self.selections.get(&r.selection) {
                Some(&sel) => self.handle.remove(id, sel, &r.source),
                None => self.error(Some(id), None, &format!("unknown selection {:?}", r.selection)),
            },
            ClientMessage::Prefetch { sql } => {
                self.handle.prefetch(sql);
                (self.out)(protocol::ack_frame(id));
            }
            ClientMessage::Stats => {
                self.handle.sync();
                (self.out)(protocol::stats_frame(id, &self.handle.stats()));
            }
        }
    }

    /// Named selections are created on first reference.
    fn selection(&mut self, name: &str, config: SelectionConfig) -> SelectionId {
        if let Some(&s) = self.selections.get(name) {
            return s;
        }
        let s = self.handle.create_selection(config);
        self.selections.insert(name.to_string(), s);
        s
    }

    fn clause(&self, id: u64, p: ClausePayload) -> Option<(SelectionId, Clause)> {
        let Some(&sel) = self.selections.get(&p.selection) else {
            self.error(Some(id), None, &format!("unknown selection {:?}", p.selection));
            return None;
        };
        let predicate = match p.predicate.compile() {
            Ok(e) => e,
            Err(e) => {
                self.error(Some(id), None, &e);
                return None;
            }
        };
        let mut clause = Clause::new(&p.source, predicate).with_views(p.views);
        clause.meta = p.meta;
        Some((sel, clause))
    }

    /// Waits until all earlier work has been dispatched.
    pub fn sync(&self) {
        self.handle.sync();
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        self.stats.sessions_active.fetch_sub(1, Ordering::Relaxed);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use selcube_core::data::Column;
    use selcube_engine::Database;
    use serde_json::Value;
    use std::sync::Mutex;

    fn fixture() -> (Session, Arc<Mutex<Vec<Value>>>, Arc<ServerStats>) {
        let db = Database::new();
        db.register_table(
            "t",
            vec![
                Column::float("a", (0..100).map(f64::from).collect()),
                Column::float("b", (0..100).map(|i| f64::from(i % 10)).collect()),
            ],
        )
        .unwrap();
        let stats = Arc::new(ServerStats::default());
        let exec = Arc::new(CountingExecutor::new(Arc::new(db), stats.clone()));
        let frames = Arc::new(Mutex::new(Vec::new()));
        let sink = frames.clone();
        let s = Session::new(
            exec,
            SessionOptions::default(),
            stats.clone(),
            Arc::new(move |f: String| sink.lock().unwrap().push(serde_json::from_str(&f).unwrap())),
        );
        (s, frames, stats)
    }

    #[test]
    fn register_update_and_errors() {
        let (mut s, frames, stats) = fixture();
        s.handle_text(
            r#"{"kind":"registerView","id":1,"payload":{"id":"b","sql":"SELECT b AS x, COUNT(*) AS y FROM t GROUP BY x",
               "selection":{"name":"brush","cross":true}}}"#,
        );
        s.sync();
        s.handle_text(
            r#"{"kind":"clauseUpdate","id":2,"payload":{"selection":"brush","source":"a",
               "predicate":{"op":"lt","field":"a","value":50}}}"#,
        );
        s.handle_text(
            r#"{"kind":"clauseUpdate","id":3,"payload":{"selection":"nope","source":"a",
               "predicate":{"op":"lt","field":"a","value":50}}}"#,
        );
        s.handle_text("not json");
        s.sync();
        let f = frames.lock().unwrap().clone();
        assert_eq!(f.len(), 4, "{f:?}");
        assert_eq!((f[0]["kind"].as_str(), f[0]["id"].as_u64()), (Some("result"), Some(1)));
        assert_eq!(f[0]["payload"]["result"]["rowCount"], 10);
        // the unknown selection fails synchronously, before the update's result
        assert_eq!((f[1]["kind"].as_str(), f[1]["id"].as_u64()), (Some("error"), Some(3)));
        assert_eq!((f[2]["kind"].as_str(), f[2]["id"].as_u64()), (Some("error"), None));
        assert_eq!((f[3]["kind"].as_str(), f[3]["id"].as_u64()), (Some("result"), Some(2)));
        let y: i64 = f[3]["payload"]["result"]["columns"]["y"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_i64().unwrap())
            .sum();
        assert_eq!(y, 50);
        let snap = stats.snapshot();
        assert_eq!(snap.frames_in, 4);
        assert_eq!(snap.errors, 2);
        assert_eq!(snap.sessions_active, 1);
        drop(s);
        assert_eq!(stats.snapshot().sessions_active, 0);
    }

    #[test]
    fn bad_sql_names_the_view() {
        let (mut s, frames, _) = fixture();
        s.handle_text(r#"{"kind":"registerView","id":1,"payload":{"id":"v","sql":"SELEC nothing"}}"#);
        s.sync();
        let f = frames.lock().unwrap();
        assert_eq!(f[0]["kind"], "error");
        assert_eq!(f[0]["payload"]["view"], "v");
    }
}
