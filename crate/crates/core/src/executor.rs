//! Database executor abstraction and test wrappers.

use std::sync::{Arc, Condvar, Mutex};

use thiserror::Error;

use crate::data::QueryResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Priority {
    Interactive,
    Low,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct ExecError(pub String);

/// Runs SQL text and returns a columnar result.
pub trait Executor: Send + Sync {
    fn submit(&self, sql: &str, priority: Priority) -> Result<QueryResult, ExecError>;
}

impl<E: Executor + ?Sized> Executor for Arc<E> {
    fn submit(&self, sql: &str, priority: Priority) -> Result<QueryResult, ExecError> {
        (**self).submit(sql, priority)
    }
}

impl<E: Executor + ?Sized> Executor for Box<E> {
    fn submit(&self, sql: &str, priority: Priority) -> Result<QueryResult, ExecError> {
        (**self).submit(sql, priority)
    }
}

/// Logs every statement reaching the wrapped executor.
pub struct RecordingExecutor<E> {
    inner: E,
    log: Mutex<Vec<(String, Priority)>>,
}

impl<E: Executor> RecordingExecutor<E> {
    pub fn new(inner: E) -> Self {
        RecordingExecutor {
            inner,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn log(&self) -> Vec<(String, Priority)> {
        self.log.lock().expect("log lock").clone()
    }

    pub fn statements(&self) -> Vec<String> {
        self.log().into_iter().map(|(s, _)| s).collect()
    }

    /// Statements starting with `prefix` (case-sensitive).
    pub fn count_prefix(&self, prefix: &str) -> usize {
        self.log().iter().filter(|(s, _)| s.starts_with(prefix)).count()
    }

    pub fn clear(&self) {
        self.log.lock().expect("log lock").clear();
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }
}

impl<E: Executor> Executor for RecordingExecutor<E> {
    fn submit(&self, sql: &str, priority: Priority) -> Result<QueryResult, ExecError> {
        self.log.lock().expect("log lock").push((sql.to_string(), priority));
        self.inner.submit(sql, priority)
    }
}

#[derive(Default)]
struct GateState {
    closed: bool,
    waiting: usize,
    entered: usize,
}

/// Holds statements at the door while closed, so tests can keep one
/// update in flight.
pub struct GatedExecutor<E> {
    inner: E,
    state: Mutex<GateState>,
    cv: Condvar,
}

impl<E: Executor> GatedExecutor<E> {
    pub fn new(inner: E) -> Self {
        GatedExecutor {
            inner,
            state: Mutex::new(GateState::default()),
            cv: Condvar::new(),
        }
    }

    pub fn close(&self) {
        self.state.lock().expect("gate lock").closed = true;
    }

    pub fn open(&self) {
        self.state.lock().expect("gate lock").closed = false;
        self.cv.notify_all();
    }

    /// Blocks until some statement is waiting at the closed gate.
    pub fn wait_for_waiter(&self) {
        let mut st = self.state.lock().expect("gate lock");
        while st.waiting == 0 {
            st = self.cv.wait(st).expect("gate lock");
        }
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }

    /// Number of statements that have entered the executor.
    pub fn entered(&self) -> usize {
        self.state.lock().expect("gate lock").entered
    }
}

impl<E: Executor> Executor for GatedExecutor<E> {
    fn submit(&self, sql: &str, priority: Priority) -> Result<QueryResult, ExecError> {
        {
            let mut st = self.state.lock().expect("gate lock");
            st.entered += 1;
            if st.closed {
                st.waiting += 1;
                self.cv.notify_all();
                while st.closed {
                    st = self.cv.wait(st).expect("gate lock");
                }
                st.waiting -= 1;
            }
        }
        self.inner.submit(sql, priority)
    }
}

/// Answers every statement with an empty result.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullExecutor;

impl Executor for NullExecutor {
    fn submit(&self, _sql: &str, _priority: Priority) -> Result<QueryResult, ExecError> {
        Ok(QueryResult::empty())
    }
}
