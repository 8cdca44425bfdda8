//! A coordinator on its own thread, fed through a channel.
//!
//! Commands are handled in arrival order. After each round of work the
//! channel is drained: clause updates are applied to the selection graph
//! at once, but each selection is dispatched at most once per round, so a
//! burst arriving during an in-flight update collapses to its last state.
//! Low-priority work runs only while the channel is empty.

use std::sync::mpsc::{self, Receiver, Sender, TryRecvError};
use std::thread::JoinHandle;

use crate::coordinator::{CoordError, Coordinator, CoordinatorStats, Delivery};
use crate::query::ClientViewDescriptor;
use crate::selection::{Clause, SelectionConfig, SelectionId};

/// Correlation id supplied by the caller and echoed on output events.
pub type Tag = u64;

#[derive(Debug, Clone)]
pub enum SessionEvent {
    Result { tag: Tag, delivery: Delivery },
    Error { tag: Tag, view: Option<String>, message: String },
    Ack { tag: Tag },
}

enum Command {
    CreateSelection(SelectionConfig, Sender<SelectionId>),
    Include(SelectionId, SelectionId, Sender<Result<(), CoordError>>),
    Register(Tag, ClientViewDescriptor),
    Unregister(Tag, String),
    Update(Tag, SelectionId, Clause),
    Remove(Tag, SelectionId, String),
    Activate(Tag, SelectionId, Clause),
    Prefetch(Vec<String>),
    Stats(Sender<CoordinatorStats>),
    Sync(Sender<()>),
    Shutdown,
}

/// Handle to a running session. Dropping it stops the thread.
pub struct SessionHandle {
    tx: Sender<Command>,
    thread: Option<JoinHandle<Coordinator>>,
}

pub struct SessionRunner;

impl SessionRunner {
    pub fn spawn<F>(coordinator: Coordinator, sink: F) -> SessionHandle
    where
        F: FnMut(SessionEvent) + Send + 'static,
    {
        let (tx, rx) = mpsc::channel();
        let thread = std::thread::Builder::new()
            .name("session".into())
            .spawn(move || run(coordinator, rx, sink))
            .expect("spawn session thread");
        SessionHandle {
            tx,
            thread: Some(thread),
        }
    }
}

impl SessionHandle {
    fn send(&self, c: Command) {
        // a closed channel means the session already stopped
        let _ = self.tx.send(c);
    }

    pub fn create_selection(&self, config: SelectionConfig) -> SelectionId {
        let (tx, rx) = mpsc::channel();
        self.send(Command::CreateSelection(config, tx));
        rx.recv().expect("session alive")
    }

    pub fn include(&self, downstream: SelectionId, upstream: SelectionId) -> Result<(), CoordError> {
        let (tx, rx) = mpsc::channel();
        self.send(Command::Include(downstream, upstream, tx));
        rx.recv().expect("session alive")
    }

    pub fn register_view(&self, tag: Tag, view: ClientViewDescriptor) {
        self.send(Command::Register(tag, view));
    }

    pub fn unregister_view(&self, tag: Tag, id: &str) {
        self.send(Command::Unregister(tag, id.to_string()));
    }

    pub fn update(&self, tag: Tag, sel: SelectionId, clause: Clause) {
        self.send(Command::Update(tag, sel, clause));
    }

    pub fn remove(&self, tag: Tag, sel: SelectionId, source: &str) {
        self.send(Command::Remove(tag, sel, source.to_string()));
    }

    pub fn activate(&self, tag: Tag, sel: SelectionId, example: Clause) {
        self.send(Command::Activate(tag, sel, example));
    }

    pub fn prefetch(&self, queries: Vec<String>) {
        self.send(Command::Prefetch(queries));
    }

    pub fn stats(&self) -> CoordinatorStats {
        let (tx, rx) = mpsc::channel();
        self.send(Command::Stats(tx));
        rx.recv().unwrap_or_default()
    }

    /// Returns once everything sent before it has been handled and dispatched.
    pub fn sync(&self) {
        let (tx, rx) = mpsc::channel();
        self.send(Command::Sync(tx));
        let _ = rx.recv();
    }

    /// Stops the session and hands back the coordinator.
    pub fn shutdown(mut self) -> Option<Coordinator> {
        self.send(Command::Shutdown);
        self.thread.take().and_then(|t| t.join().ok())
    }
}

impl Drop for SessionHandle {
    fn drop(&mut self) {
        if let Some(t) = self.thread.take() {
            let _ = self.tx.send(Command::Shutdown);
            let _ = t.join();
        }
    }
}

fn run<F: FnMut(SessionEvent)>(mut co: Coordinator, rx: Receiver<Command>, mut sink: F) -> Coordinator {
    loop {
        let first = if co.has_background_work() {
            match rx.try_recv() {
                Ok(c) => c,
                Err(TryRecvError::Empty) => {
                    co.run_background_task();
                    continue;
                }
                Err(TryRecvError::Disconnected) => return co,
            }
        } else {
            match rx.recv() {
                Ok(c) => c,
                Err(_) => return co,
            }
        };
        let mut batch = vec![first];
        batch.extend(rx.try_iter());

        let mut dirty: Vec<(SelectionId, Tag)> = Vec::new();
        let mut syncs = Vec::new();
        let mut stop = false;
        for cmd in batch {
            match cmd {
                Command::CreateSelection(config, reply) => {
                    let _ = reply.send(co.create_selection(config));
                }
                Command::Include(d, u, reply) => {
                    let _ = reply.send(co.include(d, u));
                }
                Command::Register(tag, view) => {
                    // pending dispatches first, so the new view sees the same state
                    flush(&mut co, &mut dirty, &mut sink);
                    let id = view.id.clone();
                    match co.register_view(view) {
                        Ok(delivery) => sink(SessionEvent::Result { tag, delivery }),
                        Err(e) => sink(SessionEvent::Error {
                            tag,
                            view: Some(id),
                            message: e.to_string(),
                        }),
                    }
                }
                Command::Unregister(tag, id) => match co.unregister_view(&id) {
                    Ok(()) => sink(SessionEvent::Ack { tag }),
                    Err(e) => sink(SessionEvent::Error {
                        tag,
                        view: Some(id),
                        message: e.to_string(),
                    }),
                },
                Command::Update(tag, sel, clause) => match co.apply_update(sel, clause) {
                    Ok(affected) => mark(&mut dirty, affected, tag),
                    Err(e) => sink(SessionEvent::Error {
                        tag,
                        view: None,
                        message: e.to_string(),
                    }),
                },
                Command::Remove(tag, sel, source) => match co.apply_remove(sel, &source) {
                    Ok(affected) => mark(&mut dirty, affected, tag),
                    Err(e) => sink(SessionEvent::Error {
                        tag,
                        view: None,
                        message: e.to_string(),
                    }),
                },
                Command::Activate(tag, sel, example) => match co.activate(sel, example) {
                    Ok(_) => sink(SessionEvent::Ack { tag }),
                    Err(e) => sink(SessionEvent::Error {
                        tag,
                        view: None,
                        message: e.to_string(),
                    }),
                },
                Command::Prefetch(queries) => co.prefetch(queries),
                Command::Stats(reply) => {
                    let _ = reply.send(co.stats());
                }
                Command::Sync(reply) => syncs.push(reply),
                Command::Shutdown => stop = true,
            }
        }
        flush(&mut co, &mut dirty, &mut sink);
        for s in syncs {
            let _ = s.send(());
        }
        if stop {
            return co;
        }
    }
}

/// Keeps one pending entry per selection, tagged with the latest update.
fn mark(dirty: &mut Vec<(SelectionId, Tag)>, affected: Vec<SelectionId>, tag: Tag) {
    for s in affected {
        match dirty.iter_mut().find(|(d, _)| *d == s) {
            Some(entry) => entry.1 = tag,
            None => dirty.push((s, tag)),
        }
    }
}

fn flush<F: FnMut(SessionEvent)>(co: &mut Coordinator, dirty: &mut Vec<(SelectionId, Tag)>, sink: &mut F) {
    for (sel, tag) in dirty.drain(..) {
        for delivery in co.dispatch(&[sel]) {
            sink(SessionEvent::Result { tag, delivery });
        }
    }
}
