//! Session coordinator: view registration, selection updates, the
//! pre-aggregation pipeline, result caching and background work.

use std::collections::{HashMap, HashSet, VecDeque};
use std::num::NonZeroUsize;
use std::sync::Arc;
use std::time::Instant;

use lru::LruCache;
use serde::Serialize;
use thiserror::Error;

use crate::data::{QueryResult, Value};
use crate::executor::{Executor, Priority};
use crate::planner::{plan, MaterializedViewPlan, PlanError, SCHEMA};
use crate::query::{apply_filter, AnalysisError, ClientViewDescriptor};
use crate::selection::{Clause, Resolver, SelectionConfig, SelectionError, SelectionGraph, SelectionId};
use crate::sql::{to_sql, Expr};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoordinatorOptions {
    /// Use pre-aggregated tables for compatible updates.
    pub optimize: bool,
    /// Result cache capacity; 0 disables caching.
    pub cache_entries: usize,
}

impl Default for CoordinatorOptions {
    fn default() -> Self {
        CoordinatorOptions {
            optimize: true,
            cache_entries: 1024,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryPath {
    Cache,
    Optimized,
    Direct,
}

/// A result (or error) for one view.
#[derive(Debug, Clone)]
pub struct Delivery {
    pub view: String,
    pub sql: String,
    pub path: QueryPath,
    /// Wall time spent answering, including cache lookups.
    pub elapsed_ms: f64,
    pub result: Result<Arc<QueryResult>, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CoordinatorStats {
    pub executor_calls: u64,
    pub cache_hits: u64,
    pub cache_misses: u64,
    pub cache_entries: usize,
    pub creates: u64,
    pub tables: usize,
    pub optimized_queries: u64,
    pub direct_queries: u64,
    pub dispatches: u64,
    pub updates: u64,
    pub prefetched: u64,
    pub errors: u64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoordError {
    #[error("view {0} is already registered")]
    DuplicateView(String),
    #[error("unknown view {0}")]
    UnknownView(String),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

enum LowTask {
    Create { name: String, base: String, sql: String },
    Query(String),
}

pub struct Coordinator {
    executor: Arc<dyn Executor>,
    options: CoordinatorOptions,
    graph: SelectionGraph,
    views: Vec<ClientViewDescriptor>,
    /// Filter each view was last answered under.
    filters: HashMap<String, Option<Expr>>,
    cache: Option<LruCache<String, Arc<QueryResult>>>,
    mats_created: HashSet<String>,
    schema_created: bool,
    low: VecDeque<LowTask>,
    stats: CoordinatorStats,
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

impl Coordinator {
    pub fn new(executor: Arc<dyn Executor>, options: CoordinatorOptions) -> Self {
        Coordinator {
            executor,
            options,
            graph: SelectionGraph::new(),
            views: Vec::new(),
            filters: HashMap::new(),
            cache: NonZeroUsize::new(options.cache_entries).map(LruCache::new),
            mats_created: HashSet::new(),
            schema_created: false,
            low: VecDeque::new(),
            stats: CoordinatorStats::default(),
        }
    }

    pub fn options(&self) -> CoordinatorOptions {
        self.options
    }

    pub fn graph(&self) -> &SelectionGraph {
        &self.graph
    }

    pub fn create_selection(&mut self, config: SelectionConfig) -> SelectionId {
        self.graph.create(config)
    }

    pub fn include(&mut self, downstream: SelectionId, upstream: SelectionId) -> Result<(), CoordError> {
        Ok(self.graph.include(downstream, upstream)?)
    }

    pub fn view(&self, id: &str) -> Option<&ClientViewDescriptor> {
        self.views.iter().find(|v| v.id == id)
    }

    /// Stores the view and answers its current query.
    pub fn register_view(&mut self, view: ClientViewDescriptor) -> Result<Delivery, CoordError> {
        if self.view(&view.id).is_some() {
            return Err(CoordError::DuplicateView(view.id));
        }
        if let Some(s) = view.selection {
            self.graph.config(s)?;
        }
        self.views.push(view.clone());
        Ok(self.query_view(&view))
    }

    pub fn unregister_view(&mut self, id: &str) -> Result<(), CoordError> {
        let before = self.views.len();
        self.views.retain(|v| v.id != id);
        if self.views.len() == before {
            return Err(CoordError::UnknownView(id.to_string()));
        }
        self.filters.remove(id);
        Ok(())
    }

    /// Records the clause without running queries; returns selections to dispatch.
    pub fn apply_update(&mut self, sel: SelectionId, clause: Clause) -> Result<Vec<SelectionId>, CoordError> {
        let affected = self.graph.update_clause(sel, clause)?;
        self.graph.drain_events();
        self.stats.updates += 1;
        Ok(affected)
    }

    pub fn apply_remove(&mut self, sel: SelectionId, source: &str) -> Result<Vec<SelectionId>, CoordError> {
        let affected = self.graph.remove_source(sel, source)?;
        self.graph.drain_events();
        self.stats.updates += 1;
        Ok(affected)
    }

    /// Updates the selection and answers every affected view.
    pub fn update(&mut self, sel: SelectionId, clause: Clause) -> Result<Vec<Delivery>, CoordError> {
        let affected = self.apply_update(sel, clause)?;
        Ok(self.dispatch(&affected))
    }

    pub fn remove(&mut self, sel: SelectionId, source: &str) -> Result<Vec<Delivery>, CoordError> {
        let affected = self.apply_remove(sel, source)?;
        Ok(self.dispatch(&affected))
    }

    /// Re-queries the views filtered by the given selections. Under
    /// cross-filtering, views whose resolved filter did not change (the
    /// clause's own views) are skipped.
    pub fn dispatch(&mut self, selections: &[SelectionId]) -> Vec<Delivery> {
        self.stats.dispatches += selections.len() as u64;
        let views: Vec<ClientViewDescriptor> = self
            .views
            .iter()
            .filter(|v| {
                v.selection.is_some_and(|s| {
                    selections.contains(&s)
                        && !(self.graph.config(s).is_ok_and(|c| c.cross)
                            && self.filters.get(&v.id) == Some(&self.graph.resolve(s, Some(&v.id))))
                })
            })
            .cloned()
            .collect();
        views.iter().map(|v| self.query_view(v)).collect()
    }

    /// Queues low-priority creation of the tables an update of `example`
    /// would use. Returns the number of creations queued.
    pub fn activate(&mut self, sel: SelectionId, example: Clause) -> Result<usize, CoordError> {
        self.graph.activate(sel, example.clone())?;
        self.graph.drain_events();
        if !self.options.optimize {
            return Ok(0);
        }
        let mut targets = vec![sel];
        targets.extend(self.graph.downstream(sel));
        let views: Vec<ClientViewDescriptor> = self
            .views
            .iter()
            .filter(|v| v.selection.is_some_and(|s| targets.contains(&s)))
            .cloned()
            .collect();
        let mut queued = 0;
        for v in views {
            let s = v.selection.expect("filtered above");
            match self.plan_for(&v, s, &example) {
                Ok(Some(p)) => {
                    let name = p.name.to_string();
                    let pending = self.low.iter().any(|t| matches!(t, LowTask::Create { name: n, .. } if *n == name));
                    if !self.mats_created.contains(&name) && !pending {
                        self.low.push_back(LowTask::Create {
                            base: p.name.base().to_string(),
                            name,
                            sql: p.creation,
                        });
                        queued += 1;
                    }
                }
                Ok(None) => {}
                Err(e) => log::debug!("activation skipped for {}: {e}", v.id),
            }
        }
        Ok(queued)
    }

    /// Queues queries to run at low priority; already cached text is skipped.
    pub fn prefetch(&mut self, queries: impl IntoIterator<Item = String>) {
        for q in queries {
            let cached = self.cache.as_ref().is_some_and(|c| c.contains(&q));
            let queued = self.low.iter().any(|t| matches!(t, LowTask::Query(s) if *s == q));
            if !cached && !queued {
                self.low.push_back(LowTask::Query(q));
            }
        }
    }

    pub fn has_background_work(&self) -> bool {
        !self.low.is_empty()
    }

    /// Runs one queued low-priority task. Returns false when none remain.
    pub fn run_background_task(&mut self) -> bool {
        let Some(task) = self.low.pop_front() else {
            return false;
        };
        match task {
            LowTask::Create { name, base, sql } => {
                if let Err(e) = self.ensure_table(&name, &base, &sql, Priority::Low) {
                    log::warn!("speculative creation of {name} failed: {e}");
                }
            }
            LowTask::Query(sql) => {
                if self.cache.as_ref().is_some_and(|c| c.contains(&sql)) {
                    return true;
                }
                let (r, _) = self.execute_cached(&sql, Priority::Low);
                match r {
                    Ok(_) => self.stats.prefetched += 1,
                    Err(e) => log::warn!("prefetch failed: {e}"),
                }
            }
        }
        true
    }

    pub fn run_background(&mut self) {
        while self.run_background_task() {}
    }

    pub fn is_cached(&self, sql: &str) -> bool {
        self.cache.as_ref().is_some_and(|c| c.contains(sql))
    }

    pub fn stats(&self) -> CoordinatorStats {
        let mut s = self.stats.clone();
        s.cache_entries = self.cache.as_ref().map_or(0, LruCache::len);
        s.tables = self.mats_created.len();
        s
    }

    pub fn created_tables(&self) -> Vec<String> {
        let mut v: Vec<String> = self.mats_created.iter().cloned().collect();
        v.sort();
        v
    }

    /// Runs SQL through the cache at interactive priority.
    pub fn query(&mut self, sql: &str) -> Delivery {
        let start = Instant::now();
        let (result, path) = self.execute_cached(sql, Priority::Interactive);
        Delivery {
            view: String::new(),
            sql: sql.to_string(),
            path,
            elapsed_ms: ms(start),
            result,
        }
    }

    /// The plan used for `view` when `active` is the active clause of `sel`,
    /// or `None` when the view takes the direct path.
    fn plan_for(
        &self,
        view: &ClientViewDescriptor,
        sel: SelectionId,
        active: &Clause,
    ) -> Result<Option<MaterializedViewPlan>, PlanError> {
        if self.graph.excludes(sel, &view.id, active) {
            return Ok(None);
        }
        let config = self.graph.config(sel).map_err(|e| PlanError::Unsupported(e.to_string()))?;
        let base = match config.resolver {
            Resolver::Last => None,
            _ => self.graph.resolve_excluding(sel, Some(&view.id), Some(&active.source)),
        };
        plan(view, active, config, base.as_ref()).map(Some)
    }

    /// SQL and path for the view's current state; also creates tables as needed.
    pub fn view_sql(&mut self, view: &ClientViewDescriptor) -> Result<(String, QueryPath), String> {
        let Some(sel) = view.selection else {
            return to_sql(&view.query).map(|s| (s, QueryPath::Direct)).map_err(|e| e.to_string());
        };
        if self.options.optimize {
            if let Some(active) = self.graph.active(sel).cloned() {
                match self.plan_for(view, sel, &active) {
                    Ok(Some(p)) => {
                        let name = p.name.to_string();
                        let ready = self.ensure_table(&name, p.name.base(), &p.creation, Priority::Interactive);
                        match ready.and_then(|_| p.update_query(&active).map_err(|e| e.to_string())) {
                            Ok(sql) => return Ok((sql, QueryPath::Optimized)),
                            Err(e) => log::warn!("falling back to direct query for {}: {e}", view.id),
                        }
                    }
                    Ok(None) => {}
                    Err(e) => log::debug!("direct query for {}: {e}", view.id),
                }
            }
        }
        let filter = self.graph.resolve(sel, Some(&view.id));
        let q = apply_filter(&view.query, filter.as_ref()).map_err(|e| e.to_string())?;
        to_sql(&q).map(|s| (s, QueryPath::Direct)).map_err(|e| e.to_string())
    }

    fn query_view(&mut self, view: &ClientViewDescriptor) -> Delivery {
        let start = Instant::now();
        if let Some(s) = view.selection {
            self.filters.insert(view.id.clone(), self.graph.resolve(s, Some(&view.id)));
        }
        let (sql, planned) = match self.view_sql(view) {
            Ok(x) => x,
            Err(e) => {
                self.stats.errors += 1;
                return Delivery {
                    view: view.id.clone(),
                    sql: String::new(),
                    path: QueryPath::Direct,
                    elapsed_ms: ms(start),
                    result: Err(e),
                };
            }
        };
        match planned {
            QueryPath::Optimized => self.stats.optimized_queries += 1,
            _ => self.stats.direct_queries += 1,
        }
        let (result, path) = self.execute_cached(&sql, Priority::Interactive);
        if result.is_err() {
            self.stats.errors += 1;
        }
        Delivery {
            view: view.id.clone(),
            sql,
            path: if path == QueryPath::Cache { path } else { planned },
            elapsed_ms: ms(start),
            result,
        }
    }

    fn submit(&mut self, sql: &str, priority: Priority) -> Result<QueryResult, String> {
        self.stats.executor_calls += 1;
        self.executor.submit(sql, priority).map_err(|e| e.to_string())
    }

    fn execute_cached(&mut self, sql: &str, priority: Priority) -> (Result<Arc<QueryResult>, String>, QueryPath) {
        if let Some(hit) = self.cache.as_mut().and_then(|c| c.get(sql)).cloned() {
            self.stats.cache_hits += 1;
            return (Ok(hit), QueryPath::Cache);
        }
        self.stats.cache_misses += 1;
        let r = self.submit(sql, priority).map(Arc::new);
        if let (Ok(res), Some(cache)) = (&r, self.cache.as_mut()) {
            cache.put(sql.to_string(), res.clone());
        }
        (r, QueryPath::Direct)
    }

    /// Creates the table once per session, skipping names already present
    /// in the database.
    fn ensure_table(&mut self, name: &str, base: &str, creation: &str, priority: Priority) -> Result<(), String> {
        if self.mats_created.contains(name) {
            return Ok(());
        }
        if !self.schema_created {
            self.submit(&format!("CREATE SCHEMA IF NOT EXISTS {SCHEMA}"), priority)?;
            self.schema_created = true;
        }
        let probe = format!(
            "SELECT COUNT(*) AS n FROM information_schema.tables WHERE table_schema = '{SCHEMA}' AND table_name = '{base}'"
        );
        let exists = self
            .submit(&probe, priority)?
            .columns
            .first()
            .filter(|c| !c.data.is_empty())
            .is_some_and(|c| matches!(c.data.get(0), Value::Int(n) if n > 0));
        if !exists {
            self.submit(creation, priority)?;
            self.stats.creates += 1;
        }
        self.mats_created.insert(name.to_string());
        Ok(())
    }
}
