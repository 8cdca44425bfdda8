//! Clauses, selections and their resolution into filter predicates.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scale::{BinFn, ScaleDescriptor};
use crate::sql::Expr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClauseType {
    Point,
    Interval,
    Match,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMethod {
    Prefix,
    Suffix,
    Contains,
    Regexp,
}

fn default_pixel_size() -> f64 {
    1.0
}

/// Optimization hints attached to a clause.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ClauseMeta {
    #[serde(rename = "type")]
    pub kind: ClauseType,
    #[serde(default = "default_pixel_size")]
    pub pixel_size: f64,
    #[serde(default)]
    pub bin: BinFn,
    #[serde(default)]
    pub scales: Vec<ScaleDescriptor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub match_method: Option<MatchMethod>,
}

impl ClauseMeta {
    pub fn point() -> Self {
        ClauseMeta {
            kind: ClauseType::Point,
            pixel_size: 1.0,
            bin: BinFn::Floor,
            scales: vec![],
            match_method: None,
        }
    }

    pub fn interval(scales: Vec<ScaleDescriptor>) -> Self {
        ClauseMeta {
            kind: ClauseType::Interval,
            scales,
            ..Self::point()
        }
    }

    pub fn matching(method: MatchMethod) -> Self {
        ClauseMeta {
            kind: ClauseType::Match,
            match_method: Some(method),
            ..Self::point()
        }
    }

    pub fn with_pixel_size(mut self, pixel_size: f64) -> Self {
        self.pixel_size = pixel_size;
        self
    }

    pub fn with_bin(mut self, bin: BinFn) -> Self {
        self.bin = bin;
        self
    }

    pub fn validate(&self) -> Result<(), SelectionError> {
        let invalid = |m: String| Err(SelectionError::InvalidMeta(m));
        match self.kind {
            ClauseType::Interval => {
                if self.scales.is_empty() {
                    return invalid("interval meta needs at least one scale".into());
                }
                if !(self.pixel_size >= 1.0 && self.pixel_size.is_finite()) {
                    return invalid(format!("pixel size {} is below 1", self.pixel_size));
                }
                for s in &self.scales {
                    s.validate().map_err(|e| SelectionError::InvalidMeta(e.to_string()))?;
                }
            }
            ClauseType::Point | ClauseType::Match => {
                if !self.scales.is_empty() {
                    return invalid(format!("{:?} meta carries no scales", self.kind));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clause {
    pub predicate: Expr,
    pub source: String,
    /// Views excluded from this clause under cross-filtering.
    pub views: BTreeSet<String>,
    pub meta: Option<ClauseMeta>,
}

impl Clause {
    pub fn new(source: &str, predicate: Expr) -> Self {
        Clause {
            predicate,
            source: source.to_string(),
            views: BTreeSet::new(),
            meta: None,
        }
    }

    pub fn with_views<I: IntoIterator<Item = S>, S: Into<String>>(mut self, views: I) -> Self {
        self.views = views.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_meta(mut self, meta: ClauseMeta) -> Self {
        self.meta = Some(meta);
        self
    }

    /// One-dimensional interval clause with a single-scale meta.
    pub fn interval(source: &str, column: &str, lo: f64, hi: f64, scale: ScaleDescriptor) -> Self {
        Clause::new(source, Expr::col(column).between(Expr::number(lo), Expr::number(hi)))
            .with_meta(ClauseMeta::interval(vec![scale]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resolver {
    Last,
    #[default]
    Intersect,
    Union,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum EmptyBehavior {
    #[default]
    #[serde(rename = "selectAll")]
    SelectAll,
    #[serde(rename = "selectNone")]
    SelectNone,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SelectionConfig {
    #[serde(default)]
    pub resolver: Resolver,
    #[serde(default)]
    pub cross: bool,
    #[serde(default)]
    pub empty: EmptyBehavior,
}

impl SelectionConfig {
    pub fn intersect() -> Self {
        SelectionConfig::default()
    }

    pub fn crossfilter() -> Self {
        SelectionConfig {
            cross: true,
            ..Default::default()
        }
    }

    pub fn single() -> Self {
        SelectionConfig {
            resolver: Resolver::Last,
            ..Default::default()
        }
    }

    pub fn union() -> Self {
        SelectionConfig {
            resolver: Resolver::Union,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SelectionId(pub usize);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SelectionError {
    #[error("clause source must not be empty")]
    EmptySource,
    #[error("unknown selection {0:?}")]
    UnknownSelection(SelectionId),
    #[error("including {0:?} into {1:?} would create a cycle")]
    Cycle(SelectionId, SelectionId),
    #[error("invalid clause metadata: {0}")]
    InvalidMeta(String),
}

/// Notification produced by selection changes, consumed by the coordinator.
#[derive(Debug, Clone, PartialEq)]
pub enum SelectionEvent {
    Update(SelectionId),
    Activate(SelectionId, Clause),
}

#[derive(Debug, Clone)]
struct SequencedClause {
    seq: u64,
    clause: Clause,
}

#[derive(Debug, Clone)]
struct SelectionState {
    config: SelectionConfig,
    clauses: Vec<SequencedClause>,
    includes: Vec<SelectionId>,
}

/// All selections of a session. Recency is tracked by one monotone
/// sequence number shared across selections, so relayed clauses compare
/// consistently with local ones.
#[derive(Debug, Clone, Default)]
pub struct SelectionGraph {
    selections: Vec<SelectionState>,
    seq: u64,
    events: Vec<SelectionEvent>,
}

impl SelectionGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn create(&mut self, config: SelectionConfig) -> SelectionId {
        self.selections.push(SelectionState {
            config,
            clauses: Vec::new(),
            includes: Vec::new(),
        });
        SelectionId(self.selections.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.selections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selections.is_empty()
    }

    fn state(&self, id: SelectionId) -> Result<&SelectionState, SelectionError> {
        self.selections.get(id.0).ok_or(SelectionError::UnknownSelection(id))
    }

    pub fn config(&self, id: SelectionId) -> Result<SelectionConfig, SelectionError> {
        Ok(self.state(id)?.config)
    }

    /// Makes `downstream` receive every clause of `upstream`.
    pub fn include(&mut self, downstream: SelectionId, upstream: SelectionId) -> Result<(), SelectionError> {
        self.state(downstream)?;
        self.state(upstream)?;
        if downstream == upstream || self.upstream_closure(upstream).contains(&downstream) {
            return Err(SelectionError::Cycle(upstream, downstream));
        }
        let inc = &mut self.selections[downstream.0].includes;
        if !inc.contains(&upstream) {
            inc.push(upstream);
        }
        Ok(())
    }

    fn upstream_closure(&self, id: SelectionId) -> BTreeSet<SelectionId> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![id];
        while let Some(s) = stack.pop() {
            for &u in &self.selections[s.0].includes {
                if seen.insert(u) {
                    stack.push(u);
                }
            }
        }
        seen
    }

    /// Selections that transitively include `id`, excluding `id` itself.
    pub fn downstream(&self, id: SelectionId) -> Vec<SelectionId> {
        (0..self.selections.len())
            .map(SelectionId)
            .filter(|&s| s != id && self.upstream_closure(s).contains(&id))
            .collect()
    }

    /// Replaces any clause from the same source and makes `clause` active.
    /// Returns the selections whose effective clause set changed.
    pub fn update_clause(&mut self, id: SelectionId, clause: Clause) -> Result<Vec<SelectionId>, SelectionError> {
        if clause.source.is_empty() {
            return Err(SelectionError::EmptySource);
        }
        if let Some(meta) = &clause.meta {
            meta.validate()?;
        }
        self.state(id)?;
        self.seq += 1;
        let seq = self.seq;
        let state = &mut self.selections[id.0];
        state.clauses.retain(|c| c.clause.source != clause.source);
        state.clauses.push(SequencedClause { seq, clause });
        Ok(self.notify(id))
    }

    pub fn remove_source(&mut self, id: SelectionId, source: &str) -> Result<Vec<SelectionId>, SelectionError> {
        self.state(id)?;
        let state = &mut self.selections[id.0];
        let before = state.clauses.len();
        state.clauses.retain(|c| c.clause.source != source);
        if state.clauses.len() == before {
            return Ok(vec![]);
        }
        Ok(self.notify(id))
    }

    fn notify(&mut self, id: SelectionId) -> Vec<SelectionId> {
        let mut affected = vec![id];
        affected.extend(self.downstream(id));
        for &s in &affected {
            self.events.push(SelectionEvent::Update(s));
        }
        affected
    }

    /// Emits an activation carrying an example clause; the clause set is untouched.
    pub fn activate(&mut self, id: SelectionId, example: Clause) -> Result<(), SelectionError> {
        self.state(id)?;
        self.events.push(SelectionEvent::Activate(id, example));
        Ok(())
    }

    pub fn drain_events(&mut self) -> Vec<SelectionEvent> {
        std::mem::take(&mut self.events)
    }

    fn effective_sequenced(&self, id: SelectionId) -> Vec<&SequencedClause> {
        let mut all: Vec<&SequencedClause> = self.selections[id.0].clauses.iter().collect();
        for u in self.upstream_closure(id) {
            all.extend(self.selections[u.0].clauses.iter());
        }
        // one clause per source, latest wins
        all.sort_by_key(|c| std::cmp::Reverse(c.seq));
        let mut seen = BTreeSet::new();
        all.retain(|c| seen.insert(c.clause.source.as_str()));
        all.reverse();
        all
    }

    /// Own clauses plus relayed upstream clauses, oldest first.
    pub fn clauses(&self, id: SelectionId) -> Vec<&Clause> {
        if self.state(id).is_err() {
            return vec![];
        }
        self.effective_sequenced(id).into_iter().map(|c| &c.clause).collect()
    }

    /// The most recently added clause of the effective set.
    pub fn active(&self, id: SelectionId) -> Option<&Clause> {
        self.state(id).ok()?;
        self.effective_sequenced(id).last().map(|c| &c.clause)
    }

    /// Filter predicate for `view`; `None` means no filtering.
    pub fn resolve(&self, id: SelectionId, view: Option<&str>) -> Option<Expr> {
        self.resolve_excluding(id, view, None)
    }

    /// Like [`resolve`](Self::resolve), ignoring clauses from `skip_source`.
    pub fn resolve_excluding(&self, id: SelectionId, view: Option<&str>, skip_source: Option<&str>) -> Option<Expr> {
        let state = self.state(id).ok()?;
        let config = state.config;
        let survivors: Vec<&Clause> = self
            .clauses(id)
            .into_iter()
            .filter(|c| !(config.cross && view.is_some_and(|v| c.views.contains(v))))
            .filter(|c| skip_source != Some(c.source.as_str()))
            .collect();
        if survivors.is_empty() {
            return match config.empty {
                EmptyBehavior::SelectAll => None,
                EmptyBehavior::SelectNone if skip_source.is_some() => None,
                EmptyBehavior::SelectNone => Some(Expr::boolean(false)),
            };
        }
        let preds = survivors.iter().map(|c| c.predicate.clone());
        match config.resolver {
            Resolver::Last => survivors.last().map(|c| c.predicate.clone()),
            Resolver::Intersect => Expr::conjunction(preds),
            Resolver::Union => Expr::disjunction(preds),
        }
    }

    /// True when `clause` would be dropped for `view` by cross-filtering.
    pub fn excludes(&self, id: SelectionId, view: &str, clause: &Clause) -> bool {
        self.state(id).is_ok_and(|s| s.config.cross) && clause.views.contains(view)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sql::expr_to_sql;
    use proptest::prelude::*;

    fn eq_clause(src: &str, col: &str, v: i64) -> Clause {
        Clause::new(src, Expr::col(col).eq(Expr::int(v)))
    }

    #[test]
    fn update_replaces_same_source() {
        let mut g = SelectionGraph::new();
        let s = g.create(SelectionConfig::intersect());
        g.update_clause(s, eq_clause("i", "a", 1)).unwrap();
        assert_eq!(g.clauses(s).len(), 1);
        g.update_clause(s, eq_clause("i", "a", 2)).unwrap();
        assert_eq!(g.clauses(s), vec![&eq_clause("i", "a", 2)]);
        assert_eq!(g.active(s), Some(&eq_clause("i", "a", 2)));
        g.update_clause(s, eq_clause("j", "b", 3)).unwrap();
        assert_eq!(g.clauses(s).len(), 2);
        assert_eq!(g.active(s).unwrap().source, "j");
        assert!(g.update_clause(s, eq_clause("", "b", 3)).is_err());
    }

    #[test]
    fn remove_source_falls_back_to_latest() {
        let mut g = SelectionGraph::new();
        let s = g.create(SelectionConfig::intersect());
        g.update_clause(s, eq_clause("i", "a", 1)).unwrap();
        g.update_clause(s, eq_clause("j", "b", 2)).unwrap();
        assert!(g.remove_source(s, "k").unwrap().is_empty());
        assert_eq!(g.clauses(s).len(), 2);
        g.remove_source(s, "j").unwrap();
        assert_eq!(g.active(s).unwrap().source, "i");
        g.remove_source(s, "i").unwrap();
        assert!(g.active(s).is_none());
        assert!(g.clauses(s).is_empty());
    }

    #[test]
    fn intersect_text() {
        let mut g = SelectionGraph::new();
        let s = g.create(SelectionConfig::intersect());
        g.update_clause(s, Clause::new("i", Expr::col("x").between(Expr::int(1), Expr::int(3))))
            .unwrap();
        g.update_clause(s, Clause::new("j", Expr::col("y").eq(Expr::string("k")))).unwrap();
        assert_eq!(
            expr_to_sql(&g.resolve(s, None).unwrap()),
            "(x BETWEEN 1 AND 3) AND (y = 'k')"
        );
    }

    #[test]
    fn cross_filter_and_empty_behavior() {
        let mut g = SelectionGraph::new();
        let s = g.create(SelectionConfig::crossfilter());
        g.update_clause(s, eq_clause("i", "a", 1).with_views(["v1"])).unwrap();
        assert_eq!(g.resolve(s, Some("v1")), None);
        assert!(g.resolve(s, Some("v2")).is_some());

        let none = g.create(SelectionConfig {
            empty: EmptyBehavior::SelectNone,
            ..Default::default()
        });
        assert_eq!(g.resolve(none, None), Some(Expr::boolean(false)));
        assert_eq!(expr_to_sql(&g.resolve(none, None).unwrap()), "FALSE");
    }

    #[test]
    fn last_and_union() {
        let mut g = SelectionGraph::new();
        let last = g.create(SelectionConfig::single());
        g.update_clause(last, eq_clause("i", "a", 1)).unwrap();
        g.update_clause(last, eq_clause("j", "a", 2)).unwrap();
        assert_eq!(g.resolve(last, None), Some(eq_clause("j", "a", 2).predicate));
        let u = g.create(SelectionConfig::union());
        g.update_clause(u, eq_clause("i", "a", 1)).unwrap();
        g.update_clause(u, eq_clause("j", "a", 2)).unwrap();
        assert_eq!(expr_to_sql(&g.resolve(u, None).unwrap()), "(a = 1) OR (a = 2)");
    }

    #[test]
    fn includes_relay_and_reject_cycles() {
        let mut g = SelectionGraph::new();
        let up = g.create(SelectionConfig::intersect());
        let down = g.create(SelectionConfig::single());
        g.include(down, up).unwrap();
        assert!(g.include(up, down).is_err());
        assert!(g.include(up, up).is_err());
        g.update_clause(down, eq_clause("own", "a", 1)).unwrap();
        let affected = g.update_clause(up, eq_clause("up", "b", 2)).unwrap();
        assert_eq!(affected, vec![up, down]);
        assert_eq!(g.clauses(down).len(), 2);
        // downstream applies its own resolver
        assert_eq!(g.resolve(down, None), Some(eq_clause("up", "b", 2).predicate));
        assert_eq!(g.active(down).unwrap().source, "up");
    }

    #[test]
    fn activation_leaves_clauses_alone() {
        let mut g = SelectionGraph::new();
        let s = g.create(SelectionConfig::intersect());
        g.drain_events();
        g.activate(s, eq_clause("i", "a", 1)).unwrap();
        assert!(g.clauses(s).is_empty());
        assert_eq!(g.drain_events(), vec![SelectionEvent::Activate(s, eq_clause("i", "a", 1))]);
    }

    #[test]
    fn meta_json_and_validation() {
        let m: ClauseMeta = serde_json::from_str(
            r#"{"type":"interval","pixelSize":2,"bin":"CEIL","scales":[{"type":"linear","domain":[0,1],"range":[0,100]}]}"#,
        )
        .unwrap();
        assert_eq!(m.pixel_size, 2.0);
        assert_eq!(m.bin, BinFn::Ceil);
        m.validate().unwrap();
        let p: ClauseMeta = serde_json::from_str(r#"{"type":"point"}"#).unwrap();
        assert_eq!(p, ClauseMeta::point());
        assert!(ClauseMeta::interval(vec![]).validate().is_err());
        assert!(ClauseMeta::interval(vec![ScaleDescriptor::linear([0.0, 1.0], [0.0, 1.0])])
            .with_pixel_size(0.5)
            .validate()
            .is_err());
    }

    #[derive(Debug, Clone)]
    enum Op {
        Update(usize, u8, i64, bool),
        Remove(usize, u8),
    }

    fn ops() -> impl Strategy<Value = Vec<Op>> {
        prop::collection::vec(
            prop_oneof![
                (0usize..3, 0u8..4, 0i64..100, any::<bool>()).prop_map(|(s, src, v, x)| Op::Update(s, src, v, x)),
                (0usize..3, 0u8..4).prop_map(|(s, src)| Op::Remove(s, src)),
            ],
            0..40,
        )
    }

    /// Reference model: per selection, a list of (seq, clause).
    struct Model {
        own: Vec<Vec<(u64, Clause)>>,
        seq: u64,
    }

    fn apply_ops(ops: &[Op], configs: [SelectionConfig; 3]) -> (SelectionGraph, Vec<SelectionId>, Model) {
        let mut g = SelectionGraph::new();
        let ids: Vec<_> = configs.iter().map(|c| g.create(*c)).collect();
        // 2 includes 1 includes 0
        g.include(ids[1], ids[0]).unwrap();
        g.include(ids[2], ids[1]).unwrap();
        let mut m = Model { own: vec![vec![]; 3], seq: 0 };
        for op in ops {
            match op {
                Op::Update(s, src, v, excl) => {
                    // column named after the source, so predicates record where they came from
                    let name = format!("s{s}_{src}");
                    let mut c = eq_clause(&name, &name, *v);
                    if *excl {
                        c = c.with_views(["v"]);
                    }
                    g.update_clause(ids[*s], c.clone()).unwrap();
                    m.seq += 1;
                    m.own[*s].retain(|(_, x)| x.source != c.source);
                    m.own[*s].push((m.seq, c));
                }
                Op::Remove(s, src) => {
                    let name = format!("s{s}_{src}");
                    g.remove_source(ids[*s], &name).unwrap();
                    m.own[*s].retain(|(_, x)| x.source != name);
                }
            }
        }
        (g, ids, m)
    }

    fn eval(e: &Expr, a: i64) -> bool {
        match e {
            Expr::Binary { op: crate::sql::BinaryOp::And, left, right } => eval(left, a) && eval(right, a),
            Expr::Binary { op: crate::sql::BinaryOp::Or, left, right } => eval(left, a) || eval(right, a),
            Expr::Binary { op: crate::sql::BinaryOp::Eq, right, .. } => {
                matches!(right.as_literal(), Some(crate::sql::Literal::Int(v)) if *v == a)
            }
            Expr::Literal(crate::sql::Literal::Bool(b)) => *b,
            other => panic!("unexpected {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn clause_set_invariants(ops in ops()) {
            let (g, ids, m) = apply_ops(&ops, [SelectionConfig::crossfilter(); 3]);
            for (k, &id) in ids.iter().enumerate() {
                let eff = g.clauses(id);
                let mut sources: Vec<_> = eff.iter().map(|c| c.source.clone()).collect();
                let n = sources.len();
                sources.sort();
                sources.dedup();
                prop_assert_eq!(sources.len(), n, "duplicate source");
                // effective = own plus everything upstream
                let mut expected: Vec<(u64, Clause)> = (0..=k).flat_map(|u| m.own[u].clone()).collect();
                expected.sort_by_key(|(s, _)| *s);
                let expected: Vec<&Clause> = expected.iter().map(|(_, c)| c).collect();
                prop_assert_eq!(&eff, &expected);
                // active is the latest survivor
                prop_assert_eq!(g.active(id), expected.last().copied());
            }
        }

        #[test]
        fn resolution_matches_brute_force(ops in ops(), rows in prop::collection::vec(0i64..100, 20)) {
            for resolver in [Resolver::Intersect, Resolver::Union, Resolver::Last] {
                let cfg = SelectionConfig { resolver, cross: true, empty: EmptyBehavior::SelectAll };
                let (g, ids, _) = apply_ops(&ops, [cfg; 3]);
                for &id in &ids {
                    let survivors: Vec<&Clause> =
                        g.clauses(id).into_iter().filter(|c| !c.views.contains("v")).collect();
                    let pred = g.resolve(id, Some("v"));
                    // never mentions an excluded clause
                    if let Some(p) = &pred {
                        for c in g.clauses(id).into_iter().filter(|c| c.views.contains("v")) {
                            prop_assert!(!p.column_names().contains(&c.source), "excluded clause leaked");
                        }
                    }
                    for &a in &rows {
                        let want = if survivors.is_empty() {
                            true
                        } else {
                            match resolver {
                                Resolver::Intersect => survivors.iter().all(|c| eval(&c.predicate, a)),
                                Resolver::Union => survivors.iter().any(|c| eval(&c.predicate, a)),
                                Resolver::Last => eval(&survivors.last().unwrap().predicate, a),
                            }
                        };
                        let got = pred.as_ref().is_none_or(|p| eval(p, a));
                        prop_assert_eq!(got, want);
                    }
                }
            }
        }
    }
}
