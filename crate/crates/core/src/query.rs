//! View-query analysis: filter injection, group-by extraction, source
//! detection, active-clause structure and the pre-aggregation gate.

use std::fmt;

use thiserror::Error;

use crate::selection::{Clause, ClauseType, Resolver, SelectionConfig, SelectionId};
use crate::sql::{BinaryOp, Expr, FunctionCall, Literal, ObjectName, Query, SelectItem, TableRef};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("malformed query: {0}")]
    Structure(String),
    #[error("GROUP BY references unknown expression {0}")]
    UnknownGroupBy(String),
}

/// A client view: its unfiltered query and how it may be optimized.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientViewDescriptor {
    pub id: String,
    pub query: Query,
    pub filter_stable: bool,
    pub selection: Option<SelectionId>,
    /// Number of bins the view renders, when known up front.
    pub client_bins: Option<u64>,
}

impl ClientViewDescriptor {
    pub fn new(id: &str, query: Query) -> Self {
        ClientViewDescriptor {
            id: id.to_string(),
            query,
            filter_stable: true,
            selection: None,
            client_bins: None,
        }
    }

    pub fn with_selection(mut self, selection: SelectionId) -> Self {
        self.selection = Some(selection);
        self
    }

    pub fn with_filter_stable(mut self, stable: bool) -> Self {
        self.filter_stable = stable;
        self
    }

    pub fn with_client_bins(mut self, bins: u64) -> Self {
        self.client_bins = Some(bins);
        self
    }
}

fn cte_index(q: &Query, name: &ObjectName) -> Option<usize> {
    if name.0.len() != 1 {
        return None;
    }
    q.ctes.iter().position(|c| c.name == name.0[0])
}

/// Child layer feeding `q`, if its FROM is a subquery or a CTE reference.
fn child_layer(q: &Query) -> Option<&Query> {
    match q.from.as_ref()? {
        TableRef::Subquery { query, .. } => Some(query),
        TableRef::Table { name, .. } => cte_index(q, name).map(|i| &q.ctes[i].query),
        TableRef::Join { .. } => None,
    }
}

fn child_layer_mut(q: &mut Query) -> Option<&mut Query> {
    let cte = match q.from.as_ref()? {
        TableRef::Table { name, .. } => cte_index(q, name),
        _ => None,
    };
    if let Some(i) = cte {
        return Some(&mut q.ctes[i].query);
    }
    match q.from.as_mut()? {
        TableRef::Subquery { query, .. } => Some(query),
        _ => None,
    }
}

/// Query layers from the outermost down to the one reading base relations.
pub fn layers(q: &Query) -> Vec<&Query> {
    let mut out = vec![q];
    while let Some(c) = child_layer(out[out.len() - 1]) {
        out.push(c);
    }
    out
}

/// Mutable access to the layer at `depth` (0 = outermost).
pub fn layer_mut(q: &mut Query, depth: usize) -> Option<&mut Query> {
    let mut cur = q;
    for _ in 0..depth {
        cur = child_layer_mut(cur)?;
    }
    Some(cur)
}

/// Depth of the deepest aggregating layer.
pub fn aggregation_depth(q: &Query) -> Option<usize> {
    layers(q).iter().rposition(|l| l.is_aggregate())
}

/// Conjoins `p` into the WHERE clause of the layer reading the base relation.
pub fn apply_filter(q: &Query, p: Option<&Expr>) -> Result<Query, AnalysisError> {
    let mut out = q.clone();
    let Some(p) = p else { return Ok(out) };
    if q.from.is_none() {
        return Err(AnalysisError::Structure("query has no FROM clause".into()));
    }
    let depth = layers(q).len() - 1;
    let base = layer_mut(&mut out, depth).expect("layer exists");
    base.selection = Some(match base.selection.take() {
        Some(w) => w.and(p.clone()),
        None => p.clone(),
    });
    Ok(out)
}

/// A grouping key of a view query: its output name and defining expression.
#[derive(Debug, Clone, PartialEq)]
pub struct Dimension {
    pub name: String,
    pub expr: Expr,
}

/// Resolves a GROUP BY entry of `layer` to (output name, expression).
fn resolve_group_key(layer: &Query, key: &Expr) -> Result<Dimension, AnalysisError> {
    if key.contains_aggregate() {
        return Err(AnalysisError::Structure("aggregate inside GROUP BY".into()));
    }
    let items: Vec<(String, &Expr)> = layer
        .select
        .iter()
        .filter_map(|s| Some((s.output_name()?, s.expr()?)))
        .collect();
    if let Expr::Literal(Literal::Int(pos)) = key {
        let (name, expr) = usize::try_from(*pos)
            .ok()
            .and_then(|p| p.checked_sub(1))
            .and_then(|p| items.get(p))
            .ok_or_else(|| AnalysisError::UnknownGroupBy(pos.to_string()))?;
        return Ok(Dimension {
            name: name.clone(),
            expr: (*expr).clone(),
        });
    }
    if let Expr::Column(c) = key {
        if c.table.is_none() {
            if let Some((name, expr)) = items.iter().find(|(n, _)| *n == c.name) {
                if expr.contains_aggregate() {
                    return Err(AnalysisError::Structure(format!("GROUP BY on aggregate {name}")));
                }
                return Ok(Dimension {
                    name: name.clone(),
                    expr: (*expr).clone(),
                });
            }
        }
    }
    if let Some((name, _)) = items.iter().find(|(_, e)| *e == key) {
        return Ok(Dimension {
            name: name.clone(),
            expr: key.clone(),
        });
    }
    match key {
        Expr::Column(c) => Ok(Dimension {
            name: c.name.clone(),
            expr: key.clone(),
        }),
        other => Err(AnalysisError::UnknownGroupBy(crate::sql::expr_to_sql(other))),
    }
}

/// Grouping dimensions of the aggregation layer, in declared order.
pub fn extract_groupby(q: &Query) -> Result<Vec<Dimension>, AnalysisError> {
    let ls = layers(q);
    let Some(depth) = aggregation_depth(q) else {
        return Ok(vec![]);
    };
    let layer = ls[depth];
    layer.group_by.iter().map(|k| resolve_group_key(layer, k)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SourceError {
    #[error("query reads no relation")]
    NoSource,
    #[error("query reads {0} relations")]
    Multiple(usize),
}

fn collect_tables<'a>(t: &'a TableRef, scope: &'a Query, out: &mut Vec<&'a ObjectName>) {
    match t {
        TableRef::Table { name, .. } => match cte_index(scope, name) {
            Some(i) => collect_query_tables(&scope.ctes[i].query, out),
            None => out.push(name),
        },
        TableRef::Subquery { query, .. } => collect_query_tables(query, out),
        TableRef::Join { left, right, .. } => {
            collect_tables(left, scope, out);
            collect_tables(right, scope, out);
        }
    }
}

fn collect_query_tables<'a>(q: &'a Query, out: &mut Vec<&'a ObjectName>) {
    if let Some(f) = &q.from {
        collect_tables(f, q, out);
    }
}

/// The single base relation feeding aggregation.
pub fn single_source(q: &Query) -> Result<ObjectName, SourceError> {
    let mut tables = Vec::new();
    collect_query_tables(q, &mut tables);
    match tables.len() {
        0 => Err(SourceError::NoSource),
        1 => Ok(tables[0].clone()),
        n => Err(SourceError::Multiple(n)),
    }
}

/// Aggregate functions that can be answered from pre-aggregates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AggregateFn {
    Count,
    Sum,
    Min,
    Max,
    Product,
    BitAnd,
    BitOr,
    BitXor,
    BoolAnd,
    BoolOr,
    Avg,
    Geomean,
    ArgMin,
    ArgMax,
    VarSamp,
    VarPop,
    StddevSamp,
    StddevPop,
    CovarSamp,
    CovarPop,
    Corr,
    RegrCount,
    RegrAvgx,
    RegrAvgy,
    RegrSxx,
    RegrSyy,
    RegrSxy,
    RegrSlope,
    RegrIntercept,
    RegrR2,
}

impl AggregateFn {
    pub const ALL: [AggregateFn; 30] = [
        AggregateFn::Count,
        AggregateFn::Sum,
        AggregateFn::Min,
        AggregateFn::Max,
        AggregateFn::Product,
        AggregateFn::BitAnd,
        AggregateFn::BitOr,
        AggregateFn::BitXor,
        AggregateFn::BoolAnd,
        AggregateFn::BoolOr,
        AggregateFn::Avg,
        AggregateFn::Geomean,
        AggregateFn::ArgMin,
        AggregateFn::ArgMax,
        AggregateFn::VarSamp,
        AggregateFn::VarPop,
        AggregateFn::StddevSamp,
        AggregateFn::StddevPop,
        AggregateFn::CovarSamp,
        AggregateFn::CovarPop,
        AggregateFn::Corr,
        AggregateFn::RegrCount,
        AggregateFn::RegrAvgx,
        AggregateFn::RegrAvgy,
        AggregateFn::RegrSxx,
        AggregateFn::RegrSyy,
        AggregateFn::RegrSxy,
        AggregateFn::RegrSlope,
        AggregateFn::RegrIntercept,
        AggregateFn::RegrR2,
    ];

    pub fn name(self) -> &'static str {
        use AggregateFn::*;
        match self {
            Count => "COUNT",
            Sum => "SUM",
            Min => "MIN",
            Max => "MAX",
            Product => "PRODUCT",
            BitAnd => "BIT_AND",
            BitOr => "BIT_OR",
            BitXor => "BIT_XOR",
            BoolAnd => "BOOL_AND",
            BoolOr => "BOOL_OR",
            Avg => "AVG",
            Geomean => "GEOMEAN",
            ArgMin => "ARG_MIN",
            ArgMax => "ARG_MAX",
            VarSamp => "VAR_SAMP",
            VarPop => "VAR_POP",
            StddevSamp => "STDDEV_SAMP",
            StddevPop => "STDDEV_POP",
            CovarSamp => "COVAR_SAMP",
            CovarPop => "COVAR_POP",
            Corr => "CORR",
            RegrCount => "REGR_COUNT",
            RegrAvgx => "REGR_AVGX",
            RegrAvgy => "REGR_AVGY",
            RegrSxx => "REGR_SXX",
            RegrSyy => "REGR_SYY",
            RegrSxy => "REGR_SXY",
            RegrSlope => "REGR_SLOPE",
            RegrIntercept => "REGR_INTERCEPT",
            RegrR2 => "REGR_R2",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name().eq_ignore_ascii_case(name))
    }

    /// Number of value arguments (`COUNT(*)` has none).
    pub fn arity(self) -> usize {
        use AggregateFn::*;
        match self {
            ArgMin | ArgMax | CovarSamp | CovarPop | Corr | RegrCount | RegrAvgx | RegrAvgy | RegrSxx | RegrSyy
            | RegrSxy | RegrSlope | RegrIntercept | RegrR2 => 2,
            _ => 1,
        }
    }

    pub fn is_bivariate(self) -> bool {
        use AggregateFn::*;
        matches!(
            self,
            CovarSamp
                | CovarPop
                | Corr
                | RegrCount
                | RegrAvgx
                | RegrAvgy
                | RegrSxx
                | RegrSyy
                | RegrSxy
                | RegrSlope
                | RegrIntercept
                | RegrR2
        )
    }
}

impl fmt::Display for AggregateFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// An analysed aggregate call.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateCall {
    pub func: AggregateFn,
    /// Empty for `COUNT(*)`.
    pub args: Vec<Expr>,
    pub filter: Option<Expr>,
    pub distinct: bool,
}

impl AggregateCall {
    pub fn from_call(call: &FunctionCall) -> Result<Self, String> {
        let func = AggregateFn::from_name(&call.name)
            .ok_or_else(|| format!("{} cannot be pre-aggregated", call.name))?;
        if call.star {
            if func != AggregateFn::Count {
                return Err(format!("{}(*) is not an aggregate", call.name));
            }
        } else if call.args.len() != func.arity() {
            return Err(format!("{} expects {} argument(s)", func, func.arity()));
        }
        if call.args.iter().any(Expr::contains_aggregate) {
            return Err("nested aggregate".into());
        }
        Ok(AggregateCall {
            func,
            args: call.args.clone(),
            filter: call.filter.as_deref().cloned(),
            distinct: call.distinct,
        })
    }
}

/// Aggregate function calls in an expression, outermost first.
pub fn aggregate_calls(e: &Expr) -> Vec<&FunctionCall> {
    let mut out = Vec::new();
    fn go<'a>(e: &'a Expr, out: &mut Vec<&'a FunctionCall>) {
        if let Expr::Function(f) = e {
            if f.is_aggregate() {
                out.push(f);
                return;
            }
        }
        for c in e.children() {
            go(c, out);
        }
    }
    go(e, &mut out);
    out
}

/// One interval dimension of an active clause.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalDim {
    pub expr: Expr,
    pub lo: f64,
    pub hi: f64,
}

/// Point clause structure: columns and the selected value tuples.
#[derive(Debug, Clone, PartialEq)]
pub struct PointDims {
    pub columns: Vec<Expr>,
    pub tuples: Vec<Vec<Literal>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ActiveDims {
    Interval(Vec<IntervalDim>),
    Point(PointDims),
}

fn numeric(e: &Expr) -> Option<f64> {
    e.as_literal().and_then(Literal::as_f64).filter(|v| v.is_finite())
}

/// Per-dimension `expr BETWEEN lo AND hi` terms of an interval predicate.
pub fn interval_dims(predicate: &Expr) -> Result<Vec<IntervalDim>, String> {
    predicate
        .conjuncts()
        .into_iter()
        .map(|c| match c {
            Expr::Between {
                expr,
                low,
                high,
                negated: false,
            } => {
                let (lo, hi) = numeric(low)
                    .zip(numeric(high))
                    .ok_or_else(|| "interval bounds must be numeric literals".to_string())?;
                Ok(IntervalDim {
                    expr: (**expr).clone(),
                    lo,
                    hi,
                })
            }
            _ => Err("interval predicate must be a conjunction of BETWEEN terms".to_string()),
        })
        .collect()
}

fn point_conjunct(e: &Expr) -> Result<(Expr, Vec<Literal>), String> {
    let lit = |x: &Expr| match x.as_literal() {
        Some(Literal::Null) | None => None,
        Some(l) => Some(l.clone()),
    };
    match e {
        Expr::Binary {
            op: BinaryOp::Eq,
            left,
            right,
        } => {
            if let Some(l) = lit(right) {
                Ok(((**left).clone(), vec![l]))
            } else if let Some(l) = lit(left) {
                Ok(((**right).clone(), vec![l]))
            } else {
                Err("point equality needs a literal side".into())
            }
        }
        Expr::InList {
            expr,
            list,
            negated: false,
        } => {
            let values = list
                .iter()
                .map(lit)
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| "IN list must contain non-null literals".to_string())?;
            Ok(((**expr).clone(), values))
        }
        _ => Err("point predicate terms must be equality or IN tests".into()),
    }
}

/// Columns and value tuples of a point predicate: a disjunction of
/// conjunctions of `col = literal` / `col IN (...)` over one column set.
pub fn point_dims(predicate: &Expr) -> Result<PointDims, String> {
    let mut columns: Option<Vec<Expr>> = None;
    let mut tuples = Vec::new();
    for disjunct in predicate.disjuncts() {
        let mut terms: Vec<(Expr, Vec<Literal>)> = disjunct
            .conjuncts()
            .into_iter()
            .map(point_conjunct)
            .collect::<Result<_, _>>()?;
        let cols = columns.get_or_insert_with(|| terms.iter().map(|(c, _)| c.clone()).collect());
        if terms.len() != cols.len() {
            return Err("point disjuncts must constrain the same columns".into());
        }
        let mut ordered = Vec::with_capacity(cols.len());
        for c in cols.iter() {
            let i = terms
                .iter()
                .position(|(t, _)| t == c)
                .ok_or_else(|| "point disjuncts must constrain the same columns".to_string())?;
            ordered.push(terms.swap_remove(i).1);
        }
        // expand IN lists into tuples
        let mut acc: Vec<Vec<Literal>> = vec![vec![]];
        for values in ordered {
            acc = acc
                .into_iter()
                .flat_map(|prefix| {
                    values.iter().map(move |v| {
                        let mut t = prefix.clone();
                        t.push(v.clone());
                        t
                    })
                })
                .collect();
        }
        tuples.extend(acc);
    }
    let columns = columns.unwrap_or_default();
    let mut seen = Vec::new();
    for c in &columns {
        if seen.contains(&c) {
            return Err("a column appears twice in a point conjunct".into());
        }
        seen.push(c);
    }
    Ok(PointDims { columns, tuples })
}

/// Active-clause dimensions according to its metadata.
pub fn active_dims(clause: &Clause) -> Result<ActiveDims, String> {
    let meta = clause.meta.as_ref().ok_or("clause has no metadata")?;
    match meta.kind {
        ClauseType::Interval => {
            let dims = interval_dims(&clause.predicate)?;
            if dims.len() != meta.scales.len() {
                return Err(format!(
                    "{} interval dimension(s) but {} scale(s)",
                    dims.len(),
                    meta.scales.len()
                ));
            }
            Ok(ActiveDims::Interval(dims))
        }
        ClauseType::Point => Ok(ActiveDims::Point(point_dims(&clause.predicate)?)),
        ClauseType::Match => Err("match clauses are not optimizable".into()),
    }
}

/// Outcome of the pre-aggregation gate.
#[derive(Debug, Clone, PartialEq)]
pub struct CompatibilityReport {
    /// First failing rule (1-based) and the reason.
    pub failure: Option<(u8, String)>,
}

impl CompatibilityReport {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }
}

fn static_filter(e: &Expr) -> bool {
    !e.contains_subquery() && !e.any(&mut |x| matches!(x, Expr::Placeholder(_)))
}

/// Every rule the inputs violate, in rule order.
pub fn compatibility_failures(
    view: &ClientViewDescriptor,
    active: &Clause,
    config: SelectionConfig,
) -> Vec<(u8, String)> {
    let mut fails = Vec::new();
    if !matches!(config.resolver, Resolver::Intersect | Resolver::Last) {
        fails.push((1, format!("{:?} resolution is not optimizable", config.resolver)));
    }
    match &active.meta {
        None => fails.push((2, "active clause has no metadata".into())),
        Some(m) if m.kind == ClauseType::Match => fails.push((2, "match clauses are not optimizable".into())),
        Some(_) => {
            if let Err(e) = validate_meta(active).and_then(|_| active_dims(active).map(|_| ())) {
                fails.push((3, e));
            }
        }
    }
    if !view.filter_stable {
        fails.push((4, format!("view {} is not filter-stable", view.id)));
    }
    if let Err(e) = single_source(&view.query) {
        fails.push((5, e.to_string()));
    }
    let mut count = 0;
    let mut agg_fail = None;
    for (depth, layer) in layers(&view.query).into_iter().enumerate() {
        if layer.distinct && Some(depth) == aggregation_depth(&view.query) {
            agg_fail.get_or_insert("SELECT DISTINCT is not optimizable".to_string());
        }
        let exprs = layer
            .select
            .iter()
            .filter_map(SelectItem::expr)
            .chain(layer.selection.iter())
            .chain(layer.group_by.iter());
        for e in exprs {
            for call in aggregate_calls(e) {
                count += 1;
                match AggregateCall::from_call(call) {
                    Err(m) => {
                        agg_fail.get_or_insert(m);
                    }
                    Ok(a) if a.distinct => {
                        agg_fail.get_or_insert(format!("{}(DISTINCT ...) is not optimizable", a.func));
                    }
                    Ok(a) if a.filter.as_ref().is_some_and(|f| !static_filter(f)) => {
                        agg_fail.get_or_insert("aggregate FILTER must be static".into());
                    }
                    Ok(_) => {}
                }
            }
        }
    }
    if let Some(m) = agg_fail {
        fails.push((6, m));
    }
    if count == 0 {
        fails.push((7, "view computes no aggregates".into()));
    }
    fails
}

fn validate_meta(clause: &Clause) -> Result<(), String> {
    match &clause.meta {
        Some(m) => m.validate().map_err(|e| e.to_string()),
        None => Ok(()),
    }
}

/// Checks whether `view` can be answered from a pre-aggregated table for
/// updates of `active`, reporting the first failing rule.
pub fn check_compatibility(
    view: &ClientViewDescriptor,
    active: &Clause,
    config: SelectionConfig,
) -> CompatibilityReport {
    CompatibilityReport {
        failure: compatibility_failures(view, active, config).into_iter().next(),
    }
}
