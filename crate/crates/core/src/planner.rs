//! Pre-aggregated view planning: dimensions, sufficient statistics,
//! creation and update queries.

use std::collections::HashSet;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::query::{
    active_dims, aggregate_calls, aggregation_depth, check_compatibility, extract_groupby, layer_mut, layers,
    ActiveDims, AggregateCall, AggregateFn, AnalysisError, ClientViewDescriptor, Dimension,
};
use crate::scale::{interval_to_bins, BinSpec, ScaleError};
use crate::selection::{Clause, SelectionConfig};
use crate::sql::format::is_plain_identifier;
use crate::sql::{
    expr_to_sql, to_canonical_sql, to_sql, CaseBranch, Expr, FunctionCall, Literal, ObjectName, Query, SelectItem,
    SqlError, Statement, TableRef,
};

pub const SCHEMA: &str = "mosaic";
const TABLE_PREFIX: &str = "pre_agg_";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("view is not optimizable (rule {0}): {1}")]
    Incompatible(u8, String),
    #[error("{0}")]
    Analysis(#[from] AnalysisError),
    #[error("{0}")]
    Scale(#[from] ScaleError),
    #[error("{0}")]
    Sql(#[from] SqlError),
    #[error("cannot plan: {0}")]
    Unsupported(String),
    #[error("clause does not match the plan: {0}")]
    ClauseMismatch(String),
}

/// Which sufficient statistic a measure column holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StatRole {
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
    LogSum,
    ArgMin,
    ArgMax,
    CenterX,
    CenterY,
    SumX,
    SumY,
    SumXX,
    SumYY,
    SumXY,
}

impl StatRole {
    pub fn suffix(self) -> &'static str {
        use StatRole::*;
        match self {
            Count => "count",
            Sum => "sum",
            Min => "min",
            Max => "max",
            Product => "product",
            BitAnd => "bit_and",
            BitOr => "bit_or",
            BitXor => "bit_xor",
            BoolAnd => "bool_and",
            BoolOr => "bool_or",
            Avg => "avg",
            LogSum => "logsum",
            ArgMin => "argmin",
            ArgMax => "argmax",
            CenterX => "xhat",
            CenterY => "yhat",
            SumX => "sx",
            SumY => "sy",
            SumXX => "sxx",
            SumYY => "syy",
            SumXY => "sxy",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasureColumn {
    pub alias: String,
    /// Aggregate over the source computing this statistic.
    pub creation: Expr,
    pub role: StatRole,
}

/// Statistics for one aggregate call. The reconstruction refers to
/// measure `i` through the placeholder `$m<i>`.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats {
    pub measures: Vec<(StatRole, Expr)>,
    pub reconstruction: Expr,
}

fn m(i: usize) -> Expr {
    Expr::placeholder(&format!("m{i}"))
}

fn agg(name: &str, args: Vec<Expr>, filter: Option<&Expr>) -> Expr {
    let mut call = FunctionCall::new(name, args);
    call.filter = filter.cloned().map(Box::new);
    Expr::Function(call)
}

fn sum(e: Expr) -> Expr {
    Expr::func("SUM", vec![e])
}

/// `CASE WHEN v < 0 THEN 0 ELSE v END`; rounding can push a centered
/// variance a hair below zero.
fn non_negative(v: Expr) -> Expr {
    Expr::Case {
        operand: None,
        branches: vec![CaseBranch {
            when: Expr::binary(crate::sql::BinaryOp::Lt, v.clone(), Expr::int(0)),
            then: Expr::int(0),
        }],
        else_result: Some(Box::new(v)),
    }
}

fn center(x: &Expr, source: &TableRef) -> Expr {
    let q = Query::select(vec![SelectItem::unnamed(Expr::func("AVG", vec![x.clone()]))]).from(source.clone());
    Expr::Subquery(Box::new(q))
}

/// Measures and reconstruction for an eligible aggregate.
///
/// `source` is the relation the aggregate reads, used for centering
/// subqueries; `grouped` tells whether the view groups, since counts over
/// an ungrouped empty input are 0 rather than NULL.
pub fn sufficient_stats(call: &AggregateCall, source: &TableRef, grouped: bool) -> Result<SufficientStats, PlanError> {
    use AggregateFn::*;
    if call.distinct {
        return Err(PlanError::Unsupported(format!("{}(DISTINCT ...)", call.func)));
    }
    let f = call.filter.as_ref();
    let arg = |i: usize| call.args[i].clone();
    let coalesce0 = |e: Expr| {
        if grouped {
            e
        } else {
            Expr::func("COALESCE", vec![e, Expr::int(0)])
        }
    };
    let single = |role: StatRole, fname: &str, recon: &str| {
        let mut c = FunctionCall::new(fname, call.args.clone());
        c.filter = f.cloned().map(Box::new);
        SufficientStats {
            measures: vec![(role, Expr::Function(c))],
            reconstruction: Expr::func(recon, vec![m(0)]),
        }
    };
    let stats = match call.func {
        Count => {
            let mut c = if call.args.is_empty() {
                FunctionCall::count_star()
            } else {
                FunctionCall::new("COUNT", call.args.clone())
            };
            c.filter = f.cloned().map(Box::new);
            SufficientStats {
                measures: vec![(StatRole::Count, Expr::Function(c))],
                reconstruction: coalesce0(sum(m(0))),
            }
        }
        Sum => single(StatRole::Sum, "SUM", "SUM"),
        Min => single(StatRole::Min, "MIN", "MIN"),
        Max => single(StatRole::Max, "MAX", "MAX"),
        Product => single(StatRole::Product, "PRODUCT", "PRODUCT"),
        BitAnd => single(StatRole::BitAnd, "BIT_AND", "BIT_AND"),
        BitOr => single(StatRole::BitOr, "BIT_OR", "BIT_OR"),
        BitXor => single(StatRole::BitXor, "BIT_XOR", "BIT_XOR"),
        BoolAnd => single(StatRole::BoolAnd, "BOOL_AND", "BOOL_AND"),
        BoolOr => single(StatRole::BoolOr, "BOOL_OR", "BOOL_OR"),
        Avg => SufficientStats {
            measures: vec![
                (StatRole::Avg, agg("AVG", vec![arg(0)], f)),
                (StatRole::Count, agg("COUNT", vec![arg(0)], f)),
            ],
            reconstruction: sum(m(0).mul(m(1))).div(sum(m(1))),
        },
        Geomean => SufficientStats {
            measures: vec![
                (StatRole::LogSum, agg("SUM", vec![Expr::func("LN", vec![arg(0)])], f)),
                (StatRole::Count, agg("COUNT", vec![arg(0)], f)),
            ],
            reconstruction: Expr::func("EXP", vec![sum(m(0)).div(sum(m(1)))]),
        },
        ArgMin | ArgMax => {
            let (name, extremum, role) = if call.func == ArgMin {
                ("ARG_MIN", "MIN", StatRole::ArgMin)
            } else {
                ("ARG_MAX", "MAX", StatRole::ArgMax)
            };
            let extreme_role = if call.func == ArgMin { StatRole::Min } else { StatRole::Max };
            SufficientStats {
                measures: vec![
                    (role, agg(name, vec![arg(0), arg(1)], f)),
                    (extreme_role, agg(extremum, vec![arg(1)], f)),
                ],
                reconstruction: Expr::func(name, vec![m(0), m(1)]),
            }
        }
        VarSamp | VarPop | StddevSamp | StddevPop => {
            let d = arg(0).sub(center(&arg(0), source));
            let measures = vec![
                (StatRole::SumX, agg("SUM", vec![d.clone()], f)),
                (StatRole::SumXX, agg("SUM", vec![d.clone().mul(d)], f)),
                (StatRole::Count, agg("COUNT", vec![arg(0)], f)),
            ];
            let n = sum(m(2));
            let ss = sum(m(1)).sub(sum(m(0)).mul(sum(m(0))).div(n.clone()));
            let denom = if matches!(call.func, VarSamp | StddevSamp) {
                n.sub(Expr::int(1))
            } else {
                n
            };
            let var = non_negative(ss.div(denom));
            let reconstruction = if matches!(call.func, StddevSamp | StddevPop) {
                Expr::func("SQRT", vec![var])
            } else {
                var
            };
            SufficientStats { measures, reconstruction }
        }
        _ => {
            debug_assert!(call.func.is_bivariate());
            let (y, x) = (arg(0), arg(1));
            let both = Expr::conjunction(f.cloned().into_iter().chain([y.clone().is_not_null(), x.clone().is_not_null()]))
                .expect("non-empty");
            let fb = Some(&both);
            let dx = x.clone().sub(center(&x, source));
            let dy = y.clone().sub(center(&y, source));
            let mut measures = vec![
                (StatRole::SumX, agg("SUM", vec![dx.clone()], fb)),
                (StatRole::SumY, agg("SUM", vec![dy.clone()], fb)),
                (StatRole::SumXX, agg("SUM", vec![dx.clone().mul(dx.clone())], fb)),
                (StatRole::SumYY, agg("SUM", vec![dy.clone().mul(dy.clone())], fb)),
                (StatRole::SumXY, agg("SUM", vec![dx.mul(dy)], fb)),
                (StatRole::Count, agg("COUNT", vec![], fb)),
            ];
            if let Expr::Function(c) = &mut measures[5].1 {
                c.star = true;
            }
            let n = || sum(m(5));
            let sx = || sum(m(0));
            let sy = || sum(m(1));
            let sxx = || sum(m(2)).sub(sx().mul(sx()).div(n()));
            let syy = || sum(m(3)).sub(sy().mul(sy()).div(n()));
            let sxy = || sum(m(4)).sub(sx().mul(sy()).div(n()));
            // centers are appended only when needed
            let center_measure = |role: StatRole, e: &Expr, measures: &mut Vec<(StatRole, Expr)>| {
                measures.push((role, Expr::func("MIN", vec![center(e, source)])));
                m(measures.len() - 1)
            };
            let avgx = |xhat: &Expr| sx().div(n()).add(Expr::func("MIN", vec![xhat.clone()]));
            let avgy = |yhat: &Expr| sy().div(n()).add(Expr::func("MIN", vec![yhat.clone()]));
            let reconstruction = match call.func {
                CovarPop => sxy().div(n()),
                CovarSamp => sxy().div(n().sub(Expr::int(1))),
                Corr => sxy().div(Expr::func("SQRT", vec![sxx().mul(syy())])),
                RegrCount => coalesce0(n()),
                RegrAvgx => avgx(&center_measure(StatRole::CenterX, &x, &mut measures)),
                RegrAvgy => avgy(&center_measure(StatRole::CenterY, &y, &mut measures)),
                RegrSxx => sxx(),
                RegrSyy => syy(),
                RegrSxy => sxy(),
                RegrSlope => sxy().div(sxx()),
                RegrIntercept => {
                    let xh = center_measure(StatRole::CenterX, &x, &mut measures);
                    let yh = center_measure(StatRole::CenterY, &y, &mut measures);
                    avgy(&yh).sub(sxy().div(sxx()).mul(avgx(&xh)))
                }
                RegrR2 => sxy().mul(sxy()).div(sxx().mul(syy())),
                other => return Err(PlanError::Unsupported(format!("{other} is not bivariate"))),
            };
            SufficientStats { measures, reconstruction }
        }
    };
    Ok(stats)
}

/// How the active clause maps to table columns.
#[derive(Debug, Clone, PartialEq)]
pub enum ActiveKind {
    Interval(Vec<BinSpec>),
    /// Point columns, as they appear in the clause predicate.
    Point(Vec<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaterializedViewPlan {
    pub name: ObjectName,
    /// View grouping dimensions (alias, defining expression).
    pub view_dims: Vec<Dimension>,
    /// Active-clause dimension aliases, parallel to `active`.
    pub active_aliases: Vec<String>,
    pub active: ActiveKind,
    pub measures: Vec<MeasureColumn>,
    /// The hashed SELECT body.
    pub creation_query: Query,
    /// `CREATE TABLE IF NOT EXISTS ... AS ...`
    pub creation: String,
    /// View query with its aggregation layer answered from the table;
    /// active constraints are `$pixel_i`/`$pixel_j` (intervals) or `$point`.
    pub update_template: Query,
    /// Output name of each original aggregate item and its reconstruction.
    pub output_map: Vec<(String, Expr)>,
}

/// `mosaic.pre_agg_` plus a digest prefix of the canonical creation body.
pub fn table_name(creation_body: &str) -> ObjectName {
    let digest = Sha256::digest(creation_body.as_bytes());
    let hex = hex::encode(digest);
    ObjectName(vec![SCHEMA.to_string(), format!("{TABLE_PREFIX}{}", &hex[..16])])
}

struct Names {
    used: HashSet<String>,
}

impl Names {
    fn claim(&mut self, want: &str) -> String {
        let mut candidate = want.to_string();
        let mut k = 2;
        while self.used.contains(&candidate) {
            candidate = format!("{want}_{k}");
            k += 1;
        }
        self.used.insert(candidate.clone());
        candidate
    }
}

/// `expr AS alias`, or the bare column when the names agree.
fn named(expr: Expr, alias: &str) -> SelectItem {
    match &expr {
        Expr::Column(c) if c.table.is_none() && c.name == alias => SelectItem::unnamed(expr),
        _ => SelectItem::new(expr, alias),
    }
}

fn alias_base(item: &SelectItem, index: usize) -> String {
    match item {
        SelectItem::Expr { alias: Some(a), .. } if is_plain_identifier(a) => a.clone(),
        SelectItem::Expr { expr: Expr::Column(c), .. } if is_plain_identifier(&c.name) => c.name.clone(),
        _ => format!("m{index}"),
    }
}

/// Replaces `$name` placeholders.
pub fn substitute(e: &Expr, f: &dyn Fn(&str) -> Option<Expr>) -> Expr {
    e.rewrite(&mut |x| match x {
        Expr::Placeholder(p) => f(p),
        _ => None,
    })
}

fn substitute_query(q: &Query, f: &dyn Fn(&str) -> Option<Expr>) -> Query {
    let mut q = q.clone();
    for item in &mut q.select {
        if let SelectItem::Expr { expr, .. } = item {
            *expr = substitute(expr, f);
        }
    }
    q.selection = q.selection.as_ref().map(|e| substitute(e, f));
    for o in &mut q.order_by {
        o.expr = substitute(&o.expr, f);
    }
    if let Some(TableRef::Subquery { query, .. }) = &mut q.from {
        **query = substitute_query(query, f);
    }
    for c in &mut q.ctes {
        c.query = substitute_query(&c.query, f);
    }
    q
}

/// Builds the pre-aggregation plan for `view` under active clause `active`.
///
/// `base_filter` is the resolved predicate of the selection's other
/// clauses; it is baked into the table, so a change yields a new table.
pub fn plan(
    view: &ClientViewDescriptor,
    active: &Clause,
    config: SelectionConfig,
    base_filter: Option<&Expr>,
) -> Result<MaterializedViewPlan, PlanError> {
    if let Some((rule, why)) = check_compatibility(view, active, config).failure {
        return Err(PlanError::Incompatible(rule, why));
    }
    let meta = active.meta.as_ref().expect("checked");
    let dims = active_dims(active).map_err(|e| PlanError::Incompatible(3, e))?;
    let q = &view.query;
    let ls = layers(q);
    let depth = aggregation_depth(q).ok_or_else(|| PlanError::Incompatible(7, "no aggregates".into()))?;
    let agg_layer = ls[depth].clone();
    let base_depth = ls.len() - 1;
    for inner in &ls[depth + 1..] {
        if inner.distinct || inner.limit.is_some() {
            return Err(PlanError::Unsupported("inner layer with DISTINCT or LIMIT".into()));
        }
    }
    let source = agg_layer.from.clone().ok_or_else(|| PlanError::Unsupported("no FROM".into()))?;
    let grouped = !agg_layer.group_by.is_empty();
    let view_dims = extract_groupby(q)?;

    let mut names = Names { used: HashSet::new() };
    let mut table_dims: Vec<Dimension> = Vec::new();
    for d in &view_dims {
        let alias = names.claim(&d.name);
        table_dims.push(Dimension {
            name: alias,
            expr: d.expr.clone(),
        });
    }

    // active dimension expressions, evaluated over base columns
    let (active_kind, active_exprs): (ActiveKind, Vec<Expr>) = match &dims {
        ActiveDims::Interval(ds) => {
            let specs = ds
                .iter()
                .zip(&meta.scales)
                .map(|(d, s)| BinSpec::new(s.clone(), meta.pixel_size, meta.bin, d.expr.clone()))
                .collect::<Result<Vec<_>, _>>()?;
            let exprs = specs.iter().map(BinSpec::bin_expression).collect();
            (ActiveKind::Interval(specs), exprs)
        }
        ActiveDims::Point(p) => (ActiveKind::Point(p.columns.clone()), p.columns.clone()),
    };
    let active_aliases: Vec<String> = match &dims {
        ActiveDims::Interval(ds) if ds.len() == 1 => vec![names.claim("active")],
        ActiveDims::Interval(ds) => (0..ds.len()).map(|i| names.claim(&format!("active{i}"))).collect(),
        ActiveDims::Point(p) => p
            .columns
            .iter()
            .enumerate()
            .map(|(i, c)| match c {
                Expr::Column(col) if is_plain_identifier(&col.name) && !names.used.contains(&col.name) => {
                    names.claim(&col.name)
                }
                _ if p.columns.len() == 1 => names.claim("active"),
                _ => names.claim(&format!("active{i}")),
            })
            .collect(),
    };

    // measures, deduplicated by creation text
    let mut measures: Vec<MeasureColumn> = Vec::new();
    let mut recon_by_call: Vec<(FunctionCall, Expr)> = Vec::new();
    let mut output_map = Vec::new();
    for (idx, item) in agg_layer.select.iter().enumerate() {
        let Some(expr) = item.expr() else {
            return Err(PlanError::Unsupported("SELECT * in an aggregating layer".into()));
        };
        let calls = aggregate_calls(expr);
        if calls.is_empty() {
            continue;
        }
        let base = alias_base(item, idx);
        let whole = calls.len() == 1 && matches!(expr, Expr::Function(f) if f == calls[0]);
        for call in calls {
            if recon_by_call.iter().any(|(c, _)| c == call) {
                continue;
            }
            let analysed = AggregateCall::from_call(call).map_err(|e| PlanError::Incompatible(6, e))?;
            let stats = sufficient_stats(&analysed, &source, grouped)?;
            let sole = whole && stats.measures.len() == 1;
            let mut aliases = Vec::new();
            for (role, creation) in stats.measures {
                let key = expr_to_sql(&creation);
                if let Some(existing) = measures.iter().find(|mc| expr_to_sql(&mc.creation) == key) {
                    aliases.push(existing.alias.clone());
                    continue;
                }
                let alias = if sole {
                    names.claim(&base)
                } else {
                    names.claim(&format!("{base}_{}", role.suffix()))
                };
                aliases.push(alias.clone());
                measures.push(MeasureColumn { alias, creation, role });
            }
            let recon = substitute(&stats.reconstruction, &|p| {
                p.strip_prefix('m')
                    .and_then(|i| i.parse::<usize>().ok())
                    .and_then(|i| aliases.get(i))
                    .map(|a| Expr::col(a))
            });
            recon_by_call.push((call.clone(), recon));
        }
        output_map.push((item.output_name().unwrap_or_default(), Expr::null()));
    }

    // rewrite agg-layer expressions over table columns
    let rewrite = |e: &Expr| -> Result<Expr, PlanError> {
        let mut failure = None;
        let out = e.rewrite(&mut |x| {
            if let Expr::Function(f) = x {
                if let Some((_, r)) = recon_by_call.iter().find(|(c, _)| c == f) {
                    return Some(r.clone());
                }
            }
            if let Some(d) = view_dims.iter().zip(&table_dims).find(|(d, _)| &d.expr == x) {
                return Some(Expr::col(&d.1.name));
            }
            if let Expr::Column(c) = x {
                if c.table.is_none() && table_dims.iter().any(|d| d.name == c.name) {
                    return Some(x.clone());
                }
                failure.get_or_insert_with(|| c.name.clone());
            }
            None
        });
        match failure {
            Some(c) => Err(PlanError::Unsupported(format!("column {c} is not a grouping dimension"))),
            None => Ok(out),
        }
    };
    let mut update_items = Vec::new();
    let mut out_idx = 0;
    for item in &agg_layer.select {
        let expr = item.expr().expect("checked above");
        let name = item.output_name().unwrap_or_default();
        let new = rewrite(expr)?;
        if !aggregate_calls(expr).is_empty() {
            output_map[out_idx].1 = new.clone();
            out_idx += 1;
        }
        update_items.push(named(new, &name));
    }

    // creation query: the aggregation layer regrouped by view and active dims
    let mut creation = agg_layer.clone();
    creation.order_by.clear();
    creation.limit = None;
    creation.distinct = false;
    let mut active_cols = active_exprs.clone();
    if base_depth > depth {
        // compute active dims in the base layer and pass them up
        let mut sub = q.clone();
        let inner_aliases: Vec<String> = (0..active_exprs.len()).map(|i| format!("__active{i}")).collect();
        for d in depth + 1..=base_depth {
            let layer = layer_mut(&mut sub, d).expect("layer exists");
            let has_wildcard = layer.select.iter().any(|s| matches!(s, SelectItem::Wildcard));
            for (i, alias) in inner_aliases.iter().enumerate() {
                if d == base_depth {
                    layer.select.push(SelectItem::new(active_exprs[i].clone(), alias));
                } else if !has_wildcard {
                    layer.select.push(SelectItem::new(Expr::col(alias), alias));
                }
            }
            if d == base_depth {
                if let Some(p) = base_filter {
                    layer.selection = Some(match layer.selection.take() {
                        Some(w) => w.and(p.clone()),
                        None => p.clone(),
                    });
                }
            }
        }
        let moved = layer_mut(&mut sub, depth).expect("layer exists");
        creation.from = moved.from.clone();
        creation.ctes = moved.ctes.clone();
        active_cols = inner_aliases.iter().map(|a| Expr::col(a)).collect();
    } else if let Some(p) = base_filter {
        creation.selection = Some(match creation.selection.take() {
            Some(w) => w.and(p.clone()),
            None => p.clone(),
        });
    }
    creation.select = table_dims
        .iter()
        .map(|d| named(d.expr.clone(), &d.name))
        .chain(measures.iter().map(|mc| SelectItem::new(mc.creation.clone(), &mc.alias)))
        .chain(active_cols.iter().zip(&active_aliases).map(|(e, a)| named(e.clone(), a)))
        .collect();
    creation.group_by = table_dims
        .iter()
        .map(|d| Expr::col(&d.name))
        .chain(active_aliases.iter().map(|a| Expr::col(a)))
        .collect();

    let body = to_canonical_sql(&creation)?;
    let name = table_name(&body);
    let creation_sql = crate::sql::statement_to_sql(&Statement::CreateTableAs {
        name: name.clone(),
        if_not_exists: true,
        query: creation.clone(),
    })?;

    // update template
    let constraint = match &dims {
        ActiveDims::Interval(ds) => Expr::conjunction(active_aliases.iter().enumerate().map(|(i, a)| {
            let suffix = if ds.len() == 1 { String::new() } else { i.to_string() };
            Expr::col(a).between(
                Expr::placeholder(&format!("pixel_i{suffix}")),
                Expr::placeholder(&format!("pixel_j{suffix}")),
            )
        }))
        .expect("at least one dimension"),
        ActiveDims::Point(_) => Expr::placeholder("point"),
    };
    let mut update_layer = Query {
        ctes: vec![],
        distinct: false,
        select: update_items,
        from: Some(TableRef::Table {
            name: name.clone(),
            alias: None,
        }),
        selection: Some(constraint),
        group_by: table_dims.iter().map(|d| Expr::col(&d.name)).collect(),
        order_by: vec![],
        limit: agg_layer.limit,
    };
    for o in &agg_layer.order_by {
        let is_output = matches!(&o.expr, Expr::Column(c) if c.table.is_none()
            && agg_layer.select.iter().any(|s| s.output_name().as_deref() == Some(c.name.as_str())));
        let expr = if is_output { o.expr.clone() } else { rewrite(&o.expr)? };
        update_layer.order_by.push(crate::sql::OrderItem { expr, desc: o.desc });
    }
    let mut update_template = q.clone();
    if depth == 0 {
        update_template = update_layer;
    } else {
        *layer_mut(&mut update_template, depth).expect("layer exists") = update_layer;
    }

    Ok(MaterializedViewPlan {
        name,
        view_dims: table_dims,
        active_aliases,
        active: active_kind,
        measures,
        creation_query: creation,
        creation: creation_sql,
        update_template,
        output_map,
    })
}

impl MaterializedViewPlan {
    /// Number of active-clause bin combinations, for interval clauses.
    pub fn interactive_resolution(&self) -> Option<u64> {
        match &self.active {
            ActiveKind::Interval(specs) => Some(specs.iter().map(|s| s.bin_count().max(0) as u64).product()),
            ActiveKind::Point(_) => None,
        }
    }

    /// Active-dimension constraint for the clause's current values.
    pub fn active_constraint(&self, clause: &Clause) -> Result<Expr, PlanError> {
        match &self.active {
            ActiveKind::Interval(specs) => {
                let dims = crate::query::interval_dims(&clause.predicate).map_err(PlanError::ClauseMismatch)?;
                if dims.len() != specs.len() {
                    return Err(PlanError::ClauseMismatch(format!(
                        "expected {} interval dimension(s), got {}",
                        specs.len(),
                        dims.len()
                    )));
                }
                for (d, s) in dims.iter().zip(specs) {
                    if d.expr != s.column {
                        return Err(PlanError::ClauseMismatch(format!(
                            "interval over {} where {} was planned",
                            expr_to_sql(&d.expr),
                            expr_to_sql(&s.column)
                        )));
                    }
                }
                let bins = interval_to_bins(specs, &dims.iter().map(|d| [d.lo, d.hi]).collect::<Vec<_>>())?;
                Ok(Expr::conjunction(
                    self.active_aliases
                        .iter()
                        .zip(bins)
                        .map(|(a, [lo, hi])| Expr::col(a).between(Expr::int(lo), Expr::int(hi))),
                )
                .expect("non-empty"))
            }
            ActiveKind::Point(columns) => {
                let p = crate::query::point_dims(&clause.predicate).map_err(PlanError::ClauseMismatch)?;
                if &p.columns != columns {
                    return Err(PlanError::ClauseMismatch("point columns differ from the plan".into()));
                }
                if columns.len() == 1 {
                    let col = Expr::col(&self.active_aliases[0]);
                    let values: Vec<Expr> = p.tuples.iter().map(|t| Expr::Literal(t[0].clone())).collect();
                    return Ok(if values.len() == 1 {
                        col.eq(values.into_iter().next().expect("one"))
                    } else {
                        col.in_list(values)
                    });
                }
                let terms = p.tuples.iter().map(|t| {
                    Expr::conjunction(
                        self.active_aliases
                            .iter()
                            .zip(t)
                            .map(|(a, v): (&String, &Literal)| Expr::col(a).eq(Expr::Literal(v.clone()))),
                    )
                    .expect("non-empty")
                });
                Ok(Expr::disjunction(terms).unwrap_or_else(|| Expr::boolean(false)))
            }
        }
    }

    /// Update query for the active clause's current values.
    pub fn update_query_ast(&self, clause: &Clause) -> Result<Query, PlanError> {
        let constraint = self.active_constraint(clause)?;
        let mut bounds: Vec<(String, Expr)> = Vec::new();
        let conjuncts: Vec<Expr> = constraint.conjuncts().into_iter().cloned().collect();
        if let ActiveKind::Interval(specs) = &self.active {
            for (i, c) in conjuncts.iter().enumerate() {
                if let Expr::Between { low, high, .. } = c {
                    let suffix = if specs.len() == 1 { String::new() } else { i.to_string() };
                    bounds.push((format!("pixel_i{suffix}"), (**low).clone()));
                    bounds.push((format!("pixel_j{suffix}"), (**high).clone()));
                }
            }
        } else {
            bounds.push(("point".into(), constraint));
        }
        Ok(substitute_query(&self.update_template, &|p| {
            bounds.iter().find(|(n, _)| n == p).map(|(_, e)| e.clone())
        }))
    }

    pub fn update_query(&self, clause: &Clause) -> Result<String, PlanError> {
        Ok(to_sql(&self.update_query_ast(clause)?)?)
    }

    /// Upper bound on the table's row count given the view's bin count.
    pub fn max_rows(&self, client_bins: u64) -> Option<u64> {
        self.interactive_resolution().map(|r| max_view_rows(r, client_bins))
    }
}

/// Interactive resolution times client bins.
pub fn max_view_rows(interactive_resolution: u64, client_bins: u64) -> u64 {
    interactive_resolution * client_bins
}
