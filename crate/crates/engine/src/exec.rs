//! Query execution: morsel-driven scans, filters, hash aggregation,
//! projection, joins, DISTINCT, ORDER BY and LIMIT.

use std::cell::RefCell;
use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::rc::Rc;
use std::sync::Arc;

use selcube_core::data::{Column, ColumnData, DataType, QueryResult, Value, Values};
use selcube_core::sql::{
    to_sql, BinaryOp, ColumnRef, Expr, JoinKind, Literal, ObjectName, Query, SelectItem, TableRef,
};
use smallvec::SmallVec;

use crate::aggregate::{AggFunc, AggInput, BoundAgg, Accumulator};
use crate::error::{bind_err, exec_err, EngineError, Result};
use crate::expr::{unify, BExpr, Batch, Binder, Field, Kind, Schema, SubqueryRunner};
use crate::hash::{FastMap, FastSet};
use crate::table::{Table, MORSEL_ROWS};
use crate::vector::{concat, float_key, gather, gather_opt, mask_to_indices, slice, true_mask};

/// Morsels per task. Tasks are the unit of parallelism and the partition is
/// the same in every mode, so results do not depend on the mode.
pub const TASK_MORSELS: usize = 8;
pub const TASK_ROWS: usize = MORSEL_ROWS * TASK_MORSELS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecMode {
    #[default]
    Parallel,
    Sequential,
}

pub const DEFAULT_SCHEMA: &str = "main";

/// Schemas and tables; names are stored lower-case.
#[derive(Debug, Clone, Default)]
pub struct Catalog {
    pub schemas: BTreeSet<String>,
    pub tables: BTreeMap<(String, String), Arc<Table>>,
}

impl Catalog {
    pub fn new() -> Catalog {
        let mut c = Catalog::default();
        c.schemas.insert(DEFAULT_SCHEMA.to_string());
        c
    }

    pub fn key(name: &ObjectName) -> (String, String) {
        (
            name.schema().unwrap_or(DEFAULT_SCHEMA).to_ascii_lowercase(),
            name.base().to_ascii_lowercase(),
        )
    }

    pub fn get(&self, name: &ObjectName) -> Option<Arc<Table>> {
        self.tables.get(&Catalog::key(name)).cloned()
    }

    fn information_schema_tables(&self) -> Table {
        let (schemas, names): (Vec<Arc<str>>, Vec<Arc<str>>) = self
            .tables
            .keys()
            .map(|(s, t)| (Arc::from(s.as_str()), Arc::from(t.as_str())))
            .unzip();
        let n = names.len();
        Table::new(
            vec!["table_schema".into(), "table_name".into(), "table_type".into()],
            vec![
                ColumnData::new(Values::Str(schemas)),
                ColumnData::new(Values::Str(names)),
                ColumnData::new(Values::Str(vec![Arc::from("BASE TABLE"); n])),
            ],
        )
        .expect("well-formed")
    }
}

/// Per-statement execution state.
pub struct Context {
    catalog: Arc<Catalog>,
    mode: ExecMode,
    ctes: Vec<(String, Arc<Table>)>,
    scalar_cache: Rc<RefCell<HashMap<String, Value>>>,
}

struct Source {
    table: Arc<Table>,
    schema: Schema,
}

impl Context {
    pub fn new(catalog: Arc<Catalog>, mode: ExecMode) -> Context {
        Context {
            catalog,
            mode,
            ctes: Vec::new(),
            scalar_cache: Rc::new(RefCell::new(HashMap::new())),
        }
    }

    fn child(&self) -> Context {
        Context {
            catalog: self.catalog.clone(),
            mode: self.mode,
            ctes: self.ctes.clone(),
            scalar_cache: self.scalar_cache.clone(),
        }
    }

    fn binder<'a>(&'a self, schema: &'a Schema) -> Binder<'a> {
        Binder {
            schema,
            subqueries: self,
        }
    }

    pub fn run_query(&self, q: &Query) -> Result<QueryResult> {
        if q.ctes.is_empty() {
            return self.run_body(q);
        }
        let mut ctx = self.child();
        for cte in &q.ctes {
            let t = Table::from_result(ctx.run_query(&cte.query)?)?;
            ctx.ctes.push((cte.name.to_ascii_lowercase(), Arc::new(t)));
        }
        ctx.run_body(q)
    }

    fn run_body(&self, q: &Query) -> Result<QueryResult> {
        let src = self.source(q.from.as_ref())?;
        let items = expand_wildcards(&q.select, &src.schema);
        let names: Vec<String> = items
            .iter()
            .map(|i| i.output_name().unwrap_or_default())
            .collect();
        let filter = match &q.selection {
            Some(w) => {
                if w.contains_aggregate() {
                    return bind_err("aggregates are not allowed in WHERE");
                }
                let b = self.binder(&src.schema).bind(w)?;
                if !matches!(b.ty, None | Some(DataType::Bool)) {
                    return bind_err("WHERE needs a boolean expression");
                }
                Some(b)
            }
            None => None,
        };
        let is_agg = !q.group_by.is_empty() || items.iter().filter_map(SelectItem::expr).any(Expr::contains_aggregate);
        let (mut columns, hidden_order) = if is_agg {
            self.run_aggregate(q, &items, &names, &src, filter.as_ref())?
        } else {
            self.run_projection(q, &items, &names, &src, filter.as_ref())?
        };
        let visible = items.len();
        if q.distinct {
            let keep = distinct_rows(&columns[..visible]);
            if keep.len() != columns.first().map(ColumnData::len).unwrap_or(0) {
                columns = columns.iter().map(|c| gather(c, &keep)).collect();
            }
        }
        let rows = columns.first().map(ColumnData::len).unwrap_or(0);
        let mut perm: Option<Vec<u32>> = None;
        if !q.order_by.is_empty() {
            let keys: Vec<(usize, bool)> = hidden_order;
            let mut idx: Vec<u32> = (0..rows as u32).collect();
            idx.sort_by(|&a, &b| {
                for &(c, desc) in &keys {
                    let o = cmp_rows(&columns[c], a as usize, b as usize, desc);
                    if o != Ordering::Equal {
                        return o;
                    }
                }
                Ordering::Equal
            });
            perm = Some(idx);
        }
        if let Some(limit) = q.limit {
            let limit = limit.min(rows as u64) as usize;
            if limit < rows {
                let mut idx = perm.unwrap_or_else(|| (0..rows as u32).collect());
                idx.truncate(limit);
                perm = Some(idx);
            }
        }
        columns.truncate(visible);
        if let Some(p) = perm {
            columns = columns.iter().map(|c| gather(c, &p)).collect();
        }
        Ok(QueryResult::new(
            names.into_iter().zip(columns).map(|(n, c)| Column::new(n, c)).collect(),
        ))
    }

    fn source(&self, from: Option<&TableRef>) -> Result<Source> {
        let Some(from) = from else {
            return Ok(Source {
                table: Arc::new(Table::unit(1)),
                schema: Schema::default(),
            });
        };
        match from {
            TableRef::Table { name, alias } => {
                let qualifier = alias.clone().unwrap_or_else(|| name.base().to_string());
                let table = self.lookup(name)?;
                let schema = table.schema(Some(&qualifier));
                Ok(Source { table, schema })
            }
            TableRef::Subquery { query, alias } => {
                let t = Table::from_result(self.run_query(query)?)?;
                let schema = t.schema(alias.as_deref());
                Ok(Source {
                    table: Arc::new(t),
                    schema,
                })
            }
            TableRef::Join { left, right, kind, on } => {
                let l = self.source(Some(left))?;
                let r = self.source(Some(right))?;
                self.join(l, r, *kind, on.as_ref())
            }
        }
    }

    fn lookup(&self, name: &ObjectName) -> Result<Arc<Table>> {
        if name.0.len() == 1 {
            let n = name.base().to_ascii_lowercase();
            if let Some((_, t)) = self.ctes.iter().rev().find(|(c, _)| *c == n) {
                return Ok(t.clone());
            }
        }
        let (schema, base) = Catalog::key(name);
        if schema == "information_schema" && base == "tables" {
            return Ok(Arc::new(self.catalog.information_schema_tables()));
        }
        self.catalog
            .tables
            .get(&(schema, base))
            .cloned()
            .ok_or_else(|| EngineError::Catalog(format!("table {name} does not exist")))
    }

    fn join(&self, l: Source, r: Source, kind: JoinKind, on: Option<&Expr>) -> Result<Source> {
        let schema = Schema {
            fields: l.schema.fields.iter().chain(&r.schema.fields).cloned().collect(),
        };
        let (nl, nr) = (l.table.rows, r.table.rows);
        let mut equi: Vec<(BExpr, BExpr)> = Vec::new();
        let mut residual: Vec<&Expr> = Vec::new();
        if let Some(on) = on {
            for c in on.conjuncts() {
                if let Expr::Binary {
                    op: BinaryOp::Eq,
                    left: a,
                    right: b,
                } = c
                {
                    let (lb, rb) = (self.binder(&l.schema), self.binder(&r.schema));
                    if let (Ok(x), Ok(y)) = (lb.bind(a), rb.bind(b)) {
                        equi.push((x, y));
                        continue;
                    }
                    if let (Ok(x), Ok(y)) = (lb.bind(b), rb.bind(a)) {
                        equi.push((x, y));
                        continue;
                    }
                }
                residual.push(c);
            }
        }
        let mut pairs: Vec<(u32, Option<u32>)> = Vec::new();
        if equi.is_empty() {
            for i in 0..nl as u32 {
                for j in 0..nr as u32 {
                    pairs.push((i, Some(j)));
                }
            }
        } else {
            let key_cols = |src: &Source, exprs: Vec<&BExpr>, tys: &[DataType]| -> Result<Vec<ColumnData>> {
                let cols: Vec<Option<ColumnData>> = src.table.columns.iter().cloned().map(Some).collect();
                let batch = Batch {
                    columns: &cols,
                    len: src.table.rows,
                };
                exprs
                    .into_iter()
                    .zip(tys)
                    .map(|(e, t)| Ok(e.eval(&batch)?.into_column(src.table.rows, *t)))
                    .collect()
            };
            let tys: Vec<DataType> = equi
                .iter()
                .map(|(a, b)| Ok(unify([a.ty, b.ty])?.unwrap_or(DataType::Int)))
                .collect::<Result<_>>()?;
            let lk = key_cols(&l, equi.iter().map(|e| &e.0).collect(), &tys)?;
            let rk = key_cols(&r, equi.iter().map(|e| &e.1).collect(), &tys)?;
            let mut build: FastMap<SmallVec<[KeyPart; 2]>, Vec<u32>> = FastMap::default();
            for j in 0..nr {
                if rk.iter().all(|c| c.is_valid(j)) {
                    build.entry(row_key(&rk, j)).or_default().push(j as u32);
                }
            }
            for i in 0..nl {
                if lk.iter().all(|c| c.is_valid(i)) {
                    if let Some(ms) = build.get(&row_key(&lk, i)) {
                        pairs.extend(ms.iter().map(|&j| (i as u32, Some(j))));
                    }
                }
            }
        }
        let materialize = |pairs: &[(u32, Option<u32>)]| -> Vec<ColumnData> {
            let li: Vec<u32> = pairs.iter().map(|p| p.0).collect();
            let ri: Vec<Option<u32>> = pairs.iter().map(|p| p.1).collect();
            l.table
                .columns
                .iter()
                .map(|c| gather(c, &li))
                .chain(r.table.columns.iter().map(|c| gather_opt(c, &ri)))
                .collect()
        };
        let mut cols = materialize(&pairs);
        if let Some(pred) = Expr::conjunction(residual.into_iter().cloned()) {
            let b = self.binder(&schema).bind(&pred)?;
            let slots: Vec<Option<ColumnData>> = cols.iter().cloned().map(Some).collect();
            let mask = true_mask(
                &b.eval(&Batch {
                    columns: &slots,
                    len: pairs.len(),
                })?,
                pairs.len(),
            );
            pairs = pairs.into_iter().zip(mask).filter(|(_, m)| *m).map(|(p, _)| p).collect();
            cols = materialize(&pairs);
        }
        if kind == JoinKind::Left {
            let mut matched = vec![false; nl];
            for p in &pairs {
                matched[p.0 as usize] = true;
            }
            let mut all: Vec<(u32, Option<u32>)> = Vec::with_capacity(pairs.len());
            let mut k = 0;
            for (i, m) in matched.iter().enumerate() {
                if *m {
                    while k < pairs.len() && pairs[k].0 as usize == i {
                        all.push(pairs[k]);
                        k += 1;
                    }
                } else {
                    all.push((i as u32, None));
                }
            }
            pairs = all;
            cols = materialize(&pairs);
        }
        let names = schema.fields.iter().map(|f| f.name.clone()).collect();
        let table = if cols.is_empty() {
            Table::unit(pairs.len())
        } else {
            Table::new(names, cols)?
        };
        Ok(Source {
            table: Arc::new(table),
            schema,
        })
    }

    /// Resolves ORDER BY items to result columns, appending hidden
    /// expressions after the visible ones.
    fn order_keys(
        &self,
        q: &Query,
        names: &[String],
        hidden: &mut Vec<Expr>,
    ) -> Vec<(usize, bool)> {
        let visible = names.len();
        q.order_by
            .iter()
            .map(|o| {
                if let Some(i) = output_ref(&o.expr, names) {
                    return (i, o.desc);
                }
                hidden.push(o.expr.clone());
                (visible + hidden.len() - 1, o.desc)
            })
            .collect()
    }

    fn run_projection(
        &self,
        q: &Query,
        items: &[SelectItem],
        names: &[String],
        src: &Source,
        filter: Option<&BExpr>,
    ) -> Result<(Vec<ColumnData>, Vec<(usize, bool)>)> {
        let mut hidden = Vec::new();
        let order = self.order_keys(q, names, &mut hidden);
        let binder = self.binder(&src.schema);
        let exprs: Vec<BExpr> = items
            .iter()
            .filter_map(SelectItem::expr)
            .chain(hidden.iter())
            .map(|e| binder.bind(e))
            .collect::<Result<_>>()?;
        let mut used = Vec::new();
        for e in exprs.iter().chain(filter) {
            e.columns_used(&mut used);
        }
        let parts = self.scan(&src.table, &used, filter, |batch| {
            exprs
                .iter()
                .map(|e| Ok(e.eval(batch)?.into_column(batch.len, e.output_type())))
                .collect::<Result<Vec<_>>>()
        })?;
        let mut per_expr: Vec<Vec<ColumnData>> = vec![Vec::new(); exprs.len()];
        for task in parts {
            for morsel in task {
                for (i, c) in morsel.into_iter().enumerate() {
                    per_expr[i].push(c);
                }
            }
        }
        let cols = per_expr
            .into_iter()
            .zip(&exprs)
            .map(|(p, e)| concat(p, e.output_type()))
            .collect();
        Ok((cols, order))
    }

    fn run_aggregate(
        &self,
        q: &Query,
        items: &[SelectItem],
        names: &[String],
        src: &Source,
        filter: Option<&BExpr>,
    ) -> Result<(Vec<ColumnData>, Vec<(usize, bool)>)> {
        if items.iter().any(|i| matches!(i, SelectItem::Wildcard)) {
            return bind_err("SELECT * is not allowed with aggregates");
        }
        // GROUP BY items: output alias, then position, then expression
        let mut keys: Vec<Expr> = Vec::new();
        for g in &q.group_by {
            let resolved = match g {
                Expr::Literal(Literal::Int(k)) => {
                    let k = *k as usize;
                    match items.get(k.wrapping_sub(1)).and_then(SelectItem::expr) {
                        Some(e) => e.clone(),
                        None => return bind_err(format!("GROUP BY position {k} is out of range")),
                    }
                }
                Expr::Column(ColumnRef { table: None, name }) => items
                    .iter()
                    .find_map(|i| match i {
                        SelectItem::Expr { expr, alias: Some(a) }
                            if a.eq_ignore_ascii_case(name) && !expr.contains_aggregate() =>
                        {
                            Some(expr.clone())
                        }
                        _ => None,
                    })
                    .unwrap_or_else(|| g.clone()),
                _ => g.clone(),
            };
            if resolved.contains_aggregate() {
                return bind_err("aggregates are not allowed in GROUP BY");
            }
            if !keys.contains(&resolved) {
                keys.push(resolved);
            }
        }
        let mut hidden = Vec::new();
        let order = self.order_keys(q, names, &mut hidden);

        let mut aggs: Vec<Expr> = Vec::new();
        let mut lift = |e: &Expr| -> Expr {
            e.rewrite(&mut |node| {
                if let Some(j) = keys.iter().position(|k| k == node) {
                    return Some(Expr::col(&format!("__key{j}")));
                }
                if let Expr::Function(f) = node {
                    if f.is_aggregate() {
                        let i = aggs.iter().position(|a| a == node).unwrap_or_else(|| {
                            aggs.push(node.clone());
                            aggs.len() - 1
                        });
                        return Some(Expr::col(&format!("__agg{i}")));
                    }
                }
                None
            })
        };
        let post_exprs: Vec<Expr> = items
            .iter()
            .filter_map(SelectItem::expr)
            .chain(hidden.iter())
            .map(&mut lift)
            .collect();

        let binder = self.binder(&src.schema);
        let key_exprs: Vec<BExpr> = keys.iter().map(|k| binder.bind(k)).collect::<Result<_>>()?;
        let bound_aggs: Vec<BoundAgg> = aggs
            .iter()
            .map(|a| {
                let Expr::Function(f) = a else { unreachable!() };
                let func = AggFunc::from_name(&f.name, f.star)
                    .ok_or_else(|| EngineError::Bind(format!("unknown aggregate {}", f.name)))?;
                let args = f.args.iter().map(|x| binder.bind(x)).collect::<Result<Vec<_>>>()?;
                let filt = f.filter.as_ref().map(|x| binder.bind(x)).transpose()?;
                BoundAgg::new(func, args, f.distinct, filt)
            })
            .collect::<Result<_>>()?;

        let (key_cols, agg_cols, ngroups) = self.aggregate(src, filter, &key_exprs, &bound_aggs)?;

        let mut fields = Vec::new();
        let mut slots = Vec::new();
        for (j, c) in key_cols.into_iter().enumerate() {
            fields.push(Field {
                qualifier: None,
                name: format!("__key{j}"),
                ty: key_exprs[j].output_type(),
            });
            slots.push(Some(c));
        }
        for (i, c) in agg_cols.into_iter().enumerate() {
            fields.push(Field {
                qualifier: None,
                name: format!("__agg{i}"),
                ty: bound_aggs[i].ty,
            });
            slots.push(Some(c));
        }
        let post_schema = Schema { fields };
        let post = self.binder(&post_schema);
        let batch = Batch {
            columns: &slots,
            len: ngroups,
        };
        let cols = post_exprs
            .iter()
            .map(|e| {
                let b = post.bind(e).map_err(|err| match err {
                    EngineError::Bind(m) if m.contains("not found") => EngineError::Bind(format!(
                        "{m}; columns must appear in GROUP BY or inside an aggregate"
                    )),
                    other => other,
                })?;
                Ok(b.eval(&batch)?.into_column(ngroups, b.output_type()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((cols, order))
    }

    fn aggregate(
        &self,
        src: &Source,
        filter: Option<&BExpr>,
        keys: &[BExpr],
        aggs: &[BoundAgg],
    ) -> Result<(Vec<ColumnData>, Vec<ColumnData>, usize)> {
        let mut used = Vec::new();
        for e in keys.iter().chain(filter) {
            e.columns_used(&mut used);
        }
        for a in aggs {
            for e in a.args.iter().chain(a.filter.as_ref()) {
                e.columns_used(&mut used);
            }
        }
        let key_types: Vec<DataType> = keys.iter().map(BExpr::output_type).collect();
        let input_types: Vec<Vec<DataType>> = aggs.iter().map(BoundAgg::input_types).collect();
        let partials = self.scan_tasks(&src.table, &used, filter, |morsels| {
            let mut st = GroupState::new(&key_types, aggs);
            for batch in morsels {
                let n = batch.len;
                let gids = if keys.is_empty() {
                    vec![0u32; n]
                } else {
                    let cols: Vec<ColumnData> = keys
                        .iter()
                        .zip(&key_types)
                        .map(|(k, t)| Ok(k.eval(&batch)?.into_column(n, *t)))
                        .collect::<Result<_>>()?;
                    st.assign(&cols)
                };
                for (a, agg) in aggs.iter().enumerate() {
                    let args: Vec<ColumnData> = agg
                        .args
                        .iter()
                        .zip(&input_types[a])
                        .map(|(e, t)| Ok(e.eval(&batch)?.into_column(n, *t)))
                        .collect::<Result<_>>()?;
                    let mask = match &agg.filter {
                        Some(f) => Some(true_mask(&f.eval(&batch)?, n)),
                        None => None,
                    };
                    let refs: Vec<&ColumnData> = args.iter().collect();
                    st.accs[a].update(
                        st.ngroups,
                        &AggInput {
                            gids: &gids,
                            args: &refs,
                            mask: mask.as_deref(),
                        },
                    );
                }
            }
            Ok(st)
        })?;
        let mut global: Option<GroupState> = None;
        for part in partials {
            match global.as_mut() {
                None => global = Some(part),
                Some(g) => g.absorb(part),
            }
        }
        let mut g = global.unwrap_or_else(|| GroupState::new(&key_types, aggs));
        if keys.is_empty() {
            g.ngroups = 1;
        }
        let n = g.ngroups;
        let key_cols = g
            .key_vals
            .iter()
            .zip(&key_types)
            .map(|(v, t)| crate::vector::column_from_values(v, *t))
            .collect();
        let agg_cols = g.accs.iter_mut().map(|a| a.finish(n)).collect();
        Ok((key_cols, agg_cols, n))
    }

    /// Runs `per_task` over the filtered morsels of each task, in task order.
    fn scan_tasks<T: Send>(
        &self,
        table: &Table,
        used: &[usize],
        filter: Option<&BExpr>,
        per_task: impl Fn(Vec<Batch<'_>>) -> Result<T> + Sync,
    ) -> Result<Vec<T>> {
        let prune = filter.map(prune_terms).unwrap_or_default();
        let ntasks = table.rows.div_ceil(TASK_ROWS);
        let run = |t: usize| -> Result<T> {
            let first = t * TASK_MORSELS;
            let last = ((t + 1) * TASK_MORSELS).min(table.morsels());
            let mut slots: Vec<Vec<Option<ColumnData>>> = Vec::new();
            let mut lens = Vec::new();
            for m in first..last {
                if let Some((cols, n)) = morsel(table, used, filter, &prune, m)? {
                    slots.push(cols);
                    lens.push(n);
                }
            }
            let batches = slots
                .iter()
                .zip(&lens)
                .map(|(c, &n)| Batch { columns: c, len: n })
                .collect();
            per_task(batches)
        };
        let out: Vec<Result<T>> = if self.mode == ExecMode::Parallel && ntasks > 1 {
            par_map(ntasks, &run)
        } else {
            (0..ntasks).map(run).collect()
        };
        out.into_iter().collect()
    }

    /// Per-morsel variant of [`Context::scan_tasks`].
    fn scan<T: Send>(
        &self,
        table: &Table,
        used: &[usize],
        filter: Option<&BExpr>,
        per_morsel: impl Fn(&Batch) -> Result<T> + Sync,
    ) -> Result<Vec<Vec<T>>> {
        self.scan_tasks(table, used, filter, |batches| {
            batches.iter().map(&per_morsel).collect::<Result<Vec<_>>>()
        })
    }
}

#[cfg(feature = "parallel")]
fn par_map<T: Send>(n: usize, f: &(impl Fn(usize) -> T + Sync)) -> Vec<T> {
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_map<T: Send>(n: usize, f: &(impl Fn(usize) -> T + Sync)) -> Vec<T> {
    (0..n).map(f).collect()
}

impl SubqueryRunner for Context {
    fn scalar(&self, q: &Query) -> Result<Value> {
        let key = to_sql(q)?;
        if let Some(v) = self.scalar_cache.borrow().get(&key) {
            return Ok(v.clone());
        }
        let r = self.child().run_query(q)?;
        if r.columns.len() != 1 {
            return bind_err("scalar subquery must return one column");
        }
        let v = match r.row_count {
            0 => Value::Null,
            1 => r.value(0, 0),
            _ => return exec_err("scalar subquery returned more than one row"),
        };
        self.scalar_cache.borrow_mut().insert(key, v.clone());
        Ok(v)
    }
}

fn expand_wildcards(items: &[SelectItem], schema: &Schema) -> Vec<SelectItem> {
    let mut out = Vec::new();
    for i in items {
        match i {
            SelectItem::Wildcard => {
                for f in &schema.fields {
                    out.push(SelectItem::Expr {
                        expr: Expr::Column(ColumnRef {
                            table: f.qualifier.clone(),
                            name: f.name.clone(),
                        }),
                        alias: Some(f.name.clone()),
                    });
                }
            }
            other => out.push(other.clone()),
        }
    }
    out
}

/// ORDER BY target given as an output name or 1-based position.
fn output_ref(e: &Expr, names: &[String]) -> Option<usize> {
    match e {
        Expr::Literal(Literal::Int(k)) if *k >= 1 && (*k as usize) <= names.len() => Some(*k as usize - 1),
        Expr::Column(ColumnRef { table: None, name }) => names
            .iter()
            .position(|n| n == name)
            .or_else(|| names.iter().position(|n| n.eq_ignore_ascii_case(name))),
        _ => None,
    }
}

/// Simple conjuncts usable against zone maps.
#[derive(Debug, Clone, PartialEq)]
enum PruneTerm {
    Cmp(usize, BinaryOp, f64),
    Null(usize, bool),
}

fn prune_terms(e: &BExpr) -> Vec<PruneTerm> {
    const EXACT: f64 = 9_007_199_254_740_992.0;
    let mut out = Vec::new();
    fn lit(e: &BExpr) -> Option<f64> {
        match e.as_literal()? {
            Value::Int(i) => Some(*i as f64).filter(|v| v.abs() <= EXACT),
            Value::Float(f) if !f.is_nan() => Some(*f),
            _ => None,
        }
    }
    fn flip(op: BinaryOp) -> BinaryOp {
        match op {
            BinaryOp::Lt => BinaryOp::Gt,
            BinaryOp::LtEq => BinaryOp::GtEq,
            BinaryOp::Gt => BinaryOp::Lt,
            BinaryOp::GtEq => BinaryOp::LtEq,
            o => o,
        }
    }
    fn walk(e: &BExpr, out: &mut Vec<PruneTerm>) {
        match &e.kind {
            Kind::Binary(BinaryOp::And, a, b) => {
                walk(a, out);
                walk(b, out);
            }
            Kind::Binary(op, a, b) if op.is_comparison() => match (&a.kind, &b.kind) {
                (Kind::Col(c), _) if lit(b).is_some() => out.push(PruneTerm::Cmp(*c, *op, lit(b).unwrap())),
                (_, Kind::Col(c)) if lit(a).is_some() => out.push(PruneTerm::Cmp(*c, flip(*op), lit(a).unwrap())),
                _ => {}
            },
            Kind::IsNull(inner, negated) => {
                if let Kind::Col(c) = inner.kind {
                    out.push(PruneTerm::Null(c, *negated));
                }
            }
            _ => {}
        }
    }
    walk(e, &mut out);
    out
}

/// True when the morsel cannot contain a matching row.
fn pruned(table: &Table, terms: &[PruneTerm], m: usize) -> bool {
    terms.iter().any(|t| match t {
        PruneTerm::Cmp(c, op, v) => {
            let Some(z) = table.zone(*c, m) else { return false };
            if z.nulls == z.rows {
                return true;
            }
            match op {
                BinaryOp::Eq => *v < z.min || *v > z.max,
                BinaryOp::NotEq => z.min == *v && z.max == *v,
                BinaryOp::Lt => z.min >= *v,
                BinaryOp::LtEq => z.min > *v,
                BinaryOp::Gt => z.max <= *v,
                BinaryOp::GtEq => z.max < *v,
                _ => false,
            }
        }
        PruneTerm::Null(c, negated) => {
            let Some(z) = table.zone(*c, m) else { return false };
            if *negated {
                z.nulls == z.rows
            } else {
                z.nulls == 0
            }
        }
    })
}

/// Loads and filters one morsel. `None` when no row survives.
fn morsel(
    table: &Table,
    used: &[usize],
    filter: Option<&BExpr>,
    prune: &[PruneTerm],
    m: usize,
) -> Result<Option<(Vec<Option<ColumnData>>, usize)>> {
    if pruned(table, prune, m) {
        return Ok(None);
    }
    let start = m * MORSEL_ROWS;
    let end = (start + MORSEL_ROWS).min(table.rows);
    let mut cols: Vec<Option<ColumnData>> = vec![None; table.columns.len()];
    for &c in used {
        cols[c] = Some(slice(&table.columns[c], start, end));
    }
    let n = end - start;
    let Some(f) = filter else {
        return Ok(Some((cols, n)));
    };
    let mask = true_mask(
        &f.eval(&Batch {
            columns: &cols,
            len: n,
        })?,
        n,
    );
    let idx = mask_to_indices(&mask);
    if idx.is_empty() {
        return Ok(None);
    }
    if idx.len() == n {
        return Ok(Some((cols, n)));
    }
    let cols = cols.into_iter().map(|c| c.map(|c| gather(&c, &idx))).collect();
    Ok(Some((cols, idx.len())))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum KeyPart {
    Null,
    Bool(bool),
    Int(i64),
    Float(u64),
    Str(Arc<str>),
}

fn key_part(c: &ColumnData, i: usize) -> KeyPart {
    if !c.is_valid(i) {
        return KeyPart::Null;
    }
    match &c.values {
        Values::Bool(v) => KeyPart::Bool(v[i]),
        Values::Int(v) => KeyPart::Int(v[i]),
        Values::Float(v) => KeyPart::Float(float_key(v[i])),
        Values::Str(v) => KeyPart::Str(v[i].clone()),
    }
}

fn row_key(cols: &[ColumnData], i: usize) -> SmallVec<[KeyPart; 2]> {
    cols.iter().map(|c| key_part(c, i)).collect()
}

#[inline]
fn num_word(c: &ColumnData, i: usize) -> u64 {
    match &c.values {
        Values::Int(v) => v[i] as u64,
        Values::Float(v) => float_key(v[i]),
        Values::Bool(v) => v[i] as u64,
        Values::Str(_) => unreachable!("numeric key"),
    }
}

type NumKey = SmallVec<[u64; 4]>;

/// Group-id assignment; the variant depends only on the key types.
enum KeyTable {
    /// One numeric key column; NULL gets its own slot.
    One {
        map: FastMap<u64, u32>,
        null: Option<u32>,
        keys: Vec<Option<u64>>,
    },
    /// Numeric keys: word 0 holds null bits.
    Num {
        map: FastMap<NumKey, u32>,
        keys: Vec<NumKey>,
    },
    General {
        map: FastMap<SmallVec<[KeyPart; 2]>, u32>,
        keys: Vec<SmallVec<[KeyPart; 2]>>,
    },
}

struct GroupState {
    table: KeyTable,
    key_vals: Vec<Vec<Value>>,
    accs: Vec<Box<dyn Accumulator>>,
    ngroups: usize,
}

impl GroupState {
    fn new(key_types: &[DataType], aggs: &[BoundAgg]) -> GroupState {
        let numeric = key_types.iter().all(|t| *t != DataType::Str) && key_types.len() < 64;
        let table = if key_types.len() == 1 && numeric {
            KeyTable::One {
                map: FastMap::default(),
                null: None,
                keys: Vec::new(),
            }
        } else if numeric {
            KeyTable::Num {
                map: FastMap::default(),
                keys: Vec::new(),
            }
        } else {
            KeyTable::General {
                map: FastMap::default(),
                keys: Vec::new(),
            }
        };
        GroupState {
            table,
            key_vals: vec![Vec::new(); key_types.len()],
            accs: aggs.iter().map(BoundAgg::accumulator).collect(),
            ngroups: usize::from(key_types.is_empty()),
        }
    }

    fn new_group(&mut self, cols: &[ColumnData], i: usize) -> u32 {
        for (v, c) in self.key_vals.iter_mut().zip(cols) {
            v.push(c.get(i));
        }
        self.ngroups += 1;
        (self.ngroups - 1) as u32
    }

    fn assign(&mut self, cols: &[ColumnData]) -> Vec<u32> {
        let n = cols.first().map(ColumnData::len).unwrap_or(0);
        let mut gids = Vec::with_capacity(n);
        // split borrows: the table is moved out while new groups are recorded
        let mut table = std::mem::replace(
            &mut self.table,
            KeyTable::General {
                map: FastMap::default(),
                keys: Vec::new(),
            },
        );
        match &mut table {
            KeyTable::One { map, null, keys } => {
                let c = &cols[0];
                for i in 0..n {
                    let g = if !c.is_valid(i) {
                        match null {
                            Some(g) => *g,
                            None => {
                                let g = self.new_group(cols, i);
                                *null = Some(g);
                                keys.push(None);
                                g
                            }
                        }
                    } else {
                        let w = num_word(c, i);
                        match map.get(&w) {
                            Some(g) => *g,
                            None => {
                                let g = self.new_group(cols, i);
                                map.insert(w, g);
                                keys.push(Some(w));
                                g
                            }
                        }
                    };
                    gids.push(g);
                }
            }
            KeyTable::Num { map, keys } => {
                for i in 0..n {
                    let mut k: NumKey = SmallVec::with_capacity(cols.len() + 1);
                    let mut nulls = 0u64;
                    k.push(0);
                    for (j, c) in cols.iter().enumerate() {
                        if c.is_valid(i) {
                            k.push(num_word(c, i));
                        } else {
                            nulls |= 1 << j;
                            k.push(0);
                        }
                    }
                    k[0] = nulls;
                    let g = match map.get(&k) {
                        Some(g) => *g,
                        None => {
                            let g = self.new_group(cols, i);
                            keys.push(k.clone());
                            map.insert(k, g);
                            g
                        }
                    };
                    gids.push(g);
                }
            }
            KeyTable::General { map, keys } => {
                for i in 0..n {
                    let k = row_key(cols, i);
                    let g = match map.get(&k) {
                        Some(g) => *g,
                        None => {
                            let g = self.new_group(cols, i);
                            keys.push(k.clone());
                            map.insert(k, g);
                            g
                        }
                    };
                    gids.push(g);
                }
            }
        }
        self.table = table;
        gids
    }

    /// Merges a later task's state; its groups keep their relative order.
    fn absorb(&mut self, other: GroupState) {
        let m = other.ngroups;
        let mut mapping = Vec::with_capacity(m);
        let push_vals = |this: &mut GroupState, g: usize| -> u32 {
            for (dst, src) in this.key_vals.iter_mut().zip(&other.key_vals) {
                dst.push(src[g].clone());
            }
            this.ngroups += 1;
            (this.ngroups - 1) as u32
        };
        let mut table = std::mem::replace(
            &mut self.table,
            KeyTable::General {
                map: FastMap::default(),
                keys: Vec::new(),
            },
        );
        match (&mut table, other.table) {
            (KeyTable::One { map, null, keys }, KeyTable::One { keys: okeys, .. }) => {
                for (g, k) in okeys.into_iter().enumerate() {
                    let t = match k {
                        None => match null {
                            Some(t) => *t,
                            None => {
                                let t = push_vals(self, g);
                                *null = Some(t);
                                keys.push(None);
                                t
                            }
                        },
                        Some(w) => match map.get(&w) {
                            Some(t) => *t,
                            None => {
                                let t = push_vals(self, g);
                                map.insert(w, t);
                                keys.push(Some(w));
                                t
                            }
                        },
                    };
                    mapping.push(t);
                }
            }
            (KeyTable::Num { map, keys }, KeyTable::Num { keys: okeys, .. }) => {
                for (g, k) in okeys.into_iter().enumerate() {
                    let t = match map.get(&k) {
                        Some(t) => *t,
                        None => {
                            let t = push_vals(self, g);
                            keys.push(k.clone());
                            map.insert(k, t);
                            t
                        }
                    };
                    mapping.push(t);
                }
            }
            (KeyTable::General { map, keys }, KeyTable::General { keys: okeys, .. }) => {
                for (g, k) in okeys.into_iter().enumerate() {
                    let t = match map.get(&k) {
                        Some(t) => *t,
                        None => {
                            let t = push_vals(self, g);
                            keys.push(k.clone());
                            map.insert(k, t);
                            t
                        }
                    };
                    mapping.push(t);
                }
            }
            _ => unreachable!("tasks share key types"),
        }
        self.table = table;
        if self.key_vals.is_empty() {
            // ungrouped: every task has at most group 0
            mapping = vec![0; m];
            self.ngroups = self.ngroups.max(m);
        }
        let n = self.ngroups;
        for (a, b) in self.accs.iter_mut().zip(other.accs) {
            a.merge(n, b, &mapping);
        }
    }
}

fn distinct_rows(cols: &[ColumnData]) -> Vec<u32> {
    let n = cols.first().map(ColumnData::len).unwrap_or(0);
    let mut seen: FastSet<SmallVec<[KeyPart; 2]>> = Default::default();
    (0..n)
        .filter(|&i| seen.insert(row_key(cols, i)))
        .map(|i| i as u32)
        .collect()
}

/// Row comparison for ORDER BY; NULLs sort last in both directions.
fn cmp_rows(c: &ColumnData, a: usize, b: usize, desc: bool) -> Ordering {
    match (c.is_valid(a), c.is_valid(b)) {
        (false, false) => return Ordering::Equal,
        (false, true) => return Ordering::Greater,
        (true, false) => return Ordering::Less,
        _ => {}
    }
    let o = match &c.values {
        Values::Bool(v) => v[a].cmp(&v[b]),
        Values::Int(v) => v[a].cmp(&v[b]),
        Values::Float(v) => v[a].total_cmp(&v[b]),
        Values::Str(v) => v[a].cmp(&v[b]),
    };
    if desc {
        o.reverse()
    } else {
        o
    }
}
