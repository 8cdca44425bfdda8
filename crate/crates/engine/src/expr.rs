//! Bound scalar expressions and their vectorized evaluation.

use std::borrow::Cow;
use std::sync::Arc;

use selcube_core::data::{ColumnData, DataType, Value, Values};
use selcube_core::sql::{BinaryOp, ColumnRef, Expr, Literal, Query, UnaryOp};

use crate::error::{bind_err, exec_err, EngineError, Result};
use crate::vector::{and_validity, as_f64, broadcast, cast, null_column, Datum};

#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub qualifier: Option<String>,
    pub name: String,
    pub ty: DataType,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Schema {
    pub fields: Vec<Field>,
}

impl Schema {
    pub fn resolve(&self, c: &ColumnRef) -> Result<usize> {
        let find = |exact: bool| -> Vec<usize> {
            self.fields
                .iter()
                .enumerate()
                .filter(|(_, f)| {
                    let name_ok = if exact {
                        f.name == c.name
                    } else {
                        f.name.eq_ignore_ascii_case(&c.name)
                    };
                    let qual_ok = match &c.table {
                        None => true,
                        Some(t) => f.qualifier.as_deref().is_some_and(|q| q.eq_ignore_ascii_case(t)),
                    };
                    name_ok && qual_ok
                })
                .map(|(i, _)| i)
                .collect()
        };
        let mut hits = find(true);
        if hits.is_empty() {
            hits = find(false);
        }
        match hits.len() {
            0 => bind_err(format!("column {} not found", display_ref(c))),
            1 => Ok(hits[0]),
            _ => bind_err(format!("column reference {} is ambiguous", display_ref(c))),
        }
    }

    pub fn with_qualifier(mut self, q: Option<&str>) -> Self {
        for f in &mut self.fields {
            f.qualifier = q.map(str::to_string);
        }
        self
    }
}

fn display_ref(c: &ColumnRef) -> String {
    match &c.table {
        Some(t) => format!("{t}.{}", c.name),
        None => c.name.clone(),
    }
}

/// Runs uncorrelated scalar subqueries for the binder.
pub trait SubqueryRunner {
    fn scalar(&self, q: &Query) -> Result<Value>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Floor,
    Ceil,
    Round,
    Abs,
    Sign,
    Sqrt,
    Ln,
    Log10,
    Log2,
    Log,
    Exp,
    Pow,
    Greatest,
    Least,
    Coalesce,
    NullIf,
    Lower,
    Upper,
    Length,
    IsNan,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name.to_ascii_uppercase().as_str() {
            "FLOOR" => Func::Floor,
            "CEIL" | "CEILING" => Func::Ceil,
            "ROUND" => Func::Round,
            "ABS" => Func::Abs,
            "SIGN" => Func::Sign,
            "SQRT" => Func::Sqrt,
            "LN" => Func::Ln,
            "LOG10" => Func::Log10,
            "LOG2" => Func::Log2,
            "LOG" => Func::Log,
            "EXP" => Func::Exp,
            "POW" | "POWER" => Func::Pow,
            "GREATEST" => Func::Greatest,
            "LEAST" => Func::Least,
            "COALESCE" => Func::Coalesce,
            "NULLIF" => Func::NullIf,
            "LOWER" => Func::Lower,
            "UPPER" => Func::Upper,
            "LENGTH" => Func::Length,
            "ISNAN" => Func::IsNan,
            _ => return None,
        })
    }

    fn arity_ok(self, n: usize) -> bool {
        match self {
            Func::Round | Func::Log => (1..=2).contains(&n),
            Func::Pow | Func::NullIf => n == 2,
            Func::Greatest | Func::Least | Func::Coalesce => n >= 1,
            _ => n == 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Kind {
    Col(usize),
    Lit(Value),
    Neg(Box<BExpr>),
    Not(Box<BExpr>),
    Binary(BinaryOp, Box<BExpr>, Box<BExpr>),
    IsNull(Box<BExpr>, bool),
    Like {
        expr: Box<BExpr>,
        pattern: Box<BExpr>,
        negated: bool,
        case_insensitive: bool,
    },
    Case {
        operand: Option<Box<BExpr>>,
        branches: Vec<(BExpr, BExpr)>,
        else_result: Option<Box<BExpr>>,
    },
    Func(Func, Vec<BExpr>),
}

/// A bound expression. `ty` is `None` for expressions that are always NULL.
#[derive(Debug, Clone, PartialEq)]
pub struct BExpr {
    pub kind: Kind,
    pub ty: Option<DataType>,
}

fn is_numeric(t: DataType) -> bool {
    matches!(t, DataType::Int | DataType::Float | DataType::Bool)
}

/// Common type of several expressions; ints widen to floats.
pub fn unify(types: impl IntoIterator<Item = Option<DataType>>) -> Result<Option<DataType>> {
    let mut out: Option<DataType> = None;
    for t in types.into_iter().flatten() {
        out = Some(match (out, t) {
            (None, t) => t,
            (Some(a), b) if a == b => a,
            (Some(a), b) if is_numeric(a) && is_numeric(b) => {
                if a == DataType::Float || b == DataType::Float {
                    DataType::Float
                } else {
                    DataType::Int
                }
            }
            (Some(a), b) => return bind_err(format!("cannot combine {} and {}", a.name(), b.name())),
        });
    }
    Ok(out)
}

pub fn literal_value(l: &Literal) -> Value {
    match l {
        Literal::Null => Value::Null,
        Literal::Bool(b) => Value::Bool(*b),
        Literal::Int(i) => Value::Int(*i),
        Literal::Float(f) => Value::Float(*f),
        Literal::Str(s) => Value::Str(Arc::from(s.as_str())),
    }
}

pub struct Binder<'a> {
    pub schema: &'a Schema,
    pub subqueries: &'a dyn SubqueryRunner,
}

impl Binder<'_> {
    pub fn bind(&self, e: &Expr) -> Result<BExpr> {
        Ok(match e {
            Expr::Column(c) => {
                let i = self.schema.resolve(c)?;
                BExpr {
                    kind: Kind::Col(i),
                    ty: Some(self.schema.fields[i].ty),
                }
            }
            Expr::Literal(l) => {
                let v = literal_value(l);
                let ty = v.data_type();
                BExpr { kind: Kind::Lit(v), ty }
            }
            Expr::Placeholder(p) => return bind_err(format!("unbound placeholder ${p}")),
            Expr::Unary { op, expr } => {
                let inner = self.bind(expr)?;
                match op {
                    UnaryOp::Neg => {
                        if inner.ty.is_some_and(|t| !is_numeric(t)) {
                            return bind_err("cannot negate a non-numeric value");
                        }
                        let ty = inner.ty.map(|t| if t == DataType::Bool { DataType::Int } else { t });
                        BExpr {
                            kind: Kind::Neg(Box::new(inner)),
                            ty,
                        }
                    }
                    UnaryOp::Not => {
                        expect_bool(&inner)?;
                        BExpr {
                            kind: Kind::Not(Box::new(inner)),
                            ty: Some(DataType::Bool),
                        }
                    }
                }
            }
            Expr::Binary { op, left, right } => self.binary(*op, self.bind(left)?, self.bind(right)?)?,
            Expr::Between {
                expr,
                low,
                high,
                negated,
            } => {
                let x = self.bind(expr)?;
                let ge = self.binary(BinaryOp::GtEq, x.clone(), self.bind(low)?)?;
                let le = self.binary(BinaryOp::LtEq, x, self.bind(high)?)?;
                let both = self.binary(BinaryOp::And, ge, le)?;
                if *negated {
                    not(both)
                } else {
                    both
                }
            }
            Expr::InList { expr, list, negated } => {
                let x = self.bind(expr)?;
                let mut acc: Option<BExpr> = None;
                for item in list {
                    let eq = self.binary(BinaryOp::Eq, x.clone(), self.bind(item)?)?;
                    acc = Some(match acc {
                        None => eq,
                        Some(a) => self.binary(BinaryOp::Or, a, eq)?,
                    });
                }
                let r = acc.unwrap_or(BExpr {
                    kind: Kind::Lit(Value::Bool(false)),
                    ty: Some(DataType::Bool),
                });
                if *negated {
                    not(r)
                } else {
                    r
                }
            }
            Expr::IsNull { expr, negated } => BExpr {
                kind: Kind::IsNull(Box::new(self.bind(expr)?), *negated),
                ty: Some(DataType::Bool),
            },
            Expr::Like {
                expr,
                pattern,
                negated,
                case_insensitive,
            } => {
                let x = self.bind(expr)?;
                let p = self.bind(pattern)?;
                for t in [x.ty, p.ty].into_iter().flatten() {
                    if t != DataType::Str {
                        return bind_err("LIKE needs string operands");
                    }
                }
                BExpr {
                    kind: Kind::Like {
                        expr: Box::new(x),
                        pattern: Box::new(p),
                        negated: *negated,
                        case_insensitive: *case_insensitive,
                    },
                    ty: Some(DataType::Bool),
                }
            }
            Expr::Case {
                operand,
                branches,
                else_result,
            } => {
                let operand = operand.as_ref().map(|o| self.bind(o)).transpose()?;
                let mut bound = Vec::new();
                for b in branches {
                    let when = self.bind(&b.when)?;
                    match &operand {
                        Some(o) => {
                            unify([o.ty, when.ty])?;
                        }
                        None => expect_bool(&when)?,
                    }
                    bound.push((when, self.bind(&b.then)?));
                }
                let else_result = else_result.as_ref().map(|e| self.bind(e)).transpose()?;
                let ty = unify(bound.iter().map(|(_, t)| t.ty).chain(else_result.iter().map(|e| e.ty)))?;
                BExpr {
                    kind: Kind::Case {
                        operand: operand.map(Box::new),
                        branches: bound,
                        else_result: else_result.map(Box::new),
                    },
                    ty,
                }
            }
            Expr::Function(f) => {
                if f.is_aggregate() {
                    return bind_err(format!("aggregate {} is not allowed here", f.name));
                }
                let func = Func::from_name(&f.name)
                    .ok_or_else(|| EngineError::Bind(format!("unknown function {}", f.name)))?;
                if f.star || f.distinct || f.filter.is_some() {
                    return bind_err(format!("{} is not an aggregate", f.name));
                }
                if !func.arity_ok(f.args.len()) {
                    return bind_err(format!("wrong number of arguments to {}", f.name));
                }
                let args = f.args.iter().map(|a| self.bind(a)).collect::<Result<Vec<_>>>()?;
                let ty = func_type(func, &args)?;
                BExpr {
                    kind: Kind::Func(func, args),
                    ty,
                }
            }
            Expr::Subquery(q) => {
                let v = self.subqueries.scalar(q)?;
                let ty = v.data_type();
                BExpr { kind: Kind::Lit(v), ty }
            }
        })
    }

    fn binary(&self, op: BinaryOp, l: BExpr, r: BExpr) -> Result<BExpr> {
        use BinaryOp::*;
        let ty = match op {
            Add | Sub | Mul | Mod => {
                for t in [l.ty, r.ty].into_iter().flatten() {
                    if !is_numeric(t) {
                        return bind_err(format!("operator {} needs numbers", op.symbol()));
                    }
                }
                match unify([l.ty, r.ty])? {
                    Some(DataType::Float) => Some(DataType::Float),
                    _ => Some(DataType::Int),
                }
            }
            Div => {
                for t in [l.ty, r.ty].into_iter().flatten() {
                    if !is_numeric(t) {
                        return bind_err("operator / needs numbers");
                    }
                }
                Some(DataType::Float)
            }
            Eq | NotEq | Lt | LtEq | Gt | GtEq => {
                unify([l.ty, r.ty])?;
                Some(DataType::Bool)
            }
            And | Or => {
                expect_bool(&l)?;
                expect_bool(&r)?;
                Some(DataType::Bool)
            }
            Concat => Some(DataType::Str),
        };
        Ok(BExpr {
            kind: Kind::Binary(op, Box::new(l), Box::new(r)),
            ty,
        })
    }
}

fn not(e: BExpr) -> BExpr {
    BExpr {
        kind: Kind::Not(Box::new(e)),
        ty: Some(DataType::Bool),
    }
}

fn expect_bool(e: &BExpr) -> Result<()> {
    match e.ty {
        None | Some(DataType::Bool) => Ok(()),
        Some(t) => bind_err(format!("expected a boolean, found {}", t.name())),
    }
}

fn func_type(f: Func, args: &[BExpr]) -> Result<Option<DataType>> {
    let first = args[0].ty;
    let numeric = |t: Option<DataType>| -> Result<()> {
        match t {
            Some(t) if !is_numeric(t) => bind_err(format!("{f:?} needs a number")),
            _ => Ok(()),
        }
    };
    Ok(match f {
        Func::Floor | Func::Ceil | Func::Abs | Func::Sign => {
            numeric(first)?;
            Some(match first {
                Some(DataType::Int) | Some(DataType::Bool) => DataType::Int,
                _ => DataType::Float,
            })
        }
        Func::Round => {
            numeric(first)?;
            if args.len() == 1 && matches!(first, Some(DataType::Int)) {
                Some(DataType::Int)
            } else {
                Some(DataType::Float)
            }
        }
        Func::Sqrt | Func::Ln | Func::Log10 | Func::Log2 | Func::Log | Func::Exp | Func::Pow => {
            for a in args {
                numeric(a.ty)?;
            }
            Some(DataType::Float)
        }
        Func::Greatest | Func::Least | Func::Coalesce => unify(args.iter().map(|a| a.ty))?,
        Func::NullIf => {
            unify([args[0].ty, args[1].ty])?;
            first
        }
        Func::Lower | Func::Upper => Some(DataType::Str),
        Func::Length => Some(DataType::Int),
        Func::IsNan => Some(DataType::Bool),
    })
}

/// Input columns for evaluation, all of length `len`. Unreferenced slots may be `None`.
pub struct Batch<'a> {
    pub columns: &'a [Option<ColumnData>],
    pub len: usize,
}

impl BExpr {
    pub fn output_type(&self) -> DataType {
        self.ty.unwrap_or(DataType::Int)
    }

    pub fn columns_used(&self, out: &mut Vec<usize>) {
        match &self.kind {
            Kind::Col(i) => {
                if !out.contains(i) {
                    out.push(*i);
                }
            }
            Kind::Lit(_) => {}
            Kind::Neg(e) | Kind::Not(e) | Kind::IsNull(e, _) => e.columns_used(out),
            Kind::Binary(_, a, b) => {
                a.columns_used(out);
                b.columns_used(out);
            }
            Kind::Like { expr, pattern, .. } => {
                expr.columns_used(out);
                pattern.columns_used(out);
            }
            Kind::Case {
                operand,
                branches,
                else_result,
            } => {
                for e in operand.iter().chain(else_result.iter()) {
                    e.columns_used(out);
                }
                for (w, t) in branches {
                    w.columns_used(out);
                    t.columns_used(out);
                }
            }
            Kind::Func(_, args) => args.iter().for_each(|a| a.columns_used(out)),
        }
    }

    /// The literal value when the expression is constant.
    pub fn as_literal(&self) -> Option<&Value> {
        match &self.kind {
            Kind::Lit(v) => Some(v),
            _ => None,
        }
    }

    pub fn eval<'b>(&self, batch: &'b Batch) -> Result<Datum<'b>> {
        let n = batch.len;
        match &self.kind {
            Kind::Col(i) => match batch.columns.get(*i).and_then(Option::as_ref) {
                Some(c) => Ok(Datum::borrowed(c)),
                None => exec_err(format!("column slot {i} was not loaded")),
            },
            Kind::Lit(v) => Ok(Datum::Scalar(v.clone())),
            Kind::Neg(e) => {
                let d = e.eval(batch)?;
                map_numeric(d, n, self.output_type(), |x| -x, |x| x.wrapping_neg())
            }
            Kind::Not(e) => {
                let d = e.eval(batch)?;
                Ok(match d {
                    Datum::Scalar(Value::Bool(b)) => Datum::Scalar(Value::Bool(!b)),
                    Datum::Scalar(_) => Datum::Scalar(Value::Null),
                    Datum::Col(c) => {
                        let c = cast(c.into_owned(), DataType::Bool);
                        let Values::Bool(v) = c.values else { unreachable!() };
                        Datum::owned(ColumnData::with_validity(
                            Values::Bool(v.into_iter().map(|b| !b).collect()),
                            c.validity,
                        ))
                    }
                })
            }
            Kind::IsNull(e, negated) => {
                let d = e.eval(batch)?;
                Ok(match d {
                    Datum::Scalar(v) => Datum::Scalar(Value::Bool(v.is_null() != *negated)),
                    Datum::Col(c) => {
                        let v = match &c.validity {
                            None => vec![*negated; n],
                            Some(valid) => valid.iter().map(|ok| !ok != *negated).collect(),
                        };
                        Datum::owned(ColumnData::new(Values::Bool(v)))
                    }
                })
            }
            Kind::Binary(op, a, b) => {
                let (x, y) = (a.eval(batch)?, b.eval(batch)?);
                binary(*op, x, y, n, self.output_type(), unify([a.ty, b.ty])?.unwrap_or(DataType::Int))
            }
            Kind::Like {
                expr,
                pattern,
                negated,
                case_insensitive,
            } => {
                let (x, p) = (expr.eval(batch)?, pattern.eval(batch)?);
                like(&x, &p, n, *negated, *case_insensitive)
            }
            Kind::Case {
                operand,
                branches,
                else_result,
            } => self.eval_case(operand.as_deref(), branches, else_result.as_deref(), batch),
            Kind::Func(f, args) => {
                let vals = args.iter().map(|a| a.eval(batch)).collect::<Result<Vec<_>>>()?;
                call(*f, vals, args, n, self.output_type())
            }
        }
    }

    fn eval_case(
        &self,
        operand: Option<&BExpr>,
        branches: &[(BExpr, BExpr)],
        else_result: Option<&BExpr>,
        batch: &Batch,
    ) -> Result<Datum<'static>> {
        let n = batch.len;
        let ty = self.output_type();
        let mut out = match else_result {
            Some(e) => e.eval(batch)?.into_column(n, ty),
            None => null_column(ty, n),
        };
        let mut assigned = vec![false; n];
        let op_val = operand.map(|o| o.eval(batch)).transpose()?;
        for (when, then) in branches {
            let cond = when.eval(batch)?;
            let cond = match &op_val {
                Some(o) => {
                    let cmp_ty = unify([operand.and_then(|o| o.ty), when.ty])?.unwrap_or(DataType::Int);
                    binary(BinaryOp::Eq, o.clone(), cond, n, DataType::Bool, cmp_ty)?
                }
                None => cond,
            };
            let mask = crate::vector::true_mask(&cond, n);
            let take: Vec<bool> = mask.iter().zip(&assigned).map(|(m, a)| *m && !*a).collect();
            if !take.iter().any(|t| *t) {
                continue;
            }
            let val = then.eval(batch)?.into_column(n, ty);
            overwrite(&mut out, &val, &take);
            for (a, t) in assigned.iter_mut().zip(&take) {
                *a |= *t;
            }
        }
        Ok(Datum::owned(out))
    }
}

/// Copies rows of `src` into `dst` where `take` is set.
fn overwrite(dst: &mut ColumnData, src: &ColumnData, take: &[bool]) {
    fn copy<T: Clone>(d: &mut [T], s: &[T], take: &[bool]) {
        for i in 0..take.len() {
            if take[i] {
                d[i] = s[i].clone();
            }
        }
    }
    match (&mut dst.values, &src.values) {
        (Values::Bool(d), Values::Bool(s)) => copy(d, s, take),
        (Values::Int(d), Values::Int(s)) => copy(d, s, take),
        (Values::Float(d), Values::Float(s)) => copy(d, s, take),
        (Values::Str(d), Values::Str(s)) => copy(d, s, take),
        _ => unreachable!("case branches are cast to one type"),
    }
    if dst.validity.is_some() || src.validity.is_some() {
        let n = take.len();
        let mut valid = dst.validity.take().unwrap_or_else(|| vec![true; n]);
        for i in 0..n {
            if take[i] {
                valid[i] = src.is_valid(i);
            }
        }
        *dst = ColumnData::with_validity(std::mem::replace(&mut dst.values, Values::Bool(vec![])), Some(valid));
    }
}

enum NumRef<'a> {
    S(f64),
    V(Cow<'a, [f64]>),
}

fn f64_ref<'a>(d: &'a Datum) -> NumRef<'a> {
    match d {
        Datum::Scalar(v) => NumRef::S(v.as_f64().unwrap_or(f64::NAN)),
        Datum::Col(c) => NumRef::V(as_f64(c)),
    }
}

enum IntRef<'a> {
    S(i64),
    V(Cow<'a, [i64]>),
}

fn i64_ref<'a>(d: &'a Datum) -> IntRef<'a> {
    match d {
        Datum::Scalar(Value::Int(i)) => IntRef::S(*i),
        Datum::Scalar(Value::Bool(b)) => IntRef::S(*b as i64),
        Datum::Scalar(v) => IntRef::S(v.as_f64().unwrap_or(0.0) as i64),
        Datum::Col(c) => match &c.values {
            Values::Int(v) => IntRef::V(Cow::Borrowed(v)),
            Values::Bool(v) => IntRef::V(Cow::Owned(v.iter().map(|b| *b as i64).collect())),
            Values::Float(v) => IntRef::V(Cow::Owned(v.iter().map(|f| *f as i64).collect())),
            Values::Str(_) => IntRef::V(Cow::Owned(vec![0; c.len()])),
        },
    }
}

#[inline]
fn zip_f64(a: &NumRef, b: &NumRef, n: usize, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    match (a, b) {
        (NumRef::V(x), NumRef::V(y)) => x.iter().zip(y.iter()).map(|(&p, &q)| f(p, q)).collect(),
        (NumRef::V(x), NumRef::S(q)) => x.iter().map(|&p| f(p, *q)).collect(),
        (NumRef::S(p), NumRef::V(y)) => y.iter().map(|&q| f(*p, q)).collect(),
        (NumRef::S(p), NumRef::S(q)) => vec![f(*p, *q); n],
    }
}

#[inline]
fn zip_i64<T>(a: &IntRef, b: &IntRef, n: usize, f: impl Fn(i64, i64) -> T) -> Vec<T>
where
    T: Clone,
{
    match (a, b) {
        (IntRef::V(x), IntRef::V(y)) => x.iter().zip(y.iter()).map(|(&p, &q)| f(p, q)).collect(),
        (IntRef::V(x), IntRef::S(q)) => x.iter().map(|&p| f(p, *q)).collect(),
        (IntRef::S(p), IntRef::V(y)) => y.iter().map(|&q| f(*p, q)).collect(),
        (IntRef::S(p), IntRef::S(q)) => vec![f(*p, *q); n],
    }
}

#[inline]
fn zip_f64_cmp(a: &NumRef, b: &NumRef, n: usize, f: impl Fn(f64, f64) -> bool) -> Vec<bool> {
    match (a, b) {
        (NumRef::V(x), NumRef::V(y)) => x.iter().zip(y.iter()).map(|(&p, &q)| f(p, q)).collect(),
        (NumRef::V(x), NumRef::S(q)) => x.iter().map(|&p| f(p, *q)).collect(),
        (NumRef::S(p), NumRef::V(y)) => y.iter().map(|&q| f(*p, q)).collect(),
        (NumRef::S(p), NumRef::S(q)) => vec![f(*p, *q); n],
    }
}

fn validity_of<'a>(d: &'a Datum) -> Option<&'a [bool]> {
    match d {
        Datum::Col(c) => c.validity.as_deref(),
        Datum::Scalar(_) => None,
    }
}

fn both_scalar(a: &Datum, b: &Datum) -> bool {
    matches!((a, b), (Datum::Scalar(_), Datum::Scalar(_)))
}

fn to_scalar(d: Datum) -> Datum<'static> {
    match d {
        Datum::Scalar(v) => Datum::Scalar(v),
        Datum::Col(c) => Datum::Scalar(c.get(0)),
    }
}

fn binary<'b>(op: BinaryOp, a: Datum<'b>, b: Datum<'b>, n: usize, out: DataType, operand: DataType) -> Result<Datum<'b>> {
    use BinaryOp::*;
    if both_scalar(&a, &b) && n != 1 {
        return binary(op, a, b, 1, out, operand).map(to_scalar);
    }
    match op {
        And | Or => return Ok(logical(op, &a, &b, n)),
        _ => {}
    }
    if a.is_null_scalar() || b.is_null_scalar() {
        return Ok(Datum::Scalar(Value::Null));
    }
    let validity = and_validity(&[validity_of(&a), validity_of(&b)], n);
    let values = match op {
        Add | Sub | Mul | Mod if out == DataType::Int => {
            let (x, y) = (i64_ref(&a), i64_ref(&b));
            match op {
                Add => Values::Int(zip_i64(&x, &y, n, i64::wrapping_add)),
                Sub => Values::Int(zip_i64(&x, &y, n, i64::wrapping_sub)),
                Mul => Values::Int(zip_i64(&x, &y, n, i64::wrapping_mul)),
                _ => {
                    let r = zip_i64(&x, &y, n, |p, q| if q == 0 { None } else { Some(p.wrapping_rem(q)) });
                    let mut valid = validity.unwrap_or_else(|| vec![true; n]);
                    let v = r
                        .into_iter()
                        .zip(valid.iter_mut())
                        .map(|(r, ok)| {
                            *ok &= r.is_some();
                            r.unwrap_or(0)
                        })
                        .collect();
                    return Ok(Datum::owned(ColumnData::with_validity(Values::Int(v), Some(valid))));
                }
            }
        }
        Add | Sub | Mul => {
            let (x, y) = (f64_ref(&a), f64_ref(&b));
            Values::Float(match op {
                Add => zip_f64(&x, &y, n, |p, q| p + q),
                Sub => zip_f64(&x, &y, n, |p, q| p - q),
                _ => zip_f64(&x, &y, n, |p, q| p * q),
            })
        }
        Div | Mod => {
            let (x, y) = (f64_ref(&a), f64_ref(&b));
            let r = if op == Div {
                zip_f64(&x, &y, n, |p, q| p / q)
            } else {
                zip_f64(&x, &y, n, |p, q| p % q)
            };
            let zero = zip_f64_cmp(&y, &NumRef::S(0.0), n, |q, _| q == 0.0);
            let valid = match validity {
                Some(v) => v.iter().zip(&zero).map(|(ok, z)| *ok && !z).collect(),
                None => zero.iter().map(|z| !z).collect(),
            };
            return Ok(Datum::owned(ColumnData::with_validity(Values::Float(r), Some(valid))));
        }
        Eq | NotEq | Lt | LtEq | Gt | GtEq => Values::Bool(compare(op, &a, &b, n, operand)),
        Concat => {
            let sa = to_str_col(&a, n);
            let sb = to_str_col(&b, n);
            Values::Str(sa.iter().zip(&sb).map(|(p, q)| Arc::from(format!("{p}{q}"))).collect())
        }
        And | Or => unreachable!(),
    };
    Ok(Datum::owned(ColumnData::with_validity(values, validity)))
}

fn to_str_col(d: &Datum, n: usize) -> Vec<Arc<str>> {
    let c = d.clone().into_column(n, DataType::Str);
    match c.values {
        Values::Str(v) => v,
        _ => unreachable!(),
    }
}

fn cmp_result(op: BinaryOp, o: std::cmp::Ordering) -> bool {
    use std::cmp::Ordering::*;
    match op {
        BinaryOp::Eq => o == Equal,
        BinaryOp::NotEq => o != Equal,
        BinaryOp::Lt => o == Less,
        BinaryOp::LtEq => o != Greater,
        BinaryOp::Gt => o == Greater,
        BinaryOp::GtEq => o != Less,
        _ => false,
    }
}

fn compare(op: BinaryOp, a: &Datum, b: &Datum, n: usize, operand: DataType) -> Vec<bool> {
    use BinaryOp::*;
    match operand {
        DataType::Int => {
            let (x, y) = (i64_ref(a), i64_ref(b));
            match op {
                Eq => zip_i64(&x, &y, n, |p, q| p == q),
                NotEq => zip_i64(&x, &y, n, |p, q| p != q),
                Lt => zip_i64(&x, &y, n, |p, q| p < q),
                LtEq => zip_i64(&x, &y, n, |p, q| p <= q),
                Gt => zip_i64(&x, &y, n, |p, q| p > q),
                _ => zip_i64(&x, &y, n, |p, q| p >= q),
            }
        }
        DataType::Float | DataType::Bool => {
            let (x, y) = (f64_ref(a), f64_ref(b));
            match op {
                Eq => zip_f64_cmp(&x, &y, n, |p, q| p == q),
                NotEq => zip_f64_cmp(&x, &y, n, |p, q| p != q),
                Lt => zip_f64_cmp(&x, &y, n, |p, q| p < q),
                LtEq => zip_f64_cmp(&x, &y, n, |p, q| p <= q),
                Gt => zip_f64_cmp(&x, &y, n, |p, q| p > q),
                _ => zip_f64_cmp(&x, &y, n, |p, q| p >= q),
            }
        }
        DataType::Str => {
            let sa = to_str_col(a, n);
            let sb = to_str_col(b, n);
            sa.iter().zip(&sb).map(|(p, q)| cmp_result(op, p.as_ref().cmp(q.as_ref()))).collect()
        }
    }
}

/// Three-valued AND / OR.
fn logical(op: BinaryOp, a: &Datum, b: &Datum, n: usize) -> Datum<'static> {
    // per row: Some(bool) or None for NULL
    let get = |d: &Datum, i: usize| -> Option<bool> {
        match d {
            Datum::Scalar(Value::Bool(v)) => Some(*v),
            Datum::Scalar(_) => None,
            Datum::Col(c) => {
                if !c.is_valid(i) {
                    None
                } else {
                    match &c.values {
                        Values::Bool(v) => Some(v[i]),
                        _ => None,
                    }
                }
            }
        }
    };
    let fast = |d: &Datum| matches!(d, Datum::Col(c) if c.validity.is_none() && matches!(c.values, Values::Bool(_)));
    if fast(a) && fast(b) {
        if let (Datum::Col(x), Datum::Col(y)) = (a, b) {
            if let (Values::Bool(p), Values::Bool(q)) = (&x.values, &y.values) {
                let v = if op == BinaryOp::And {
                    p.iter().zip(q).map(|(a, b)| *a && *b).collect()
                } else {
                    p.iter().zip(q).map(|(a, b)| *a || *b).collect()
                };
                return Datum::owned(ColumnData::new(Values::Bool(v)));
            }
        }
    }
    let mut values = Vec::with_capacity(n);
    let mut valid = Vec::with_capacity(n);
    for i in 0..n {
        let r = match (op, get(a, i), get(b, i)) {
            (BinaryOp::And, Some(false), _) | (BinaryOp::And, _, Some(false)) => Some(false),
            (BinaryOp::And, Some(true), Some(true)) => Some(true),
            (BinaryOp::Or, Some(true), _) | (BinaryOp::Or, _, Some(true)) => Some(true),
            (BinaryOp::Or, Some(false), Some(false)) => Some(false),
            _ => None,
        };
        values.push(r.unwrap_or(false));
        valid.push(r.is_some());
    }
    Datum::owned(ColumnData::with_validity(Values::Bool(values), Some(valid)))
}

fn map_numeric<'b>(
    d: Datum<'b>,
    n: usize,
    out: DataType,
    ff: impl Fn(f64) -> f64,
    fi: impl Fn(i64) -> i64,
) -> Result<Datum<'b>> {
    Ok(match d {
        Datum::Scalar(Value::Null) => Datum::Scalar(Value::Null),
        Datum::Scalar(Value::Int(i)) if out == DataType::Int => Datum::Scalar(Value::Int(fi(i))),
        Datum::Scalar(Value::Bool(b)) if out == DataType::Int => Datum::Scalar(Value::Int(fi(b as i64))),
        Datum::Scalar(v) => Datum::Scalar(v.as_f64().map(|x| Value::Float(ff(x))).unwrap_or(Value::Null)),
        Datum::Col(c) => {
            let validity = c.validity.clone();
            let values = if out == DataType::Int {
                Values::Int(match i64_ref(&Datum::Col(c)) {
                    IntRef::V(v) => v.iter().map(|&x| fi(x)).collect(),
                    IntRef::S(_) => unreachable!(),
                })
            } else {
                Values::Float(as_f64(&c).iter().map(|&x| ff(x)).collect())
            };
            let _ = n;
            Datum::owned(ColumnData::with_validity(values, validity))
        }
    })
}

/// Float function where some inputs yield NULL (`None`).
fn map_partial<'b>(d: Datum<'b>, n: usize, f: impl Fn(f64) -> Option<f64>) -> Datum<'b> {
    match d {
        Datum::Scalar(v) => Datum::Scalar(v.as_f64().and_then(&f).map(Value::Float).unwrap_or(Value::Null)),
        Datum::Col(c) => {
            let xs = as_f64(&c);
            let mut valid = c.validity.clone().unwrap_or_else(|| vec![true; n]);
            let v: Vec<f64> = xs
                .iter()
                .zip(valid.iter_mut())
                .map(|(&x, ok)| match f(x) {
                    Some(y) => y,
                    None => {
                        *ok = false;
                        0.0
                    }
                })
                .collect();
            Datum::owned(ColumnData::with_validity(Values::Float(v), Some(valid)))
        }
    }
}

fn call<'b>(f: Func, mut args: Vec<Datum<'b>>, bound: &[BExpr], n: usize, out: DataType) -> Result<Datum<'b>> {
    if args.iter().all(|a| matches!(a, Datum::Scalar(_))) && n != 1 {
        return call(f, args, bound, 1, out).map(to_scalar);
    }
    let first = args.remove(0);
    Ok(match f {
        Func::Floor => map_numeric(first, n, out, f64::floor, |x| x)?,
        Func::Ceil => map_numeric(first, n, out, f64::ceil, |x| x)?,
        Func::Abs => map_numeric(first, n, out, f64::abs, i64::wrapping_abs)?,
        Func::Sign => map_numeric(
            first,
            n,
            out,
            |x| {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    x * 0.0
                }
            },
            i64::signum,
        )?,
        Func::Round if args.is_empty() => map_numeric(first, n, out, f64::round, |x| x)?,
        Func::Round => {
            let digits = args.remove(0);
            let d = match digits {
                Datum::Scalar(v) => v.as_f64().unwrap_or(0.0),
                _ => return exec_err("ROUND precision must be constant"),
            };
            let scale = 10f64.powi(d as i32);
            map_partial(first, n, |x| Some((x * scale).round() / scale))
        }
        Func::Sqrt => map_partial(first, n, |x| (x >= 0.0).then(|| x.sqrt())),
        Func::Ln => map_partial(first, n, |x| (x > 0.0).then(|| x.ln())),
        Func::Log10 => map_partial(first, n, |x| (x > 0.0).then(|| x.log10())),
        Func::Log2 => map_partial(first, n, |x| (x > 0.0).then(|| x.log2())),
        Func::Log if args.is_empty() => map_partial(first, n, |x| (x > 0.0).then(|| x.log10())),
        Func::Log => {
            // LOG(base, x)
            let x = args.remove(0);
            let base = first;
            let lx = map_partial(x, n, |x| (x > 0.0).then(|| x.ln()));
            let lb = map_partial(base, n, |b| (b > 0.0 && b != 1.0).then(|| b.ln()));
            binary(BinaryOp::Div, lx, lb, n, DataType::Float, DataType::Float)?
        }
        Func::Exp => map_partial(first, n, |x| Some(x.exp())),
        Func::Pow => {
            let e = args.remove(0);
            if first.is_null_scalar() || e.is_null_scalar() {
                return Ok(Datum::Scalar(Value::Null));
            }
            let validity = and_validity(&[validity_of(&first), validity_of(&e)], n);
            let v = zip_f64(&f64_ref(&first), &f64_ref(&e), n, f64::powf);
            Datum::owned(ColumnData::with_validity(Values::Float(v), validity))
        }
        Func::Greatest | Func::Least | Func::Coalesce => {
            let mut all = vec![first];
            all.extend(args);
            let cols: Vec<ColumnData> = all.into_iter().map(|d| d.into_column(n, out)).collect();
            Datum::owned(fold_nary(f, &cols, n, out))
        }
        Func::NullIf => {
            let other = args.remove(0);
            let operand = unify([bound[0].ty, bound[1].ty])?.unwrap_or(DataType::Int);
            let same = binary(BinaryOp::Eq, first.clone(), other, n, DataType::Bool, operand)?;
            let mask = crate::vector::true_mask(&same, n);
            let c = first.into_column(n, out);
            let valid = (0..n).map(|i| c.is_valid(i) && !mask[i]).collect();
            Datum::owned(ColumnData::with_validity(c.values, Some(valid)))
        }
        Func::Lower | Func::Upper | Func::Length => {
            let c = first.into_column(n, DataType::Str);
            let Values::Str(v) = &c.values else { unreachable!() };
            let values = match f {
                Func::Lower => Values::Str(v.iter().map(|s| Arc::from(s.to_lowercase())).collect()),
                Func::Upper => Values::Str(v.iter().map(|s| Arc::from(s.to_uppercase())).collect()),
                _ => Values::Int(v.iter().map(|s| s.chars().count() as i64).collect()),
            };
            Datum::owned(ColumnData::with_validity(values, c.validity))
        }
        Func::IsNan => {
            let c = first.into_column(n, DataType::Float);
            let Values::Float(v) = &c.values else { unreachable!() };
            Datum::owned(ColumnData::with_validity(
                Values::Bool(v.iter().map(|x| x.is_nan()).collect()),
                c.validity,
            ))
        }
    })
}

/// GREATEST / LEAST skip NULLs; COALESCE takes the first non-NULL.
fn fold_nary(f: Func, cols: &[ColumnData], n: usize, ty: DataType) -> ColumnData {
    let mut out = cols[0].clone();
    for c in &cols[1..] {
        let mut valid = Vec::with_capacity(n);
        let out_valid: Vec<bool> = (0..n).map(|i| out.is_valid(i)).collect();
        macro_rules! fold {
            ($a:expr, $b:expr, $pick:expr) => {{
                for i in 0..n {
                    let (va, vb) = (out_valid[i], c.is_valid(i));
                    if !va && vb {
                        $a[i] = $b[i].clone();
                    } else if va && vb && f != Func::Coalesce && $pick(&$b[i], &$a[i]) {
                        $a[i] = $b[i].clone();
                    }
                    valid.push(va || vb);
                }
            }};
        }
        let greater = f == Func::Greatest;
        match (&mut out.values, &c.values) {
            (Values::Float(a), Values::Float(b)) => fold!(a, b, |x: &f64, y: &f64| if greater {
                x.total_cmp(y).is_gt()
            } else {
                x.total_cmp(y).is_lt()
            }),
            (Values::Int(a), Values::Int(b)) => fold!(a, b, |x: &i64, y: &i64| if greater { x > y } else { x < y }),
            (Values::Bool(a), Values::Bool(b)) => {
                fold!(a, b, |x: &bool, y: &bool| if greater { x > y } else { x < y })
            }
            (Values::Str(a), Values::Str(b)) => fold!(a, b, |x: &Arc<str>, y: &Arc<str>| if greater {
                x > y
            } else {
                x < y
            }),
            _ => unreachable!("arguments are cast to one type"),
        }
        out = ColumnData::with_validity(std::mem::replace(&mut out.values, Values::Bool(vec![])), Some(valid));
    }
    let _ = ty;
    out
}

fn like<'b>(x: &Datum, p: &Datum, n: usize, negated: bool, ci: bool) -> Result<Datum<'b>> {
    if x.is_null_scalar() || p.is_null_scalar() {
        return Ok(Datum::Scalar(Value::Null));
    }
    let xs = to_str_col(x, n);
    let ps = to_str_col(p, n);
    let validity = and_validity(&[validity_of(x), validity_of(p)], n);
    let v = xs
        .iter()
        .zip(&ps)
        .map(|(s, pat)| {
            let m = if ci {
                like_match(&s.to_lowercase(), &pat.to_lowercase())
            } else {
                like_match(s, pat)
            };
            m != negated
        })
        .collect();
    Ok(Datum::owned(ColumnData::with_validity(Values::Bool(v), validity)))
}

/// SQL LIKE with `%` and `_`.
pub fn like_match(s: &str, p: &str) -> bool {
    let s: Vec<char> = s.chars().collect();
    let p: Vec<char> = p.chars().collect();
    let (mut si, mut pi) = (0, 0);
    let mut star: Option<(usize, usize)> = None;
    while si < s.len() {
        if pi < p.len() && (p[pi] == '_' || p[pi] == s[si]) {
            si += 1;
            pi += 1;
        } else if pi < p.len() && p[pi] == '%' {
            star = Some((pi, si));
            pi += 1;
        } else if let Some((sp, ss)) = star {
            pi = sp + 1;
            si = ss + 1;
            star = Some((sp, ss + 1));
        } else {
            return false;
        }
    }
    while pi < p.len() && p[pi] == '%' {
        pi += 1;
    }
    pi == p.len()
}

/// Evaluates a constant expression (no column references).
pub fn eval_constant(e: &BExpr) -> Result<Value> {
    let batch = Batch { columns: &[], len: 1 };
    Ok(match e.eval(&batch)? {
        Datum::Scalar(v) => v,
        Datum::Col(c) => c.get(0),
    })
}

pub fn empty_column(ty: DataType) -> ColumnData {
    broadcast(&Value::Null, 0, ty)
}
