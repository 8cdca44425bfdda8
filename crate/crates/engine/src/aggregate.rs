//! Grouped aggregate accumulators with mergeable partial states.

use std::any::Any;
use std::sync::Arc;

use selcube_core::data::{ColumnData, DataType, Value, Values};

use crate::error::{bind_err, Result};
use crate::expr::BExpr;
use crate::hash::FastSet;
use crate::vector::{as_f64, cast, column_from_values, float_key};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggFunc {
    Count,
    CountStar,
    Sum,
    Min,
    Max,
    Product,
    Avg,
    Geomean,
    ArgMin,
    ArgMax,
    BitAnd,
    BitOr,
    BitXor,
    BoolAnd,
    BoolOr,
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
    Median,
}

impl AggFunc {
    pub fn from_name(name: &str, star: bool) -> Option<AggFunc> {
        use AggFunc::*;
        Some(match name.to_ascii_uppercase().as_str() {
            "COUNT" if star => CountStar,
            "COUNT" => Count,
            "SUM" => Sum,
            "MIN" => Min,
            "MAX" => Max,
            "PRODUCT" => Product,
            "AVG" => Avg,
            "GEOMEAN" => Geomean,
            "ARG_MIN" => ArgMin,
            "ARG_MAX" => ArgMax,
            "BIT_AND" => BitAnd,
            "BIT_OR" => BitOr,
            "BIT_XOR" => BitXor,
            "BOOL_AND" => BoolAnd,
            "BOOL_OR" => BoolOr,
            "VAR_SAMP" => VarSamp,
            "VAR_POP" => VarPop,
            "STDDEV_SAMP" => StddevSamp,
            "STDDEV_POP" => StddevPop,
            "COVAR_SAMP" => CovarSamp,
            "COVAR_POP" => CovarPop,
            "CORR" => Corr,
            "REGR_COUNT" => RegrCount,
            "REGR_AVGX" => RegrAvgx,
            "REGR_AVGY" => RegrAvgy,
            "REGR_SXX" => RegrSxx,
            "REGR_SYY" => RegrSyy,
            "REGR_SXY" => RegrSxy,
            "REGR_SLOPE" => RegrSlope,
            "REGR_INTERCEPT" => RegrIntercept,
            "REGR_R2" => RegrR2,
            "MEDIAN" => Median,
            _ => return None,
        })
    }

    pub fn arity(self) -> usize {
        use AggFunc::*;
        match self {
            CountStar => 0,
            ArgMin | ArgMax | CovarSamp | CovarPop | Corr => 2,
            RegrCount | RegrAvgx | RegrAvgy | RegrSxx | RegrSyy | RegrSxy | RegrSlope | RegrIntercept | RegrR2 => 2,
            _ => 1,
        }
    }

    fn bivariate(self) -> bool {
        self.arity() == 2 && !matches!(self, AggFunc::ArgMin | AggFunc::ArgMax)
    }

    /// Result type for the given argument types.
    pub fn result_type(self, args: &[Option<DataType>]) -> Result<DataType> {
        use AggFunc::*;
        let numeric = |t: Option<DataType>| match t {
            Some(DataType::Str) => bind_err(format!("{self:?} needs a numeric argument")),
            _ => Ok(()),
        };
        Ok(match self {
            Count | CountStar | RegrCount => DataType::Int,
            Sum => {
                numeric(args[0])?;
                match args[0] {
                    Some(DataType::Float) => DataType::Float,
                    _ => DataType::Int,
                }
            }
            Min | Max => args[0].unwrap_or(DataType::Int),
            ArgMin | ArgMax => args[0].unwrap_or(DataType::Int),
            BitAnd | BitOr | BitXor => {
                if matches!(args[0], Some(DataType::Float) | Some(DataType::Str)) {
                    return bind_err("bitwise aggregates need integers");
                }
                DataType::Int
            }
            BoolAnd | BoolOr => {
                if !matches!(args[0], None | Some(DataType::Bool)) {
                    return bind_err("boolean aggregates need booleans");
                }
                DataType::Bool
            }
            _ => {
                for a in args {
                    numeric(*a)?;
                }
                DataType::Float
            }
        })
    }

    fn input_type(self, args: &[Option<DataType>], i: usize) -> DataType {
        use AggFunc::*;
        match self {
            Min | Max | Count => args[i].unwrap_or(DataType::Int),
            ArgMin | ArgMax => args[i].unwrap_or(DataType::Int),
            Sum => match args[0] {
                Some(DataType::Float) => DataType::Float,
                _ => DataType::Int,
            },
            BitAnd | BitOr | BitXor => DataType::Int,
            BoolAnd | BoolOr => DataType::Bool,
            _ => DataType::Float,
        }
    }
}

/// A bound aggregate call.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundAgg {
    pub func: AggFunc,
    pub args: Vec<BExpr>,
    pub distinct: bool,
    pub filter: Option<BExpr>,
    pub ty: DataType,
}

impl BoundAgg {
    pub fn new(func: AggFunc, args: Vec<BExpr>, distinct: bool, filter: Option<BExpr>) -> Result<BoundAgg> {
        if args.len() != func.arity() {
            return bind_err(format!("{func:?} takes {} arguments", func.arity()));
        }
        if distinct && args.len() != 1 {
            return bind_err("DISTINCT aggregates take one argument");
        }
        let tys: Vec<_> = args.iter().map(|a| a.ty).collect();
        let ty = func.result_type(&tys)?;
        Ok(BoundAgg {
            func,
            args,
            distinct,
            filter,
            ty,
        })
    }

    /// Argument types the accumulator expects; callers cast inputs to these.
    pub fn input_types(&self) -> Vec<DataType> {
        let tys: Vec<_> = self.args.iter().map(|a| a.ty).collect();
        (0..self.args.len()).map(|i| self.func.input_type(&tys, i)).collect()
    }

    pub fn accumulator(&self) -> Box<dyn Accumulator> {
        let inputs = self.input_types();
        let inner = new_accumulator(self.func, &inputs, self.ty);
        if self.distinct {
            Box::new(DistinctAcc {
                inner: Some(inner),
                ty: inputs[0],
                seen: Vec::new(),
                values: Vec::new(),
            })
        } else {
            inner
        }
    }
}

fn new_accumulator(func: AggFunc, inputs: &[DataType], out: DataType) -> Box<dyn Accumulator> {
    use AggFunc::*;
    match func {
        Count | CountStar => Box::new(CountAcc::default()),
        Sum if out == DataType::Int => Box::new(SumInt::default()),
        Sum => Box::new(FloatFold::new(FoldKind::Sum)),
        Product => Box::new(FloatFold::new(FoldKind::Product)),
        Avg => Box::new(FloatFold::new(FoldKind::Avg)),
        Geomean => Box::new(FloatFold::new(FoldKind::Geomean)),
        Min | Max => {
            let max = func == Max;
            match inputs[0] {
                DataType::Int => Box::new(MinMax::<i64>::new(max)),
                DataType::Float => Box::new(MinMax::<f64>::new(max)),
                DataType::Bool => Box::new(MinMax::<bool>::new(max)),
                DataType::Str => Box::new(MinMax::<Arc<str>>::new(max)),
            }
        }
        ArgMin | ArgMax => Box::new(ArgAcc {
            max: func == ArgMax,
            ty: out,
            best: Vec::new(),
        }),
        BitAnd | BitOr | BitXor => Box::new(BitAcc {
            func,
            vals: Vec::new(),
            has: Vec::new(),
        }),
        BoolAnd | BoolOr => Box::new(BoolAcc {
            and: func == BoolAnd,
            vals: Vec::new(),
            has: Vec::new(),
        }),
        VarSamp | VarPop | StddevSamp | StddevPop => Box::new(MomentAcc {
            func,
            states: Vec::new(),
        }),
        Median => Box::new(MedianAcc { vals: Vec::new() }),
        _ => {
            debug_assert!(func.bivariate());
            Box::new(CoMomentAcc {
                func,
                states: Vec::new(),
            })
        }
    }
}

/// Per-batch input: group ids, arguments already cast to the input types,
/// and an optional row mask (aggregate FILTER).
pub struct AggInput<'a> {
    pub gids: &'a [u32],
    pub args: &'a [&'a ColumnData],
    pub mask: Option<&'a [bool]>,
}

impl AggInput<'_> {
    fn len(&self) -> usize {
        self.gids.len()
    }

    /// Rows to consume: mask AND every argument valid. `None` = all rows.
    fn rows(&self) -> Option<Vec<bool>> {
        let nulls = self.args.iter().any(|a| a.validity.is_some());
        if self.mask.is_none() && !nulls {
            return None;
        }
        let n = self.len();
        let mut keep = self.mask.map(<[bool]>::to_vec).unwrap_or_else(|| vec![true; n]);
        for a in self.args {
            if let Some(v) = &a.validity {
                for (k, ok) in keep.iter_mut().zip(v) {
                    *k &= *ok;
                }
            }
        }
        Some(keep)
    }
}

pub trait Accumulator: Send + Any {
    fn update(&mut self, ngroups: usize, input: &AggInput);
    /// Folds `other` in; its group `g` becomes group `mapping[g]` here.
    fn merge(&mut self, ngroups: usize, other: Box<dyn Accumulator>, mapping: &[u32]);
    fn finish(&mut self, ngroups: usize) -> ColumnData;
    fn into_any(self: Box<Self>) -> Box<dyn Any>;
}

fn downcast<T: 'static>(b: Box<dyn Accumulator>) -> Box<T> {
    b.into_any().downcast::<T>().expect("merging accumulators of one kind")
}

fn grow<T: Clone>(v: &mut Vec<T>, n: usize, fill: T) {
    if v.len() < n {
        v.resize(n, fill);
    }
}

macro_rules! for_rows {
    ($input:expr, |$i:ident, $g:ident| $body:block) => {{
        let input = $input;
        match input.rows() {
            None => {
                for ($i, &$g) in input.gids.iter().enumerate() {
                    let $g = $g as usize;
                    $body
                }
            }
            Some(keep) => {
                for ($i, &$g) in input.gids.iter().enumerate() {
                    if keep[$i] {
                        let $g = $g as usize;
                        $body
                    }
                }
            }
        }
    }};
}

#[derive(Default)]
struct CountAcc {
    counts: Vec<i64>,
}

impl Accumulator for CountAcc {
    fn update(&mut self, ngroups: usize, input: &AggInput) {
        grow(&mut self.counts, ngroups, 0);
        let counts = &mut self.counts;
        for_rows!(input, |_i, g| {
            counts[g] += 1;
        });
    }

    fn merge(&mut self, ngroups: usize, other: Box<dyn Accumulator>, mapping: &[u32]) {
        grow(&mut self.counts, ngroups, 0);
        let o = downcast::<Self>(other);
        for (g, c) in o.counts.iter().enumerate() {
            self.counts[mapping[g] as usize] += c;
        }
    }

    fn finish(&mut self, ngroups: usize) -> ColumnData {
        grow(&mut self.counts, ngroups, 0);
        ColumnData::new(Values::Int(std::mem::take(&mut self.counts)))
    }

    fn into_any(self: Box<Self>) -> Box<dyn Any> {
        self
    }
}

#[derive(Default)]
struct SumInt {
    sums: Vec<i128>,
    has: Vec<bool>,
}

impl Accumulator for SumInt {
    fn update(&mut self, ngroups: usize, input: &AggInput) {
        grow(&mut self.sums, ngroups, 0);
        grow(&mut self.has, ngroups, false);
        let Values::Int(v) = &input.args[0].values else {
            unreachable!()
        };
        let (sums, has) = (&mut self.sums, &mut self.has);
        for_rows!(input, |i, g| {
            sums[g] += v[i] as i128;
            has[g] = true;
        });
    }

    fn merge(&mut self, ngroups: usize, other: Box<dyn Accumulator>, mapping: &[u32]) {
        grow(&mut self.sums, ngroups, 0);
        grow(&mut self.has, ngroups, false);
        let o = downcast::<Self>(other);
        for g in 0..o.sums.len() {
            let t = mapping[g] as usize;
            self.sums[t] += o.sums[g];
            self.has[t] |= o.has[g];
        }
    }

    fn finish(&mut self, ngroups: usize) -> ColumnData {
        grow(&mut self.sums, ngroups, 0);
        grow(&mut self.has, ngroups, false);
        let v = self
            .sums
            .iter()
            .map(|s| (*s).clamp(i64::MIN as i128, i64::MAX as i128) as i64)
            .collect();
        ColumnData::with_validity(Values::Int(v), Some(std::mem::take(&mut self.has)))
    }

    fn into_any(self: Box<Self>) -> Box<dyn Any> {
        self
    }
}

#[derive(Clone, Copy, PartialEq)]
enum FoldKind {
    Sum,
    Product,
    Avg,
    Geomean,
}

/// Sum, product, mean and geometric mean: an f64 fold plus a count.
struct FloatFold {
    kind: FoldKind,
    acc: Vec<f64>,
    counts: Vec<u64>,
}

impl FloatFold {
    fn new(kind: FoldKind) -> Self {
        FloatFold {
            kind,
            acc: Vec::new(),
            counts: Vec::new(),
        }
    }

    fn identity(&self) -> f64 {
        if self.kind == FoldKind::Product {
            1.0
        } else {
            0.0
        }
    }
}

impl Accumulator for FloatFold {
    fn update(&mut self, ngroups: usize, input: &AggInput) {
        let id = self.identity();
        grow(&mut self.acc, ngroups, id);
        grow(&mut self.counts, ngroups, 0);
        let v = as_f64(input.args[0]);
        let (acc, counts) = (&mut self.acc, &mut self.counts);
        match self.kind {
            FoldKind::Sum | FoldKind::Avg => for_rows!(input, |i, g| {
                acc[g] += v[i];
                counts[g] += 1;
            }),
            FoldKind::Product => for_rows!(input, |i, g| {
                acc[g] *= v[i];
                counts[g] += 1;
            }),
            FoldKind::Geomean => for_rows!(input, |i, g| {
                acc[g] += v[i].ln();
                counts[g] += 1;
            }),
        }
    }

    fn merge(&mut self, ngroups: usize, other: Box<dyn Accumulator>, mapping: &[u32]) {
        let id = self.identity();
        grow(&mut self.acc, ngroups, id);
        grow(&mut self.counts, ngroups, 0);
        let o = downcast::<Self>(other);
        for g in 0..o.acc.len() {
            let t = mapping[g] as usize;
            if self.kind == FoldKind::Product {
                self.acc[t] *= o.acc[g];
            } else {
                self.acc[t] += o.acc[g];
            }
            self.counts[t] += o.counts[g];
        }
    }

    fn finish(&mut self, ngroups: usize) -> ColumnData {
        let id = self.identity();
        grow(&mut self.acc, ngroups, id);
        grow(&mut self.counts, ngroups, 0);
        let v = self
            .acc
            .iter()
            .zip(&self.counts)
            .map(|(a, &n)| match self.kind {
                FoldKind::Sum | FoldKind::Product => *a,
                FoldKind::Avg => a / n as f64,
                FoldKind::Geomean => (a / n as f64).exp(),
            })
            .collect();
        let valid = self.counts.iter().map(|&n| n > 0).collect();
        ColumnData::with_validity(Values::Float(v), Some(valid))
    }

    fn into_any(self: Box<Self>) -> Box<dyn Any> {
        self
    }
}

trait Prim: Clone + Default + Send + 'static {
    fn slice(c: &ColumnData) -> &[Self];
    fn less(a: &Self, b: &Self) -> bool;
    fn values(v: Vec<Self>) -> Values;
}

impl Prim for i64 {
    fn slice(c: &ColumnData) -> &[Self] {
        match &c.values {
            Values::Int(v) => v,
            _ => unreachable!(),
        }
    }
    fn less(a: &Self, b: &Self) -> bool {
        a < b
    }
    fn values(v: Vec<Self>) -> Values {
        Values::Int(v)
    }
}

impl Prim for f64 {
    fn slice(c: &ColumnData) -> &[Self] {
        match &c.values {
            Values::Float(v) => v,
            _ => unreachable!(),
        }
    }
    fn less(a: &Self, b: &Self) -> bool {
        a.total_cmp(b).is_lt()
    }
    fn values(v: Vec<Self>) -> Values {
        Values::Float(v)
    }
}

impl Prim for bool {
    fn slice(c: &ColumnData) -> &[Self] {
        match &c.values {
            Values::Bool(v) => v,
            _ => unreachable!(),
        }
    }
    fn less(a: &Self, b: &Self) -> bool {
        !a & b
    }
    fn values(v: Vec<Self>) -> Values {
        Values::Bool(v)
    }
}

impl Prim for Arc<str> {
    fn slice(c: &ColumnData) -> &[Self] {
        match &c.values {
            Values::Str(v) => v,
            _ => unreachable!(),
        }
    }
    fn less(a: &Self, b: &Self) -> bool {
        a < b
    }
    fn values(v: Vec<Self>) -> Values {
        Values::Str(v)
    }
}

struct MinMax<T> {
    max: bool,
    vals: Vec<T>,
    has: Vec<bool>,
}

impl<T: Prim> MinMax<T> {
    fn new(max: bool) -> Self {
        MinMax {
            max,
            vals: Vec::new(),
            has: Vec::new(),
        }
    }

    #[inline]
    fn offer(&mut self, g: usize, v: &T) {
        let better = if self.max {
            T::less(&self.vals[g], v)
        } else {
            T::less(v, &self.vals[g])
        };
        if !self.has[g] || better {
            self.vals[g] = v.clone();
            self.has[g] = true;
        }
    }
}

impl<T: Prim> Accumulator for MinMax<T> {
    fn update(&mut self, ngroups: usize, input: &AggInput) {
        grow(&mut self.vals, ngroups, T::default());
        grow(&mut self.has, ngroups, false);
        let v = T::slice(input.args[0]);
        for_rows!(input, |i, g| {
            self.offer(g, &v[i]);
        });
    }

    fn merge(&mut self, ngroups: usize, other: Box<dyn Accumulator>, mapping: &[u32]) {
        grow(&mut self.vals, ngroups, T::default());
        grow(&mut self.has, ngroups, false);
        let o = downcast::<Self>(other);
        for g in 0..o.vals.len() {
            if o.has[g] {
                self.offer(mapping[g] as usize, &o.vals[g]);
            }
        }
    }

    fn finish(&mut self, ngroups: usize) -> ColumnData {
        grow(&mut self.vals, ngroups, T::default());
        grow(&mut self.has, ngroups, false);
        ColumnData::with_validity(
            T::values(std::mem::take(&mut self.vals)),
            Some(std::mem::take(&mut self.has)),
        )
    }

    fn into_any(self: Box<Self>) -> Box<dyn Any> {
        self
    }
}

/// ARG_MIN / ARG_MAX(arg, val). Ties keep the earliest row.
struct ArgAcc {
    max: bool,
    ty: DataType,
    best: Vec<Option<(Value, Value)>>,
}

impl ArgAcc {
    fn offer(&mut self, g: usize, val: Value, arg: Value) {
        let replace = match &self.best[g] {
            None => true,
            Some((cur, _)) => {
                let o = val.total_cmp(cur);
                if self.max {
                    o.is_gt()
                } else {
                    o.is_lt()
                }
            }
        };
        if replace {
            self.best[g] = Some((val, arg));
        }
    }
}

impl Accumulator for ArgAcc {
    fn update(&mut self, ngroups: usize, input: &AggInput) {
        grow(&mut self.best, ngroups, None);
        let (arg, val) = (input.args[0], input.args[1]);
        for (i, &g) in input.gids.iter().enumerate() {
            if input.mask.is_some_and(|m| !m[i]) || !val.is_valid(i) {
                continue;
            }
            self.offer(g as usize, val.get(i), arg.get(i));
        }
    }

    fn merge(&mut self, ngroups: usize, other: Box<dyn Accumulator>, mapping: &[u32]) {
        grow(&mut self.best, ngroups, None);
        let o = downcast::<Self>(other);
        for (g, b) in o.best.into_iter().enumerate() {
            if let Some((val, arg)) = b {
                self.offer(mapping[g] as usize, val, arg);
            }
        }
    }

    fn finish(&mut self, ngroups: usize) -> ColumnData {
        grow(&mut self.best, ngroups, None);
        let vals: Vec<Value> = self
            .best
            .iter()
            .map(|b| b.as_ref().map(|(_, a)| a.clone()).unwrap_or(Value::Null))
            .collect();
        column_from_values(&vals, self.ty)
    }

    fn into_any(self: Box<Self>) -> Box<dyn Any> {
        self
    }
}

struct BitAcc {
    func: AggFunc,
    vals: Vec<i64>,
    has: Vec<bool>,
}

impl BitAcc {
    #[inline]
    fn fold(func: AggFunc, has: bool, cur: i64, v: i64) -> i64 {
        if !has {
            return v;
        }
        match func {
            AggFunc::BitAnd => cur & v,
            AggFunc::BitOr => cur | v,
            _ => cur ^ v,
        }
    }
}

impl Accumulator for BitAcc {
    fn update(&mut self, ngroups: usize, input: &AggInput) {
        grow(&mut self.vals, ngroups, 0);
        grow(&mut self.has, ngroups, false);
        let Values::Int(v) = &input.args[0].values else {
            unreachable!()
        };
        let f = self.func;
        for_rows!(input, |i, g| {
            self.vals[g] = Self::fold(f, self.has[g], self.vals[g], v[i]);
            self.has[g] = true;
        });
    }

    fn merge(&mut self, ngroups: usize, other: Box<dyn Accumulator>, mapping: &[u32]) {
        grow(&mut self.vals, ngroups, 0);
        grow(&mut self.has, ngroups, false);
        let o = downcast::<Self>(other);
        for g in 0..o.vals.len() {
            if o.has[g] {
                let t = mapping[g] as usize;
                self.vals[t] = Self::fold(self.func, self.has[t], self.vals[t], o.vals[g]);
                self.has[t] = true;
            }
        }
    }

    fn finish(&mut self, ngroups: usize) -> ColumnData {
        grow(&mut self.vals, ngroups, 0);
        grow(&mut self.has, ngroups, false);
        ColumnData::with_validity(
            Values::Int(std::mem::take(&mut self.vals)),
            Some(std::mem::take(&mut self.has)),
        )
    }

    fn into_any(self: Box<Self>) -> Box<dyn Any> {
        self
    }
}

struct BoolAcc {
    and: bool,
    vals: Vec<bool>,
    has: Vec<bool>,
}

impl Accumulator for BoolAcc {
    fn update(&mut self, ngroups: usize, input: &AggInput) {
        let and = self.and;
        grow(&mut self.vals, ngroups, and);
        grow(&mut self.has, ngroups, false);
        let Values::Bool(v) = &input.args[0].values else {
            unreachable!()
        };
        for_rows!(input, |i, g| {
            self.vals[g] = if and { self.vals[g] && v[i] } else { self.vals[g] || v[i] };
            self.has[g] = true;
        });
    }

    fn merge(&mut self, ngroups: usize, other: Box<dyn Accumulator>, mapping: &[u32]) {
        let and = self.and;
        grow(&mut self.vals, ngroups, and);
        grow(&mut self.has, ngroups, false);
        let o = downcast::<Self>(other);
        for g in 0..o.vals.len() {
            let t = mapping[g] as usize;
            self.vals[t] = if and {
                self.vals[t] && o.vals[g]
            } else {
                self.vals[t] || o.vals[g]
            };
            self.has[t] |= o.has[g];
        }
    }

    fn finish(&mut self, ngroups: usize) -> ColumnData {
        grow(&mut self.vals, ngroups, self.and);
        grow(&mut self.has, ngroups, false);
        ColumnData::with_validity(
            Values::Bool(std::mem::take(&mut self.vals)),
            Some(std::mem::take(&mut self.has)),
        )
    }

    fn into_any(self: Box<Self>) -> Box<dyn Any> {
        self
    }
}

/// Count, mean and sum of squared deviations (Welford; Chan when merging).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub n: f64,
    pub mean: f64,
    pub m2: f64,
}

impl Moments {
    #[inline]
    pub fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, o: &Moments) {
        if o.n == 0.0 {
            return;
        }
        if self.n == 0.0 {
            *self = *o;
            return;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        self.mean += d * o.n / n;
        self.m2 += o.m2 + d * d * self.n * o.n / n;
        self.n = n;
    }
}

struct MomentAcc {
    func: AggFunc,
    states: Vec<Moments>,
}

impl Accumulator for MomentAcc {
    fn update(&mut self, ngroups: usize, input: &AggInput) {
        grow(&mut self.states, ngroups, Moments::default());
        let v = as_f64(input.args[0]);
        let states = &mut self.states;
        for_rows!(input, |i, g| {
            states[g].push(v[i]);
        });
    }

    fn merge(&mut self, ngroups: usize, other: Box<dyn Accumulator>, mapping: &[u32]) {
        grow(&mut self.states, ngroups, Moments::default());
        let o = downcast::<Self>(other);
        for (g, s) in o.states.iter().enumerate() {
            self.states[mapping[g] as usize].merge(s);
        }
    }

    fn finish(&mut self, ngroups: usize) -> ColumnData {
        grow(&mut self.states, ngroups, Moments::default());
        let vals: Vec<Option<f64>> = self
            .states
            .iter()
            .map(|s| match self.func {
                AggFunc::VarSamp => (s.n >= 2.0).then(|| s.m2 / (s.n - 1.0)),
                AggFunc::VarPop => (s.n >= 1.0).then(|| s.m2 / s.n),
                AggFunc::StddevSamp => (s.n >= 2.0).then(|| (s.m2 / (s.n - 1.0)).max(0.0).sqrt()),
                _ => (s.n >= 1.0).then(|| (s.m2 / s.n).max(0.0).sqrt()),
            })
            .collect();
        floats(vals)
    }

    fn into_any(self: Box<Self>) -> Box<dyn Any> {
        self
    }
}

fn floats(vals: Vec<Option<f64>>) -> ColumnData {
    let valid = vals.iter().map(Option::is_some).collect();
    let v = vals.into_iter().map(|x| x.unwrap_or(0.0)).collect();
    ColumnData::with_validity(Values::Float(v), Some(valid))
}

/// Bivariate co-moments over rows where both inputs are non-NULL.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CoMoments {
    pub n: f64,
    pub mx: f64,
    pub my: f64,
    pub m2x: f64,
    pub m2y: f64,
    pub cxy: f64,
}

impl CoMoments {
    #[inline]
    pub fn push(&mut self, y: f64, x: f64) {
        self.n += 1.0;
        let dx = x - self.mx;
        let dy = y - self.my;
        self.mx += dx / self.n;
        self.my += dy / self.n;
        self.m2x += dx * (x - self.mx);
        self.m2y += dy * (y - self.my);
        self.cxy += dx * (y - self.my);
    }

    pub fn merge(&mut self, o: &CoMoments) {
        if o.n == 0.0 {
            return;
        }
        if self.n == 0.0 {
            *self = *o;
            return;
        }
        let n = self.n + o.n;
        let dx = o.mx - self.mx;
        let dy = o.my - self.my;
        let w = self.n * o.n / n;
        self.mx += dx * o.n / n;
        self.my += dy * o.n / n;
        self.m2x += o.m2x + dx * dx * w;
        self.m2y += o.m2y + dy * dy * w;
        self.cxy += o.cxy + dx * dy * w;
        self.n = n;
    }

    pub fn finish(&self, func: AggFunc) -> Option<f64> {
        let s = self;
        let any = s.n >= 1.0;
        match func {
            AggFunc::CovarPop => any.then(|| s.cxy / s.n),
            AggFunc::CovarSamp => (s.n >= 2.0).then(|| s.cxy / (s.n - 1.0)),
            AggFunc::Corr => (any && s.m2x != 0.0 && s.m2y != 0.0).then(|| s.cxy / (s.m2x * s.m2y).sqrt()),
            AggFunc::RegrAvgx => any.then_some(s.mx),
            AggFunc::RegrAvgy => any.then_some(s.my),
            AggFunc::RegrSxx => any.then_some(s.m2x),
            AggFunc::RegrSyy => any.then_some(s.m2y),
            AggFunc::RegrSxy => any.then_some(s.cxy),
            AggFunc::RegrSlope => (any && s.m2x != 0.0).then(|| s.cxy / s.m2x),
            AggFunc::RegrIntercept => (any && s.m2x != 0.0).then(|| s.my - s.cxy / s.m2x * s.mx),
            AggFunc::RegrR2 => {
                if !any || s.m2x == 0.0 {
                    None
                } else if s.m2y == 0.0 {
                    Some(1.0)
                } else {
                    Some(s.cxy * s.cxy / (s.m2x * s.m2y))
                }
            }
            _ => unreachable!("not a bivariate aggregate"),
        }
    }
}

struct CoMomentAcc {
    func: AggFunc,
    states: Vec<CoMoments>,
}

impl Accumulator for CoMomentAcc {
    fn update(&mut self, ngroups: usize, input: &AggInput) {
        grow(&mut self.states, ngroups, CoMoments::default());
        let y = as_f64(input.args[0]);
        let x = as_f64(input.args[1]);
        let states = &mut self.states;
        for_rows!(input, |i, g| {
            states[g].push(y[i], x[i]);
        });
    }

    fn merge(&mut self, ngroups: usize, other: Box<dyn Accumulator>, mapping: &[u32]) {
        grow(&mut self.states, ngroups, CoMoments::default());
        let o = downcast::<Self>(other);
        for (g, s) in o.states.iter().enumerate() {
            self.states[mapping[g] as usize].merge(s);
        }
    }

    fn finish(&mut self, ngroups: usize) -> ColumnData {
        grow(&mut self.states, ngroups, CoMoments::default());
        if self.func == AggFunc::RegrCount {
            return ColumnData::new(Values::Int(self.states.iter().map(|s| s.n as i64).collect()));
        }
        floats(self.states.iter().map(|s| s.finish(self.func)).collect())
    }

    fn into_any(self: Box<Self>) -> Box<dyn Any> {
        self
    }
}

/// Exact median (mean of the two middle values for even counts).
struct MedianAcc {
    vals: Vec<Vec<f64>>,
}

impl Accumulator for MedianAcc {
    fn update(&mut self, ngroups: usize, input: &AggInput) {
        grow(&mut self.vals, ngroups, Vec::new());
        let v = as_f64(input.args[0]);
        let vals = &mut self.vals;
        for_rows!(input, |i, g| {
            vals[g].push(v[i]);
        });
    }

    fn merge(&mut self, ngroups: usize, other: Box<dyn Accumulator>, mapping: &[u32]) {
        grow(&mut self.vals, ngroups, Vec::new());
        let o = downcast::<Self>(other);
        for (g, v) in o.vals.into_iter().enumerate() {
            self.vals[mapping[g] as usize].extend(v);
        }
    }

    fn finish(&mut self, ngroups: usize) -> ColumnData {
        grow(&mut self.vals, ngroups, Vec::new());
        let out = self
            .vals
            .iter_mut()
            .map(|v| {
                if v.is_empty() {
                    return None;
                }
                v.sort_by(f64::total_cmp);
                let m = v.len() / 2;
                Some(if v.len() % 2 == 1 { v[m] } else { (v[m - 1] + v[m]) / 2.0 })
            })
            .collect();
        floats(out)
    }

    fn into_any(self: Box<Self>) -> Box<dyn Any> {
        self
    }
}

#[derive(Clone, PartialEq, Eq, Hash)]
enum DKey {
    Bool(bool),
    Int(i64),
    Float(u64),
    Str(Arc<str>),
}

/// DISTINCT wrapper: keeps each group's distinct values in first-seen order
/// and feeds them to the inner accumulator at the end.
struct DistinctAcc {
    inner: Option<Box<dyn Accumulator>>,
    ty: DataType,
    seen: Vec<FastSet<DKey>>,
    values: Vec<Vec<Value>>,
}

impl DistinctAcc {
    fn add(&mut self, g: usize, v: Value) {
        let key = match &v {
            Value::Bool(b) => DKey::Bool(*b),
            Value::Int(i) => DKey::Int(*i),
            Value::Float(f) => DKey::Float(float_key(*f)),
            Value::Str(s) => DKey::Str(s.clone()),
            Value::Null => return,
        };
        if self.seen[g].insert(key) {
            self.values[g].push(v);
        }
    }
}

impl Accumulator for DistinctAcc {
    fn update(&mut self, ngroups: usize, input: &AggInput) {
        grow(&mut self.seen, ngroups, FastSet::default());
        grow(&mut self.values, ngroups, Vec::new());
        let c = input.args[0];
        for (i, &g) in input.gids.iter().enumerate() {
            if input.mask.is_some_and(|m| !m[i]) || !c.is_valid(i) {
                continue;
            }
            self.add(g as usize, c.get(i));
        }
    }

    fn merge(&mut self, ngroups: usize, other: Box<dyn Accumulator>, mapping: &[u32]) {
        grow(&mut self.seen, ngroups, FastSet::default());
        grow(&mut self.values, ngroups, Vec::new());
        let o = downcast::<Self>(other);
        for (g, vals) in o.values.into_iter().enumerate() {
            for v in vals {
                self.add(mapping[g] as usize, v);
            }
        }
    }

    fn finish(&mut self, ngroups: usize) -> ColumnData {
        grow(&mut self.values, ngroups, Vec::new());
        let mut gids = Vec::new();
        let mut flat = Vec::new();
        for (g, vals) in self.values.iter().enumerate() {
            for v in vals {
                gids.push(g as u32);
                flat.push(v.clone());
            }
        }
        let col = cast(column_from_values(&flat, self.ty), self.ty);
        let mut inner = self.inner.take().expect("finish called once");
        inner.update(
            ngroups,
            &AggInput {
                gids: &gids,
                args: &[&col],
                mask: None,
            },
        );
        inner.finish(ngroups)
    }

    fn into_any(self: Box<Self>) -> Box<dyn Any> {
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn run(func: AggFunc, cols: &[ColumnData], gids: &[u32], ngroups: usize) -> ColumnData {
        let tys: Vec<_> = cols.iter().map(|c| Some(c.data_type())).collect();
        let out = func.result_type(&tys).unwrap();
        let inputs: Vec<_> = (0..cols.len()).map(|i| func.input_type(&tys, i)).collect();
        let cast_cols: Vec<ColumnData> = cols.iter().zip(&inputs).map(|(c, t)| cast(c.clone(), *t)).collect();
        let refs: Vec<&ColumnData> = cast_cols.iter().collect();
        let mut acc = new_accumulator(func, &inputs, out);
        acc.update(
            ngroups,
            &AggInput {
                gids,
                args: &refs,
                mask: None,
            },
        );
        acc.finish(ngroups)
    }

    fn fcol(v: &[f64]) -> ColumnData {
        ColumnData::new(Values::Float(v.to_vec()))
    }

    #[test]
    fn empty_groups_follow_null_rules() {
        let c = fcol(&[]);
        assert_eq!(run(AggFunc::Count, &[c.clone()], &[], 1).get(0), Value::Int(0));
        assert_eq!(run(AggFunc::Sum, &[c.clone()], &[], 1).get(0), Value::Null);
        assert_eq!(run(AggFunc::VarPop, &[c.clone()], &[], 1).get(0), Value::Null);
        assert_eq!(run(AggFunc::RegrCount, &[c.clone(), c.clone()], &[], 1).get(0), Value::Int(0));
        assert_eq!(run(AggFunc::RegrR2, &[c.clone(), c], &[], 1).get(0), Value::Null);
    }

    #[test]
    fn regr_r2_edge_cases() {
        let x = fcol(&[1.0, 2.0, 3.0]);
        let flat = fcol(&[5.0, 5.0, 5.0]);
        assert_eq!(run(AggFunc::RegrR2, &[flat.clone(), x.clone()], &[0, 0, 0], 1).get(0), Value::Float(1.0));
        assert_eq!(run(AggFunc::RegrR2, &[x, flat], &[0, 0, 0], 1).get(0), Value::Null);
    }

    #[test]
    fn arg_min_ties_keep_first() {
        let arg = ColumnData::new(Values::Int(vec![10, 20, 30]));
        let val = fcol(&[1.0, 0.5, 0.5]);
        assert_eq!(run(AggFunc::ArgMin, &[arg.clone(), val.clone()], &[0, 0, 0], 1).get(0), Value::Int(20));
        assert_eq!(run(AggFunc::ArgMax, &[arg, val], &[0, 0, 0], 1).get(0), Value::Int(10));
    }

    #[test]
    fn median_and_geomean() {
        let c = fcol(&[4.0, 1.0, 3.0, 2.0]);
        assert_eq!(run(AggFunc::Median, &[c.clone()], &[0; 4], 1).get(0), Value::Float(2.5));
        let g = run(AggFunc::Geomean, &[fcol(&[2.0, 8.0])], &[0, 0], 1).get(0).as_f64().unwrap();
        assert!((g - 4.0).abs() < 1e-12);
    }

    #[test]
    fn distinct_count() {
        let c = ColumnData::new(Values::Int(vec![1, 1, 2, 3, 3, 3]));
        let agg = BoundAgg {
            func: AggFunc::Count,
            args: vec![],
            distinct: true,
            filter: None,
            ty: DataType::Int,
        };
        let mut acc: Box<dyn Accumulator> = Box::new(DistinctAcc {
            inner: Some(new_accumulator(agg.func, &[DataType::Int], DataType::Int)),
            ty: DataType::Int,
            seen: Vec::new(),
            values: Vec::new(),
        });
        acc.update(
            2,
            &AggInput {
                gids: &[0, 0, 0, 1, 1, 1],
                args: &[&c],
                mask: None,
            },
        );
        let out = acc.finish(2);
        assert_eq!(out.get(0), Value::Int(2));
        assert_eq!(out.get(1), Value::Int(1));
    }

    proptest! {
        #[test]
        fn moments_merge_matches_single_pass(
            xs in proptest::collection::vec(-1e3f64..1e3, 0..60),
            ys in proptest::collection::vec(-1e3f64..1e3, 0..60),
            split in 0usize..60,
        ) {
            let n = xs.len().min(ys.len());
            let split = split.min(n);
            let mut whole = CoMoments::default();
            let mut a = CoMoments::default();
            let mut b = CoMoments::default();
            for i in 0..n {
                whole.push(ys[i], xs[i]);
                if i < split { a.push(ys[i], xs[i]) } else { b.push(ys[i], xs[i]) }
            }
            a.merge(&b);
            let close = |p: f64, q: f64| (p - q).abs() <= 1e-6 * (1.0 + p.abs().max(q.abs()));
            prop_assert_eq!(a.n, whole.n);
            prop_assert!(close(a.mx, whole.mx) && close(a.my, whole.my));
            prop_assert!(close(a.m2x, whole.m2x) && close(a.m2y, whole.m2y) && close(a.cxy, whole.cxy));
        }

        #[test]
        fn partitioned_update_equals_whole(
            vals in proptest::collection::vec(-100i64..100, 1..80),
            groups in 1u32..5,
            split in 0usize..80,
        ) {
            let n = vals.len();
            let split = split.min(n);
            let gids: Vec<u32> = (0..n as u32).map(|i| i % groups).collect();
            let col = ColumnData::new(Values::Int(vals.clone()));
            for func in [AggFunc::Sum, AggFunc::Min, AggFunc::Max, AggFunc::Count, AggFunc::BitXor] {
                let whole = run(func, &[col.clone()], &gids, groups as usize);
                let tys = [Some(DataType::Int)];
                let out = func.result_type(&tys).unwrap();
                let mut a = new_accumulator(func, &[DataType::Int], out);
                let mut b = new_accumulator(func, &[DataType::Int], out);
                let left = ColumnData::new(Values::Int(vals[..split].to_vec()));
                let right = ColumnData::new(Values::Int(vals[split..].to_vec()));
                a.update(groups as usize, &AggInput { gids: &gids[..split], args: &[&left], mask: None });
                b.update(groups as usize, &AggInput { gids: &gids[split..], args: &[&right], mask: None });
                let mapping: Vec<u32> = (0..groups).collect();
                a.merge(groups as usize, b, &mapping);
                let merged = a.finish(groups as usize);
                for g in 0..groups as usize {
                    prop_assert_eq!(merged.get(g), whole.get(g));
                }
            }
        }
    }
}
