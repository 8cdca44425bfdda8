//! Evaluated values and column-buffer utilities.

use std::borrow::Cow;
use std::sync::Arc;

use selcube_core::data::{ColumnData, DataType, Value, Values};

/// Result of evaluating an expression over a batch.
#[derive(Debug, Clone)]
pub enum Datum<'a> {
    Scalar(Value),
    Col(Cow<'a, ColumnData>),
}

impl<'a> Datum<'a> {
    pub fn owned(c: ColumnData) -> Self {
        Datum::Col(Cow::Owned(c))
    }

    pub fn borrowed(c: &'a ColumnData) -> Self {
        Datum::Col(Cow::Borrowed(c))
    }

    pub fn into_column(self, len: usize, ty: DataType) -> ColumnData {
        match self {
            Datum::Scalar(v) => broadcast(&v, len, ty),
            Datum::Col(c) => cast(c.into_owned(), ty),
        }
    }

    /// Validity of row `i` without materializing.
    #[inline]
    pub fn is_valid(&self, i: usize) -> bool {
        match self {
            Datum::Scalar(v) => !v.is_null(),
            Datum::Col(c) => c.is_valid(i),
        }
    }

    pub fn get(&self, i: usize) -> Value {
        match self {
            Datum::Scalar(v) => v.clone(),
            Datum::Col(c) => c.get(i),
        }
    }

    pub fn is_null_scalar(&self) -> bool {
        matches!(self, Datum::Scalar(Value::Null))
    }
}

pub fn broadcast(v: &Value, n: usize, ty: DataType) -> ColumnData {
    let values = match (v, ty) {
        (Value::Null, _) => {
            return ColumnData::with_validity(Values::with_zeroed(ty, n), Some(vec![false; n]));
        }
        (Value::Bool(b), DataType::Bool) => Values::Bool(vec![*b; n]),
        (Value::Int(i), DataType::Int) => Values::Int(vec![*i; n]),
        (Value::Int(i), DataType::Float) => Values::Float(vec![*i as f64; n]),
        (Value::Float(f), DataType::Float) => Values::Float(vec![*f; n]),
        (Value::Float(f), DataType::Int) => Values::Int(vec![*f as i64; n]),
        (Value::Str(s), DataType::Str) => Values::Str(vec![s.clone(); n]),
        (other, DataType::Str) => Values::Str(vec![Arc::from(other.to_string()); n]),
        (Value::Bool(b), DataType::Int) => Values::Int(vec![*b as i64; n]),
        (Value::Bool(b), DataType::Float) => Values::Float(vec![*b as i64 as f64; n]),
        (Value::Int(i), DataType::Bool) => Values::Bool(vec![*i != 0; n]),
        (Value::Float(f), DataType::Bool) => Values::Bool(vec![*f != 0.0; n]),
        (Value::Str(s), t) => return broadcast(&parse_str(s, t), n, t),
    };
    ColumnData::new(values)
}

fn parse_str(s: &str, ty: DataType) -> Value {
    match ty {
        DataType::Int => s.trim().parse().map(Value::Int).unwrap_or(Value::Null),
        DataType::Float => s.trim().parse().map(Value::Float).unwrap_or(Value::Null),
        DataType::Bool => match s.trim().to_ascii_lowercase().as_str() {
            "true" | "t" | "1" => Value::Bool(true),
            "false" | "f" | "0" => Value::Bool(false),
            _ => Value::Null,
        },
        DataType::Str => Value::Str(Arc::from(s)),
    }
}

trait Zeroed {
    fn with_zeroed(ty: DataType, n: usize) -> Values;
}

impl Zeroed for Values {
    fn with_zeroed(ty: DataType, n: usize) -> Values {
        match ty {
            DataType::Bool => Values::Bool(vec![false; n]),
            DataType::Int => Values::Int(vec![0; n]),
            DataType::Float => Values::Float(vec![0.0; n]),
            DataType::Str => Values::Str(vec![Arc::from(""); n]),
        }
    }
}

pub fn null_column(ty: DataType, n: usize) -> ColumnData {
    broadcast(&Value::Null, n, ty)
}

/// Converts a column to `ty`, keeping validity.
pub fn cast(c: ColumnData, ty: DataType) -> ColumnData {
    if c.data_type() == ty {
        return c;
    }
    let validity = c.validity;
    let values = match (c.values, ty) {
        (Values::Int(v), DataType::Float) => Values::Float(v.into_iter().map(|x| x as f64).collect()),
        (Values::Float(v), DataType::Int) => Values::Int(v.into_iter().map(|x| x as i64).collect()),
        (Values::Bool(v), DataType::Int) => Values::Int(v.into_iter().map(|x| x as i64).collect()),
        (Values::Bool(v), DataType::Float) => Values::Float(v.into_iter().map(|x| x as i64 as f64).collect()),
        (Values::Int(v), DataType::Bool) => Values::Bool(v.into_iter().map(|x| x != 0).collect()),
        (Values::Float(v), DataType::Bool) => Values::Bool(v.into_iter().map(|x| x != 0.0).collect()),
        (values, DataType::Str) => {
            let tmp = ColumnData::new(values);
            Values::Str((0..tmp.len()).map(|i| Arc::from(tmp.get(i).to_string())).collect())
        }
        (Values::Str(v), t) => {
            let mut valid = validity.clone().unwrap_or_else(|| vec![true; v.len()]);
            let parsed: Vec<Value> = v
                .iter()
                .zip(valid.iter_mut())
                .map(|(s, ok)| {
                    let p = parse_str(s, t);
                    *ok &= !p.is_null();
                    p
                })
                .collect();
            let mut col = ColumnData::from_values(&parsed, t);
            col = cast_values_only(col, t);
            return ColumnData::with_validity(col.values, Some(valid));
        }
        (v, _) => v,
    };
    ColumnData::with_validity(values, validity)
}

fn cast_values_only(c: ColumnData, ty: DataType) -> ColumnData {
    if c.data_type() == ty {
        c
    } else {
        cast(c, ty)
    }
}

/// Float view of a numeric column.
pub fn as_f64(c: &ColumnData) -> Cow<'_, [f64]> {
    match &c.values {
        Values::Float(v) => Cow::Borrowed(v),
        Values::Int(v) => Cow::Owned(v.iter().map(|&x| x as f64).collect()),
        Values::Bool(v) => Cow::Owned(v.iter().map(|&x| x as i64 as f64).collect()),
        Values::Str(v) => Cow::Owned(v.iter().map(|s| s.trim().parse().unwrap_or(f64::NAN)).collect()),
    }
}

pub fn slice(c: &ColumnData, start: usize, end: usize) -> ColumnData {
    let values = match &c.values {
        Values::Bool(v) => Values::Bool(v[start..end].to_vec()),
        Values::Int(v) => Values::Int(v[start..end].to_vec()),
        Values::Float(v) => Values::Float(v[start..end].to_vec()),
        Values::Str(v) => Values::Str(v[start..end].to_vec()),
    };
    ColumnData::with_validity(values, c.validity.as_ref().map(|v| v[start..end].to_vec()))
}

pub fn gather(c: &ColumnData, idx: &[u32]) -> ColumnData {
    fn g<T: Clone>(v: &[T], idx: &[u32]) -> Vec<T> {
        idx.iter().map(|&i| v[i as usize].clone()).collect()
    }
    let values = match &c.values {
        Values::Bool(v) => Values::Bool(g(v, idx)),
        Values::Int(v) => Values::Int(g(v, idx)),
        Values::Float(v) => Values::Float(g(v, idx)),
        Values::Str(v) => Values::Str(g(v, idx)),
    };
    ColumnData::with_validity(values, c.validity.as_ref().map(|v| g(v, idx)))
}

/// Like [`gather`], with `None` indices producing nulls.
pub fn gather_opt(c: &ColumnData, idx: &[Option<u32>]) -> ColumnData {
    let valid: Vec<bool> = idx.iter().map(|i| i.is_some_and(|i| c.is_valid(i as usize))).collect();
    let fill: Vec<u32> = idx.iter().map(|i| i.unwrap_or(0)).collect();
    if c.is_empty() {
        return null_column(c.data_type(), idx.len());
    }
    let g = gather(c, &fill);
    ColumnData::with_validity(g.values, Some(valid))
}

pub fn concat(parts: Vec<ColumnData>, ty: DataType) -> ColumnData {
    let total: usize = parts.iter().map(ColumnData::len).sum();
    let any_nulls = parts.iter().any(|p| p.validity.is_some());
    let mut validity = any_nulls.then(|| Vec::with_capacity(total));
    let mut values = Values::with_capacity(ty, total);
    for p in parts {
        let p = cast(p, ty);
        if let Some(v) = validity.as_mut() {
            match &p.validity {
                Some(pv) => v.extend_from_slice(pv),
                None => v.extend(std::iter::repeat_n(true, p.len())),
            }
        }
        match (&mut values, p.values) {
            (Values::Bool(a), Values::Bool(b)) => a.extend(b),
            (Values::Int(a), Values::Int(b)) => a.extend(b),
            (Values::Float(a), Values::Float(b)) => a.extend(b),
            (Values::Str(a), Values::Str(b)) => a.extend(b),
            _ => unreachable!("cast aligns types"),
        }
    }
    ColumnData::with_validity(values, validity)
}

/// Combined validity of several inputs (`None` = all valid).
pub fn and_validity(parts: &[Option<&[bool]>], n: usize) -> Option<Vec<bool>> {
    let present: Vec<&[bool]> = parts.iter().flatten().copied().collect();
    match present.len() {
        0 => None,
        1 => Some(present[0].to_vec()),
        _ => Some((0..n).map(|i| present.iter().all(|v| v[i])).collect()),
    }
}

/// Rows where a boolean datum is true (NULL counts as false).
pub fn true_mask(d: &Datum, n: usize) -> Vec<bool> {
    match d {
        Datum::Scalar(Value::Bool(b)) => vec![*b; n],
        Datum::Scalar(_) => vec![false; n],
        Datum::Col(c) => match &c.values {
            Values::Bool(v) => match &c.validity {
                None => v.clone(),
                Some(valid) => v.iter().zip(valid).map(|(a, b)| *a && *b).collect(),
            },
            _ => vec![false; n],
        },
    }
}

pub fn mask_to_indices(mask: &[bool]) -> Vec<u32> {
    mask.iter()
        .enumerate()
        .filter_map(|(i, &m)| m.then_some(i as u32))
        .collect()
}

/// Normalized float bits: -0.0 folds into 0.0 and every NaN into one pattern.
#[inline]
pub fn float_key(f: f64) -> u64 {
    if f == 0.0 {
        0
    } else if f.is_nan() {
        f64::NAN.to_bits()
    } else {
        f.to_bits()
    }
}

pub fn column_from_values(values: &[Value], ty: DataType) -> ColumnData {
    cast(ColumnData::from_values(values, ty), ty)
}
