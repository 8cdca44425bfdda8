//! Columnar values shared by the engine, the coordinator and the wire layer.

use std::cmp::Ordering;
use std::fmt;
use std::sync::Arc;

/// A single scalar value.
#[derive(Debug, Clone)]
pub enum Value {
    Null,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(Arc<str>),
}

impl Value {
    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(v) => Some(*v as f64),
            Value::Float(v) => Some(*v),
            Value::Bool(b) => Some(*b as i64 as f64),
            _ => None,
        }
    }

    pub fn data_type(&self) -> Option<DataType> {
        match self {
            Value::Null => None,
            Value::Bool(_) => Some(DataType::Bool),
            Value::Int(_) => Some(DataType::Int),
            Value::Float(_) => Some(DataType::Float),
            Value::Str(_) => Some(DataType::Str),
        }
    }

    /// Total order used for sorting: nulls first, then booleans, numbers
    /// (compared numerically across int/float), then strings.
    pub fn total_cmp(&self, other: &Value) -> Ordering {
        fn rank(v: &Value) -> u8 {
            match v {
                Value::Null => 0,
                Value::Bool(_) => 1,
                Value::Int(_) | Value::Float(_) => 2,
                Value::Str(_) => 3,
            }
        }
        match (self, other) {
            (Value::Bool(a), Value::Bool(b)) => a.cmp(b),
            (Value::Int(a), Value::Int(b)) => a.cmp(b),
            (Value::Str(a), Value::Str(b)) => a.cmp(b),
            (a, b) if rank(a) == 2 && rank(b) == 2 => {
                a.as_f64().unwrap().total_cmp(&b.as_f64().unwrap())
            }
            (a, b) => rank(a).cmp(&rank(b)),
        }
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Value::Null, Value::Null) => true,
            (Value::Bool(a), Value::Bool(b)) => a == b,
            (Value::Int(a), Value::Int(b)) => a == b,
            (Value::Float(a), Value::Float(b)) => a.to_bits() == b.to_bits() || a == b,
            (Value::Str(a), Value::Str(b)) => a == b,
            _ => false,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => f.write_str("NULL"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(v) => write!(f, "{v}"),
            Value::Float(v) => write!(f, "{v}"),
            Value::Str(s) => write!(f, "{s}"),
        }
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Float(v)
    }
}

impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::Bool(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Str(Arc::from(v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DataType {
    Bool,
    Int,
    Float,
    Str,
}

impl DataType {
    pub fn name(self) -> &'static str {
        match self {
            DataType::Bool => "BOOLEAN",
            DataType::Int => "BIGINT",
            DataType::Float => "DOUBLE",
            DataType::Str => "VARCHAR",
        }
    }
}

/// Typed value buffer for one column.
#[derive(Debug, Clone, PartialEq)]
pub enum Values {
    Bool(Vec<bool>),
    Int(Vec<i64>),
    Float(Vec<f64>),
    Str(Vec<Arc<str>>),
}

impl Values {
    pub fn len(&self) -> usize {
        match self {
            Values::Bool(v) => v.len(),
            Values::Int(v) => v.len(),
            Values::Float(v) => v.len(),
            Values::Str(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn data_type(&self) -> DataType {
        match self {
            Values::Bool(_) => DataType::Bool,
            Values::Int(_) => DataType::Int,
            Values::Float(_) => DataType::Float,
            Values::Str(_) => DataType::Str,
        }
    }

    pub fn empty(ty: DataType) -> Values {
        Values::with_capacity(ty, 0)
    }

    pub fn with_capacity(ty: DataType, cap: usize) -> Values {
        match ty {
            DataType::Bool => Values::Bool(Vec::with_capacity(cap)),
            DataType::Int => Values::Int(Vec::with_capacity(cap)),
            DataType::Float => Values::Float(Vec::with_capacity(cap)),
            DataType::Str => Values::Str(Vec::with_capacity(cap)),
        }
    }
}

/// A column buffer with an optional validity mask (`None` means no nulls).
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnData {
    pub values: Values,
    pub validity: Option<Vec<bool>>,
}

impl ColumnData {
    pub fn new(values: Values) -> Self {
        ColumnData {
            values,
            validity: None,
        }
    }

    pub fn with_validity(values: Values, validity: Option<Vec<bool>>) -> Self {
        let validity = validity.filter(|v| v.iter().any(|ok| !ok));
        ColumnData { values, validity }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn data_type(&self) -> DataType {
        self.values.data_type()
    }

    #[inline]
    pub fn is_valid(&self, row: usize) -> bool {
        self.validity.as_ref().is_none_or(|v| v[row])
    }

    pub fn null_count(&self) -> usize {
        self.validity
            .as_ref()
            .map_or(0, |v| v.iter().filter(|ok| !**ok).count())
    }

    pub fn get(&self, row: usize) -> Value {
        if !self.is_valid(row) {
            return Value::Null;
        }
        match &self.values {
            Values::Bool(v) => Value::Bool(v[row]),
            Values::Int(v) => Value::Int(v[row]),
            Values::Float(v) => Value::Float(v[row]),
            Values::Str(v) => Value::Str(v[row].clone()),
        }
    }

    /// Builds a column from scalar values. The type is taken from the first
    /// non-null value (ints widen to float when mixed); all-null columns are
    /// typed as `fallback`.
    pub fn from_values(values: &[Value], fallback: DataType) -> ColumnData {
        let mut ty: Option<DataType> = None;
        for v in values {
            match (ty, v.data_type()) {
                (_, None) => {}
                (None, Some(t)) => ty = Some(t),
                (Some(DataType::Int), Some(DataType::Float)) => ty = Some(DataType::Float),
                _ => {}
            }
        }
        let ty = ty.unwrap_or(fallback);
        let mut validity = Vec::with_capacity(values.len());
        let data = match ty {
            DataType::Bool => Values::Bool(
                values
                    .iter()
                    .map(|v| {
                        validity.push(!v.is_null());
                        matches!(v, Value::Bool(true))
                    })
                    .collect(),
            ),
            DataType::Int => Values::Int(
                values
                    .iter()
                    .map(|v| {
                        validity.push(!v.is_null());
                        match v {
                            Value::Int(i) => *i,
                            Value::Bool(b) => *b as i64,
                            _ => 0,
                        }
                    })
                    .collect(),
            ),
            DataType::Float => Values::Float(
                values
                    .iter()
                    .map(|v| {
                        validity.push(!v.is_null());
                        v.as_f64().unwrap_or(0.0)
                    })
                    .collect(),
            ),
            DataType::Str => Values::Str(
                values
                    .iter()
                    .map(|v| {
                        validity.push(!v.is_null());
                        match v {
                            Value::Str(s) => s.clone(),
                            Value::Null => Arc::from(""),
                            other => Arc::from(other.to_string()),
                        }
                    })
                    .collect(),
            ),
        };
        ColumnData::with_validity(data, Some(validity))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub data: ColumnData,
}

impl Column {
    pub fn new(name: impl Into<String>, data: ColumnData) -> Self {
        Column {
            name: name.into(),
            data,
        }
    }

    pub fn float(name: impl Into<String>, values: Vec<f64>) -> Self {
        Column::new(name, ColumnData::new(Values::Float(values)))
    }

    pub fn int(name: impl Into<String>, values: Vec<i64>) -> Self {
        Column::new(name, ColumnData::new(Values::Int(values)))
    }

    pub fn string(name: impl Into<String>, values: Vec<Arc<str>>) -> Self {
        Column::new(name, ColumnData::new(Values::Str(values)))
    }

    pub fn boolean(name: impl Into<String>, values: Vec<bool>) -> Self {
        Column::new(name, ColumnData::new(Values::Bool(values)))
    }
}

/// Columnar query output.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct QueryResult {
    pub columns: Vec<Column>,
    pub row_count: usize,
    pub elapsed_ms: f64,
}

impl QueryResult {
    /// Panics if column lengths differ.
    pub fn new(columns: Vec<Column>) -> Self {
        let row_count = columns.first().map_or(0, |c| c.data.len());
        assert!(
            columns.iter().all(|c| c.data.len() == row_count),
            "column arities differ"
        );
        QueryResult {
            columns,
            row_count,
            elapsed_ms: 0.0,
        }
    }

    pub fn empty() -> Self {
        QueryResult::default()
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn value(&self, row: usize, col: usize) -> Value {
        self.columns[col].data.get(row)
    }

    pub fn row(&self, row: usize) -> Vec<Value> {
        self.columns.iter().map(|c| c.data.get(row)).collect()
    }

    pub fn rows(&self) -> Vec<Vec<Value>> {
        (0..self.row_count).map(|r| self.row(r)).collect()
    }

    /// Rows sorted by the total value order, for multiset comparisons.
    pub fn sorted_rows(&self) -> Vec<Vec<Value>> {
        let mut rows = self.rows();
        rows.sort_by(|a, b| compare_rows(a, b));
        rows
    }
}

fn compare_rows(a: &[Value], b: &[Value]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

/// Relative closeness with a tiny absolute floor, used for floating aggregates.
pub fn approx_eq(a: f64, b: f64, rel_tol: f64) -> bool {
    if a.is_nan() || b.is_nan() {
        return a.is_nan() && b.is_nan();
    }
    if a == b {
        return true;
    }
    // values below 1e-9 in magnitude are compared on an absolute scale
    let scale = a.abs().max(b.abs()).max(1e-9);
    (a - b).abs() <= rel_tol * scale
}

/// Compares two results as multisets of rows.
///
/// Columns listed in `key_columns` (by position) must match exactly and are
/// used to pair rows; every other numeric column is compared with
/// `rel_tol`. Integer and float encodings of the same number compare equal.
pub fn compare_results(
    expected: &QueryResult,
    actual: &QueryResult,
    key_columns: &[usize],
    rel_tol: f64,
) -> Result<(), String> {
    if expected.columns.len() != actual.columns.len() {
        return Err(format!(
            "column count differs: {:?} vs {:?}",
            expected.column_names(),
            actual.column_names()
        ));
    }
    if expected.row_count != actual.row_count {
        return Err(format!(
            "row count differs: {} vs {}",
            expected.row_count, actual.row_count
        ));
    }
    let key_of = |row: &[Value]| -> Vec<Value> { key_columns.iter().map(|&i| row[i].clone()).collect() };
    let sort = |r: &QueryResult| {
        let mut rows = r.rows();
        rows.sort_by(|a, b| compare_rows(&key_of(a), &key_of(b)).then_with(|| compare_rows(a, b)));
        rows
    };
    let (left, right) = (sort(expected), sort(actual));
    for (i, (l, r)) in left.iter().zip(&right).enumerate() {
        for (c, (a, b)) in l.iter().zip(r).enumerate() {
            let ok = match (a, b) {
                (Value::Null, Value::Null) => true,
                (Value::Str(x), Value::Str(y)) => x == y,
                (Value::Bool(x), Value::Bool(y)) => x == y,
                (x, y) if key_columns.contains(&c) => x.total_cmp(y) == Ordering::Equal,
                (Value::Int(x), Value::Int(y)) => x == y,
                (x, y) => match (x.as_f64(), y.as_f64()) {
                    (Some(p), Some(q)) => approx_eq(p, q, rel_tol),
                    _ => false,
                },
            };
            if !ok {
                return Err(format!(
                    "row {i} column {} differs: {a:?} vs {b:?}",
                    expected.columns[c].name
                ));
            }
        }
    }
    Ok(())
}
