//! In-memory columnar tables, morsel zone maps and on-disk persistence.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use selcube_core::data::{Column, ColumnData, DataType, QueryResult, Values};

use crate::error::{EngineError, Result};
use crate::expr::{Field, Schema};

/// Rows per morsel, the unit of zone maps and pruning.
pub const MORSEL_ROWS: usize = 16_384;

const MAGIC: &[u8; 8] = b"SELTBL01";

/// Min/max summary of one morsel of a numeric column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Zone {
    pub min: f64,
    pub max: f64,
    pub nulls: usize,
    pub rows: usize,
}

#[derive(Debug)]
pub struct Table {
    pub names: Vec<String>,
    pub columns: Vec<ColumnData>,
    pub rows: usize,
    /// Per column, per morsel; empty for non-numeric columns.
    zones: Vec<Vec<Zone>>,
}

impl Table {
    pub fn new(names: Vec<String>, columns: Vec<ColumnData>) -> Result<Table> {
        if names.len() != columns.len() {
            return Err(EngineError::Catalog("column name count mismatch".into()));
        }
        let rows = columns.first().map(ColumnData::len).unwrap_or(0);
        if columns.iter().any(|c| c.len() != rows) {
            return Err(EngineError::Catalog("columns have different lengths".into()));
        }
        let zones = columns.iter().map(zones_of).collect();
        Ok(Table {
            names,
            columns,
            rows,
            zones,
        })
    }

    /// A table of `rows` rows and no columns.
    pub fn unit(rows: usize) -> Table {
        Table {
            names: vec![],
            columns: vec![],
            rows,
            zones: vec![],
        }
    }

    pub fn from_result(r: QueryResult) -> Result<Table> {
        let rows = r.row_count;
        let (names, columns): (Vec<_>, Vec<_>) = r.columns.into_iter().map(|c| (c.name, c.data)).unzip();
        if names.is_empty() {
            return Ok(Table::unit(rows));
        }
        Table::new(names, columns)
    }

    pub fn to_result(&self) -> QueryResult {
        QueryResult::new(
            self.names
                .iter()
                .zip(&self.columns)
                .map(|(n, c)| Column::new(n.clone(), c.clone()))
                .collect(),
        )
    }

    pub fn schema(&self, qualifier: Option<&str>) -> Schema {
        Schema {
            fields: self
                .names
                .iter()
                .zip(&self.columns)
                .map(|(n, c)| Field {
                    qualifier: qualifier.map(str::to_string),
                    name: n.clone(),
                    ty: c.data_type(),
                })
                .collect(),
        }
    }

    pub fn zone(&self, col: usize, morsel: usize) -> Option<&Zone> {
        self.zones.get(col).and_then(|z| z.get(morsel))
    }

    pub fn morsels(&self) -> usize {
        self.rows.div_ceil(MORSEL_ROWS)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        {
            let mut w = BufWriter::new(File::create(&tmp)?);
            w.write_all(MAGIC)?;
            put_u64(&mut w, self.rows as u64)?;
            put_u64(&mut w, self.columns.len() as u64)?;
            for (name, c) in self.names.iter().zip(&self.columns) {
                put_bytes(&mut w, name.as_bytes())?;
                write_column(&mut w, c)?;
            }
            w.flush()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Table> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(EngineError::Io(format!("{} is not a table file", path.display())));
        }
        let rows = get_u64(&mut r)? as usize;
        let ncols = get_u64(&mut r)? as usize;
        let mut names = Vec::with_capacity(ncols);
        let mut columns = Vec::with_capacity(ncols);
        for _ in 0..ncols {
            names.push(String::from_utf8(get_bytes(&mut r)?).map_err(|e| EngineError::Io(e.to_string()))?);
            columns.push(read_column(&mut r, rows)?);
        }
        if ncols == 0 {
            return Ok(Table::unit(rows));
        }
        Table::new(names, columns)
    }
}

fn zones_of(c: &ColumnData) -> Vec<Zone> {
    let n = c.len();
    let summarize = |get: &dyn Fn(usize) -> f64| -> Vec<Zone> {
        (0..n.div_ceil(MORSEL_ROWS))
            .map(|m| {
                let (s, e) = (m * MORSEL_ROWS, ((m + 1) * MORSEL_ROWS).min(n));
                let mut z = Zone {
                    min: f64::INFINITY,
                    max: f64::NEG_INFINITY,
                    nulls: 0,
                    rows: e - s,
                };
                for i in s..e {
                    if !c.is_valid(i) {
                        z.nulls += 1;
                        continue;
                    }
                    let v = get(i);
                    if v.is_nan() {
                        // NaN compares unordered; disable pruning for this morsel
                        z.min = f64::NEG_INFINITY;
                        z.max = f64::INFINITY;
                    } else {
                        z.min = z.min.min(v);
                        z.max = z.max.max(v);
                    }
                }
                z
            })
            .collect()
    };
    match &c.values {
        Values::Int(v) => summarize(&|i| v[i] as f64),
        Values::Float(v) => summarize(&|i| v[i]),
        _ => Vec::new(),
    }
}

fn put_u64(w: &mut impl Write, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn put_bytes(w: &mut impl Write, b: &[u8]) -> Result<()> {
    put_u64(w, b.len() as u64)?;
    w.write_all(b)?;
    Ok(())
}

fn get_bytes(r: &mut impl Read) -> Result<Vec<u8>> {
    let n = get_u64(r)? as usize;
    let mut b = vec![0u8; n];
    r.read_exact(&mut b)?;
    Ok(b)
}

fn write_column(w: &mut impl Write, c: &ColumnData) -> Result<()> {
    let tag = match c.data_type() {
        DataType::Bool => 0u8,
        DataType::Int => 1,
        DataType::Float => 2,
        DataType::Str => 3,
    };
    w.write_all(&[tag, c.validity.is_some() as u8])?;
    if let Some(v) = &c.validity {
        let bytes: Vec<u8> = v.iter().map(|b| *b as u8).collect();
        w.write_all(&bytes)?;
    }
    match &c.values {
        Values::Bool(v) => {
            let bytes: Vec<u8> = v.iter().map(|b| *b as u8).collect();
            w.write_all(&bytes)?;
        }
        Values::Int(v) => {
            for x in v {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Values::Float(v) => {
            for x in v {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Values::Str(v) => {
            for s in v {
                put_bytes(w, s.as_bytes())?;
            }
        }
    }
    Ok(())
}

fn read_column(r: &mut impl Read, rows: usize) -> Result<ColumnData> {
    let mut head = [0u8; 2];
    r.read_exact(&mut head)?;
    let validity = if head[1] == 1 {
        let mut b = vec![0u8; rows];
        r.read_exact(&mut b)?;
        Some(b.into_iter().map(|x| x != 0).collect())
    } else {
        None
    };
    let values = match head[0] {
        0 => {
            let mut b = vec![0u8; rows];
            r.read_exact(&mut b)?;
            Values::Bool(b.into_iter().map(|x| x != 0).collect())
        }
        1 | 2 => {
            let mut b = vec![0u8; rows * 8];
            r.read_exact(&mut b)?;
            let words = b.chunks_exact(8).map(|c| <[u8; 8]>::try_from(c).expect("8 bytes"));
            if head[0] == 1 {
                Values::Int(words.map(i64::from_le_bytes).collect())
            } else {
                Values::Float(words.map(f64::from_le_bytes).collect())
            }
        }
        3 => {
            let mut v = Vec::with_capacity(rows);
            for _ in 0..rows {
                let s = String::from_utf8(get_bytes(r)?).map_err(|e| EngineError::Io(e.to_string()))?;
                v.push(Arc::from(s));
            }
            Values::Str(v)
        }
        t => return Err(EngineError::Io(format!("unknown column tag {t}"))),
    };
    Ok(ColumnData::with_validity(values, validity))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_all_types_with_nulls() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("main.t.tbl");
        let t = Table::new(
            vec!["b".into(), "i".into(), "f".into(), "s".into()],
            vec![
                ColumnData::new(Values::Bool(vec![true, false, true])),
                ColumnData::with_validity(Values::Int(vec![1, 0, -3]), Some(vec![true, false, true])),
                ColumnData::new(Values::Float(vec![0.5, f64::NAN, -2.0])),
                ColumnData::new(Values::Str(vec![Arc::from("a"), Arc::from(""), Arc::from("é")])),
            ],
        )
        .unwrap();
        t.save(&path).unwrap();
        let u = Table::load(&path).unwrap();
        assert_eq!(u.names, t.names);
        assert_eq!(u.rows, 3);
        for (a, b) in t.columns.iter().zip(&u.columns) {
            for i in 0..3 {
                assert!(a.get(i).total_cmp(&b.get(i)).is_eq());
            }
        }
    }

    #[test]
    fn zones_cover_each_morsel() {
        let n = MORSEL_ROWS * 2 + 10;
        let t = Table::new(
            vec!["x".into()],
            vec![ColumnData::new(Values::Int((0..n as i64).collect()))],
        )
        .unwrap();
        assert_eq!(t.morsels(), 3);
        let z = t.zone(0, 1).unwrap();
        assert_eq!((z.min, z.max), (MORSEL_ROWS as f64, (2 * MORSEL_ROWS - 1) as f64));
        assert_eq!(t.zone(0, 2).unwrap().rows, 10);
    }
}
