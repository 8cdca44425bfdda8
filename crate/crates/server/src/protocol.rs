//! JSON wire frames: `{"kind": ..., "id": ..., "payload": {...}}`.
//!
//! Client ids are echoed on every frame produced in response. Results are
//! columnar: `{columns: {name: [values]}, types: {name: type}, rowCount,
//! elapsedMs}`; integers are written as JSON integers, non-finite floats
//! as `null`.

use std::sync::Arc;

use selcube_core::coordinator::{CoordinatorStats, Delivery};
use selcube_core::data::{Column, ColumnData, DataType, QueryResult, Values};
use selcube_core::selection::{ClauseMeta, SelectionConfig};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Number, Value};

use crate::predicate::Predicate;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub kind: String,
    #[serde(default)]
    pub id: Option<u64>,
    #[serde(default)]
    pub payload: Value,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SelectionRef {
    pub name: String,
    #[serde(flatten)]
    pub config: SelectionConfig,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RegisterView {
    pub id: String,
    pub sql: String,
    #[serde(default = "yes")]
    pub filter_stable: bool,
    #[serde(default)]
    pub client_bins: Option<u64>,
    #[serde(default)]
    pub selection: Option<SelectionRef>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ClausePayload {
    pub selection: String,
    pub source: String,
    pub predicate: Predicate,
    #[serde(default)]
    pub views: Vec<String>,
    #[serde(default)]
    pub meta: Option<ClauseMeta>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ClauseRemove {
    pub selection: String,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClientMessage {
    Hello,
    RegisterView(RegisterView),
    UnregisterView { id: String },
    ClauseUpdate(ClausePayload),
    ClauseRemove(ClauseRemove),
    Activate(ClausePayload),
    Prefetch { sql: Vec<String> },
    Stats,
}

/// A message that could not be decoded; `id` is set when the frame itself parsed.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeError {
    pub id: Option<u64>,
    pub message: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct IdOnly {
    id: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SqlList {
    sql: Vec<String>,
}

pub fn decode_client(text: &str) -> Result<(u64, ClientMessage), DecodeError> {
    let frame: Frame = serde_json::from_str(text).map_err(|e| DecodeError {
        id: None,
        message: format!("malformed frame: {e}"),
    })?;
    let id = frame.id;
    let fail = |message: String| DecodeError { id, message };
    let Some(tag) = id else {
        return Err(fail("frame has no correlation id".into()));
    };
    fn body<T: serde::de::DeserializeOwned>(kind: &str, p: Value) -> Result<T, String> {
        serde_json::from_value(p).map_err(|e| format!("bad {kind} payload: {e}"))
    }
    let p = frame.payload;
    let msg = match frame.kind.as_str() {
        "hello" => ClientMessage::Hello,
        "stats" => ClientMessage::Stats,
        "registerView" => ClientMessage::RegisterView(body(&frame.kind, p).map_err(fail)?),
        "unregisterView" => ClientMessage::UnregisterView {
            id: body::<IdOnly>(&frame.kind, p).map_err(fail)?.id,
        },
        "clauseUpdate" => ClientMessage::ClauseUpdate(body(&frame.kind, p).map_err(fail)?),
        "clauseRemove" => ClientMessage::ClauseRemove(body(&frame.kind, p).map_err(fail)?),
        "activate" => ClientMessage::Activate(body(&frame.kind, p).map_err(fail)?),
        "prefetch" => ClientMessage::Prefetch {
            sql: body::<SqlList>(&frame.kind, p).map_err(fail)?.sql,
        },
        other => return Err(fail(format!("unknown message kind {other:?}"))),
    };
    Ok((tag, msg))
}

fn frame(kind: &str, id: Option<u64>, payload: Value) -> String {
    serde_json::to_string(&json!({ "kind": kind, "id": id, "payload": payload })).expect("json")
}

pub fn hello_frame(id: u64, optimize: bool, cache_entries: usize) -> String {
    frame(
        "hello",
        Some(id),
        json!({ "server": "selcube", "protocol": PROTOCOL_VERSION, "optimize": optimize, "cacheEntries": cache_entries }),
    )
}

pub fn ack_frame(id: u64) -> String {
    frame("ack", Some(id), json!({}))
}

pub fn error_frame(id: Option<u64>, view: Option<&str>, message: &str) -> String {
    frame("error", id, json!({ "view": view, "message": message }))
}

pub fn stats_frame(id: u64, stats: &CoordinatorStats) -> String {
    frame("stats", Some(id), serde_json::to_value(stats).expect("json"))
}

/// Result frame for a delivery, or an error frame when the query failed.
/// With `stable`, timing fields are written as zero.
pub fn delivery_frame(id: u64, d: &Delivery, stable: bool) -> String {
    match &d.result {
        Ok(r) => {
            let mut result = encode_result(r);
            let elapsed = if stable { 0.0 } else { d.elapsed_ms };
            if stable {
                result["elapsedMs"] = json!(0.0);
            }
            frame(
                "result",
                Some(id),
                json!({ "view": d.view, "sql": d.sql, "path": d.path, "elapsedMs": elapsed, "result": result }),
            )
        }
        Err(e) => error_frame(Some(id), Some(&d.view), e),
    }
}

fn type_name(t: DataType) -> &'static str {
    match t {
        DataType::Bool => "boolean",
        DataType::Int => "integer",
        DataType::Float => "double",
        DataType::Str => "string",
    }
}

fn parse_type(s: &str) -> Option<DataType> {
    Some(match s {
        "boolean" => DataType::Bool,
        "integer" => DataType::Int,
        "double" => DataType::Float,
        "string" => DataType::Str,
        _ => return None,
    })
}

fn float(v: f64) -> Value {
    Number::from_f64(v).map_or(Value::Null, Value::Number)
}

pub fn encode_result(r: &QueryResult) -> Value {
    let mut columns = Map::new();
    let mut types = Map::new();
    for c in &r.columns {
        let d = &c.data;
        let valid = |i: usize| d.is_valid(i);
        let vals: Vec<Value> = match &d.values {
            Values::Bool(v) => v.iter().enumerate().map(|(i, x)| if valid(i) { json!(x) } else { Value::Null }).collect(),
            Values::Int(v) => v.iter().enumerate().map(|(i, x)| if valid(i) { json!(x) } else { Value::Null }).collect(),
            Values::Float(v) => v.iter().enumerate().map(|(i, x)| if valid(i) { float(*x) } else { Value::Null }).collect(),
            Values::Str(v) => v
                .iter()
                .enumerate()
                .map(|(i, x)| if valid(i) { json!(x.as_ref()) } else { Value::Null })
                .collect(),
        };
        columns.insert(c.name.clone(), Value::Array(vals));
        types.insert(c.name.clone(), json!(type_name(d.data_type())));
    }
    json!({ "columns": columns, "types": types, "rowCount": r.row_count, "elapsedMs": float(r.elapsed_ms) })
}

/// Inverse of [`encode_result`]. Columns without a `types` entry are
/// read as doubles.
pub fn decode_result(v: &Value) -> Result<QueryResult, String> {
    let columns = v
        .get("columns")
        .and_then(Value::as_object)
        .ok_or("result has no columns object")?;
    let types = v.get("types").and_then(Value::as_object);
    let mut out = Vec::with_capacity(columns.len());
    for (name, vals) in columns {
        let vals = vals.as_array().ok_or_else(|| format!("column {name} is not an array"))?;
        let ty = match types.and_then(|t| t.get(name)).and_then(Value::as_str) {
            Some(s) => parse_type(s).ok_or_else(|| format!("unknown type {s}"))?,
            None => DataType::Float,
        };
        let validity: Vec<bool> = vals.iter().map(|x| !x.is_null()).collect();
        let bad = || format!("column {name} holds a value that is not {}", type_name(ty));
        let values = match ty {
            DataType::Bool => Values::Bool(
                vals.iter()
                    .map(|x| if x.is_null() { Some(false) } else { x.as_bool() })
                    .collect::<Option<_>>()
                    .ok_or_else(bad)?,
            ),
            DataType::Int => Values::Int(
                vals.iter()
                    .map(|x| if x.is_null() { Some(0) } else { x.as_i64() })
                    .collect::<Option<_>>()
                    .ok_or_else(bad)?,
            ),
            DataType::Float => Values::Float(
                vals.iter()
                    .map(|x| if x.is_null() { Some(0.0) } else { x.as_f64() })
                    .collect::<Option<_>>()
                    .ok_or_else(bad)?,
            ),
            DataType::Str => Values::Str(
                vals.iter()
                    .map(|x| if x.is_null() { Some(Arc::from("")) } else { x.as_str().map(Arc::from) })
                    .collect::<Option<_>>()
                    .ok_or_else(bad)?,
            ),
        };
        out.push(Column::new(name.clone(), ColumnData::with_validity(values, Some(validity))));
    }
    let mut r = QueryResult::new(out);
    if let Some(n) = v.get("rowCount").and_then(Value::as_u64) {
        if r.columns.is_empty() {
            r.row_count = n as usize;
        } else if n as usize != r.row_count {
            return Err(format!("rowCount {n} does not match column length {}", r.row_count));
        }
    }
    r.elapsed_ms = v.get("elapsedMs").and_then(Value::as_f64).unwrap_or(0.0);
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use selcube_core::coordinator::QueryPath;

    fn histogram() -> QueryResult {
        QueryResult::new(vec![Column::int("x", vec![0, 10, 20]), Column::float("y", vec![3.0, 1.5, 7.0])])
    }

    #[test]
    fn empty_result_keeps_columns() {
        let r = QueryResult::new(vec![Column::int("x", vec![]), Column::float("y", vec![])]);
        let v = encode_result(&r);
        assert_eq!(v["columns"]["x"], json!([]));
        assert_eq!(v["columns"]["y"], json!([]));
        assert_eq!(v["rowCount"], json!(0));
    }

    #[test]
    fn histogram_arrays_have_row_length() {
        let v = encode_result(&histogram());
        assert_eq!(v["columns"]["x"], json!([0, 10, 20]));
        assert_eq!(v["columns"]["y"], json!([3.0, 1.5, 7.0]));
        assert_eq!(v["types"]["x"], json!("integer"));
        assert_eq!(v["rowCount"], json!(3));
    }

    #[test]
    fn nulls_and_non_finite_values_become_null() {
        let d = ColumnData::with_validity(Values::Float(vec![1.0, f64::NAN, 2.0]), Some(vec![true, true, false]));
        let v = encode_result(&QueryResult::new(vec![Column::new("v", d)]));
        assert_eq!(v["columns"]["v"], json!([1.0, null, null]));
    }

    #[test]
    fn column_order_is_kept() {
        let r = QueryResult::new(vec![Column::int("z", vec![1]), Column::int("a", vec![2])]);
        let text = serde_json::to_string(&encode_result(&r)).unwrap();
        assert!(text.find("\"z\"").unwrap() < text.find("\"a\"").unwrap());
        assert_eq!(decode_result(&encode_result(&r)).unwrap().column_names(), ["z", "a"]);
    }

    #[test]
    fn decode_rejects_mismatched_types() {
        let v = json!({ "columns": { "x": ["a"] }, "types": { "x": "integer" }, "rowCount": 1 });
        assert!(decode_result(&v).is_err());
        let v = json!({ "columns": { "x": [1] }, "types": { "x": "integer" }, "rowCount": 2 });
        assert!(decode_result(&v).is_err());
    }

    #[test]
    fn stable_frames_drop_timings() {
        let mut r = histogram();
        r.elapsed_ms = 4.2;
        let d = Delivery {
            view: "v".into(),
            sql: "SELECT 1".into(),
            path: QueryPath::Optimized,
            elapsed_ms: 3.3,
            result: Ok(Arc::new(r)),
        };
        let f: Value = serde_json::from_str(&delivery_frame(7, &d, true)).unwrap();
        assert_eq!(f["kind"], "result");
        assert_eq!(f["id"], 7);
        assert_eq!(f["payload"]["path"], "optimized");
        assert_eq!(f["payload"]["elapsedMs"], json!(0.0));
        assert_eq!(f["payload"]["result"]["elapsedMs"], json!(0.0));
        let f: Value = serde_json::from_str(&delivery_frame(7, &d, false)).unwrap();
        assert_eq!(f["payload"]["elapsedMs"], json!(3.3));
    }

    #[test]
    fn failed_delivery_is_an_error_frame() {
        let d = Delivery {
            view: "v".into(),
            sql: "SELECT".into(),
            path: QueryPath::Direct,
            elapsed_ms: 0.0,
            result: Err("boom".into()),
        };
        let f: Value = serde_json::from_str(&delivery_frame(1, &d, false)).unwrap();
        assert_eq!(f["kind"], "error");
        assert_eq!(f["payload"], json!({ "view": "v", "message": "boom" }));
    }

    #[test]
    fn client_messages_decode() {
        let (id, m) = decode_client(
            r#"{"kind":"registerView","id":3,"payload":{"id":"delay","sql":"SELECT 1",
               "selection":{"name":"brush","resolver":"intersect","cross":true}}}"#,
        )
        .unwrap();
        assert_eq!(id, 3);
        let ClientMessage::RegisterView(rv) = m else { panic!() };
        assert!(rv.filter_stable);
        let s = rv.selection.unwrap();
        assert_eq!(s.name, "brush");
        assert_eq!(s.config, SelectionConfig::crossfilter());

        let (_, m) = decode_client(
            r#"{"kind":"clauseUpdate","id":4,"payload":{"selection":"brush","source":"delay",
               "predicate":{"op":"between","field":"delay","range":[0,30]},"views":["delay"],
               "meta":{"type":"interval","pixelSize":1,"bin":"FLOOR",
               "scales":[{"type":"linear","domain":[-60,180],"range":[0,540]}]}}}"#,
        )
        .unwrap();
        let ClientMessage::ClauseUpdate(c) = m else { panic!() };
        assert_eq!(c.views, ["delay"]);
        assert_eq!(c.meta.unwrap().scales.len(), 1);
    }

    #[test]
    fn malformed_messages_keep_the_id_when_possible() {
        assert_eq!(decode_client("{nope").unwrap_err().id, None);
        let e = decode_client(r#"{"kind":"dance","id":9,"payload":{}}"#).unwrap_err();
        assert_eq!(e.id, Some(9));
        let e = decode_client(r#"{"kind":"clauseRemove","id":5,"payload":{"selection":"s"}}"#).unwrap_err();
        assert_eq!(e.id, Some(5));
        assert!(e.message.contains("source"), "{}", e.message);
        assert_eq!(decode_client(r#"{"kind":"hello","payload":{}}"#).unwrap_err().id, None);
    }

    fn column(n: usize) -> impl Strategy<Value = ColumnData> {
        (0u8..4, prop::collection::vec(any::<(bool, i64, f64)>(), n)).prop_map(|(ty, rows)| {
            let valid: Vec<bool> = rows.iter().map(|r| r.0).collect();
            let values = match ty {
                0 => Values::Bool(rows.iter().map(|r| r.1 % 2 == 0).collect()),
                1 => Values::Int(rows.iter().map(|r| r.1).collect()),
                2 => Values::Float(rows.iter().map(|r| if r.2.is_finite() { r.2 } else { 0.5 }).collect()),
                _ => Values::Str(rows.iter().map(|r| Arc::from(format!("s{}", r.1 % 7))).collect()),
            };
            ColumnData::with_validity(values, Some(valid))
        })
    }

    proptest! {
        #[test]
        fn decode_inverts_encode(cols in (0usize..20).prop_flat_map(|n| prop::collection::vec(column(n), 1..4))) {
            let r = QueryResult::new(
                cols.into_iter().enumerate().map(|(i, d)| Column::new(format!("c{i}"), d)).collect(),
            );
            let text = serde_json::to_string(&encode_result(&r)).unwrap();
            let back = decode_result(&serde_json::from_str(&text).unwrap()).unwrap();
            prop_assert_eq!(back.column_names(), r.column_names());
            prop_assert_eq!(back.row_count, r.row_count);
            for (a, b) in back.columns.iter().zip(&r.columns) {
                prop_assert_eq!(a.data.data_type(), b.data.data_type());
            }
            prop_assert_eq!(back.rows(), r.rows());
        }
    }
}
