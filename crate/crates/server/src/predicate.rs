//! Clause predicates as a restricted JSON tree, compiled to expressions.
//!
//! Field names must be bare identifiers and values JSON scalars, so no
//! client text reaches the SQL printer except as a quoted literal or a
//! validated column name.

use selcube_core::selection::MatchMethod;
use selcube_core::sql::{BinaryOp, Expr};
use serde::Deserialize;
use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "op", rename_all = "camelCase", deny_unknown_fields)]
pub enum Predicate {
    Between { field: String, range: [Value; 2] },
    And { args: Vec<Predicate> },
    Or { args: Vec<Predicate> },
    Not { arg: Box<Predicate> },
    Eq { field: String, value: Value },
    Neq { field: String, value: Value },
    Lt { field: String, value: Value },
    Lte { field: String, value: Value },
    Gt { field: String, value: Value },
    Gte { field: String, value: Value },
    In { field: String, values: Vec<Value> },
    IsNull { field: String },
    Match { field: String, value: String, method: MatchMethod },
}

fn field(name: &str) -> Result<Expr, String> {
    let mut chars = name.chars();
    let ok = chars.next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_');
    if ok {
        Ok(Expr::col(name))
    } else {
        Err(format!("invalid field name {name:?}"))
    }
}

fn literal(v: &Value) -> Result<Expr, String> {
    match v {
        Value::Null => Ok(Expr::null()),
        Value::Bool(b) => Ok(Expr::boolean(*b)),
        Value::Number(n) => match n.as_i64() {
            Some(i) => Ok(Expr::int(i)),
            None => n.as_f64().map(Expr::float).ok_or_else(|| format!("number {n} out of range")),
        },
        Value::String(s) => Ok(Expr::string(s)),
        other => Err(format!("value {other} is not a scalar")),
    }
}

fn compare(op: BinaryOp, f: &str, v: &Value) -> Result<Expr, String> {
    Ok(Expr::binary(op, field(f)?, literal(v)?))
}

impl Predicate {
    pub fn compile(&self) -> Result<Expr, String> {
        Ok(match self {
            Predicate::Between { field: f, range } => field(f)?.between(literal(&range[0])?, literal(&range[1])?),
            Predicate::And { args } => {
                let parts = args.iter().map(Predicate::compile).collect::<Result<Vec<_>, _>>()?;
                Expr::conjunction(parts).unwrap_or(Expr::boolean(true))
            }
            Predicate::Or { args } => {
                let parts = args.iter().map(Predicate::compile).collect::<Result<Vec<_>, _>>()?;
                Expr::disjunction(parts).unwrap_or(Expr::boolean(false))
            }
            Predicate::Not { arg } => arg.compile()?.not(),
            Predicate::Eq { field: f, value } => compare(BinaryOp::Eq, f, value)?,
            Predicate::Neq { field: f, value } => compare(BinaryOp::NotEq, f, value)?,
            Predicate::Lt { field: f, value } => compare(BinaryOp::Lt, f, value)?,
            Predicate::Lte { field: f, value } => compare(BinaryOp::LtEq, f, value)?,
            Predicate::Gt { field: f, value } => compare(BinaryOp::Gt, f, value)?,
            Predicate::Gte { field: f, value } => compare(BinaryOp::GtEq, f, value)?,
            Predicate::In { field: f, values } => {
                if values.is_empty() {
                    return Err("in needs at least one value".into());
                }
                field(f)?.in_list(values.iter().map(literal).collect::<Result<_, _>>()?)
            }
            Predicate::IsNull { field: f } => field(f)?.is_null(),
            Predicate::Match { field: f, value, method } => {
                let pattern = match method {
                    MatchMethod::Prefix => format!("{value}%"),
                    MatchMethod::Suffix => format!("%{value}"),
                    MatchMethod::Contains => format!("%{value}%"),
                    MatchMethod::Regexp => return Err("regexp matching is not supported".into()),
                };
                Expr::Like {
                    expr: Box::new(field(f)?),
                    pattern: Box::new(Expr::string(&pattern)),
                    negated: false,
                    case_insensitive: false,
                }
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use selcube_core::sql::expr_to_sql;

    fn sql(json: &str) -> Result<String, String> {
        let p: Predicate = serde_json::from_str(json).map_err(|e| e.to_string())?;
        p.compile().map(|e| expr_to_sql(&e))
    }

    #[test]
    fn interval_compiles_to_between() {
        assert_eq!(
            sql(r#"{"op":"between","field":"delay","range":[-10.5,30]}"#).unwrap(),
            "delay BETWEEN -10.5 AND 30"
        );
    }

    #[test]
    fn boolean_structure() {
        let s = sql(
            r#"{"op":"and","args":[{"op":"gte","field":"a","value":1},
                {"op":"not","arg":{"op":"in","field":"b","values":["x","y"]}},
                {"op":"or","args":[{"op":"isNull","field":"c"},{"op":"neq","field":"c","value":true}]}]}"#,
        )
        .unwrap();
        assert!(s.contains("a >= 1"), "{s}");
        assert!(s.contains("b IN ('x', 'y')"), "{s}");
        assert!(s.contains("c IS NULL"), "{s}");
        assert!(s.contains("NOT"), "{s}");
    }

    #[test]
    fn match_becomes_like() {
        assert_eq!(
            sql(r#"{"op":"match","field":"name","value":"Ka","method":"prefix"}"#).unwrap(),
            "name LIKE 'Ka%'"
        );
        assert!(sql(r#"{"op":"match","field":"name","value":"K","method":"regexp"}"#).is_err());
    }

    #[test]
    fn hostile_input_is_rejected_or_quoted() {
        assert!(sql(r#"{"op":"eq","field":"x; DROP TABLE t","value":1}"#).is_err());
        assert!(sql(r#"{"op":"eq","field":"x","value":[1]}"#).is_err());
        assert!(sql(r#"{"op":"raw","sql":"1=1"}"#).is_err());
        assert!(sql(r#"{"op":"eq","field":"x","value":1,"extra":2}"#).is_err());
        let s = sql(r#"{"op":"eq","field":"x","value":"a' OR '1'='1"}"#).unwrap();
        assert_eq!(s, "x = 'a'' OR ''1''=''1'");
    }
}
