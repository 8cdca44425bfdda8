use super::*;
use proptest::prelude::*;

fn roundtrip(sql: &str) -> String {
    let q = parse_query(sql).unwrap();
    let printed = to_sql(&q).unwrap();
    assert_eq!(parse_query(&printed).unwrap(), q, "reparse of {printed}");
    printed
}

#[test]
fn prints_binning_query() {
    let s = roundtrip("select 10 * floor(delay / 10) as x, count(*) as y from flights group by x");
    assert_eq!(s, "SELECT 10 * FLOOR(delay / 10) AS x, COUNT(*) AS y FROM flights GROUP BY x");
}

#[test]
fn canonical_form_is_lower_case() {
    let q = parse_query("SELECT SUM(y) AS y FROM mosaic.t WHERE a BETWEEN 1 AND 2").unwrap();
    assert_eq!(
        to_canonical_sql(&q).unwrap(),
        "select sum(y) as y from mosaic.t where a between 1 and 2"
    );
}

#[test]
fn logical_operands_are_parenthesized() {
    let e = parse_expr("a = 1 and b = 2 or c = 3").unwrap();
    assert_eq!(expr_to_sql(&e), "((a = 1) AND (b = 2)) OR (c = 3)");
    assert_eq!(parse_expr(&expr_to_sql(&e)).unwrap(), e);
}

#[test]
fn parses_filters_ctes_and_subqueries() {
    roundtrip(
        "with t as (select a, b from x where a > 0) \
         select a, sum(b) filter (where b is not null) as s, (select avg(b) from x) as m \
         from t group by a order by a desc limit 5",
    );
    roundtrip("select * from (select a from x) as s left join y on s.a = y.a");
    roundtrip("select \"Weird Name\", 'it''s' as s from t");
    roundtrip("select count(distinct a) from t where a not in (1, 2) and b not like 'x%'");
    roundtrip("select case when a is null then null else greatest(0, least(9, a)) end as c from t");
}

#[test]
fn negative_literals_fold() {
    assert_eq!(parse_expr("-60").unwrap(), Expr::int(-60));
    assert_eq!(parse_expr("-1.5e-3").unwrap(), Expr::float(-1.5e-3));
    let e = Expr::col("x").sub(Expr::int(-3));
    assert_eq!(expr_to_sql(&e), "x - -3");
    assert_eq!(parse_expr(&expr_to_sql(&e)).unwrap(), e);
    let neg = Expr::Unary { op: UnaryOp::Neg, expr: Box::new(Expr::int(-3)) };
    assert_eq!(parse_expr(&expr_to_sql(&neg)).unwrap(), neg);
}

#[test]
fn placeholders() {
    let e = parse_expr("active BETWEEN $pixel_i AND $pixel_j").unwrap();
    assert_eq!(
        e,
        Expr::col("active").between(Expr::placeholder("pixel_i"), Expr::placeholder("pixel_j"))
    );
}

#[test]
fn statements() {
    let stmts = parse_statements(
        "CREATE SCHEMA IF NOT EXISTS mosaic; \
         CREATE TABLE IF NOT EXISTS mosaic.t AS SELECT 1 AS a; DROP TABLE IF EXISTS mosaic.t;\
         DROP SCHEMA mosaic CASCADE",
    )
    .unwrap();
    assert_eq!(stmts.len(), 4);
    for s in &stmts {
        let text = statement_to_sql(s).unwrap();
        assert_eq!(&parse_statement(&text).unwrap(), s);
    }
}

#[test]
fn rejects_having_and_garbage() {
    assert!(matches!(
        parse_query("select a from t group by a having count(*) > 1"),
        Err(SqlError::Unsupported(_))
    ));
    assert!(parse_query("select from").is_err());
    assert!(parse_query("select a from t extra junk").is_err());
    assert!(parse_query("select 'open").is_err());
}

#[test]
fn non_finite_literals_are_rejected() {
    let q = Query::select(vec![SelectItem::unnamed(Expr::float(f64::NAN))]);
    assert!(to_sql(&q).is_err());
}

fn arb_leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        prop::sample::select(vec!["a", "b", "delay", "Mixed Case", "select"]).prop_map(Expr::col),
        any::<i32>().prop_map(|v| Expr::int(v as i64)),
        (-1e12f64..1e12).prop_map(Expr::float),
        "[a-z' ]{0,6}".prop_map(|s| Expr::string(&s)),
        Just(Expr::null()),
        any::<bool>().prop_map(Expr::boolean),
        Just(Expr::placeholder("pixel_i")),
    ]
}

fn arb_expr() -> impl Strategy<Value = Expr> {
    arb_leaf().prop_recursive(4, 32, 4, |inner| {
        let ops = prop::sample::select(vec![
            BinaryOp::Add,
            BinaryOp::Sub,
            BinaryOp::Mul,
            BinaryOp::Div,
            BinaryOp::Mod,
            BinaryOp::Eq,
            BinaryOp::NotEq,
            BinaryOp::Lt,
            BinaryOp::GtEq,
            BinaryOp::And,
            BinaryOp::Or,
            BinaryOp::Concat,
        ]);
        prop_oneof![
            (ops, inner.clone(), inner.clone()).prop_map(|(op, l, r)| Expr::binary(op, l, r)),
            inner.clone().prop_map(Expr::not),
            inner.clone().prop_map(|e| Expr::Unary { op: UnaryOp::Neg, expr: Box::new(e) }),
            (inner.clone(), inner.clone(), inner.clone(), any::<bool>()).prop_map(|(e, l, h, n)| {
                Expr::Between { expr: Box::new(e), low: Box::new(l), high: Box::new(h), negated: n }
            }),
            (inner.clone(), prop::collection::vec(inner.clone(), 1..3), any::<bool>())
                .prop_map(|(e, list, negated)| Expr::InList { expr: Box::new(e), list, negated }),
            (inner.clone(), any::<bool>())
                .prop_map(|(e, negated)| Expr::IsNull { expr: Box::new(e), negated }),
            (inner.clone(), inner.clone(), any::<bool>(), any::<bool>()).prop_map(|(e, p, n, ci)| {
                Expr::Like { expr: Box::new(e), pattern: Box::new(p), negated: n, case_insensitive: ci }
            }),
            (inner.clone(), inner.clone(), prop::option::of(inner.clone())).prop_map(|(w, t, e)| {
                Expr::Case {
                    operand: None,
                    branches: vec![CaseBranch { when: w, then: t }],
                    else_result: e.map(Box::new),
                }
            }),
            prop::collection::vec(inner.clone(), 0..3).prop_map(|args| Expr::func("GREATEST", args)),
            (inner.clone(), prop::option::of(inner)).prop_map(|(a, f)| {
                let mut call = FunctionCall::new("SUM", vec![a]);
                call.filter = f.map(Box::new);
                Expr::Function(call)
            }),
        ]
    })
}

proptest! {
    #[test]
    fn expr_print_parse_roundtrip(e in arb_expr()) {
        let text = expr_to_sql(&e);
        let back = parse_expr(&text).map_err(|err| TestCaseError::fail(format!("{text}: {err}")))?;
        prop_assert_eq!(back, e, "{}", text);
    }

    #[test]
    fn canonical_text_is_stable(e in arb_expr()) {
        let q = Query::select(vec![SelectItem::new(e, "v")]).from(TableRef::table("t"));
        let a = to_canonical_sql(&q).unwrap();
        let b = to_canonical_sql(&parse_query(&a).unwrap()).unwrap();
        prop_assert_eq!(a, b);
    }
}
