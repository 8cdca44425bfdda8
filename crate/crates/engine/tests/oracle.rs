//! Grouped aggregates against a row-at-a-time reference computed in test code.

use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use selcube_core::data::{Column, ColumnData, Value, Values};
use selcube_engine::{Database, ExecMode};

struct Data {
    g: Vec<i64>,
    x: Vec<Option<f64>>,
    y: Vec<f64>,
}

fn make(seed: u64, n: usize, groups: i64, null_rate: f64) -> (Database, Data) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g: Vec<i64> = (0..n).map(|_| rng.random_range(0..groups)).collect();
    let x: Vec<Option<f64>> = (0..n)
        .map(|_| (!rng.random_bool(null_rate)).then(|| rng.random_range(-50.0..50.0)))
        .collect();
    let y: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
    let db = Database::new();
    db.register_table(
        "d",
        vec![
            Column::int("g", g.clone()),
            Column::new(
                "x",
                ColumnData::with_validity(
                    Values::Float(x.iter().map(|v| v.unwrap_or(0.0)).collect()),
                    Some(x.iter().map(Option::is_some).collect()),
                ),
            ),
            Column::float("y", y.clone()),
        ],
    )
    .unwrap();
    (db, Data { g, x, y })
}

#[derive(Default)]
struct Ref {
    rows: i64,
    xs: Vec<f64>,
    pairs: Vec<(f64, f64)>,
    ymax: Option<f64>,
}

fn reference(d: &Data, lo: f64) -> BTreeMap<i64, Ref> {
    let mut out: BTreeMap<i64, Ref> = BTreeMap::new();
    for i in 0..d.g.len() {
        if d.y[i] < lo {
            continue;
        }
        let r = out.entry(d.g[i]).or_default();
        r.rows += 1;
        r.ymax = Some(r.ymax.map_or(d.y[i], |m: f64| m.max(d.y[i])));
        if let Some(x) = d.x[i] {
            r.xs.push(x);
            r.pairs.push((d.y[i], x));
        }
    }
    out
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

fn check(db: &Database, d: &Data, lo: f64) -> Result<(), TestCaseError> {
    let r = db
        .execute(&format!(
            "SELECT g, COUNT(*) AS n, COUNT(x) AS nx, SUM(x) AS sx, AVG(x) AS ax, MAX(y) AS my, \
             VAR_SAMP(x) AS vx, COVAR_POP(y, x) AS cv, REGR_SLOPE(y, x) AS sl \
             FROM d WHERE y >= {lo} GROUP BY g ORDER BY g"
        ))
        .unwrap();
    let want = reference(d, lo);
    prop_assert_eq!(r.row_count, want.len());
    for (row, (g, w)) in r.rows().iter().zip(&want) {
        prop_assert_eq!(&row[0], &Value::Int(*g));
        prop_assert_eq!(&row[1], &Value::Int(w.rows));
        prop_assert_eq!(&row[2], &Value::Int(w.xs.len() as i64));
        let n = w.xs.len() as f64;
        let sum: f64 = w.xs.iter().sum();
        let float = |v: &Value| v.as_f64();
        if w.xs.is_empty() {
            prop_assert_eq!(&row[3], &Value::Null);
            prop_assert_eq!(&row[4], &Value::Null);
        } else {
            prop_assert!(close(float(&row[3]).unwrap(), sum, 1e-9));
            prop_assert!(close(float(&row[4]).unwrap(), sum / n, 1e-9));
        }
        prop_assert_eq!(float(&row[5]), w.ymax);
        if w.xs.len() >= 2 {
            let m = sum / n;
            let v = w.xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
            prop_assert!(close(float(&row[6]).unwrap(), v, 1e-9));
        } else {
            prop_assert_eq!(&row[6], &Value::Null);
        }
        if !w.pairs.is_empty() {
            let (my, mx) = (
                w.pairs.iter().map(|p| p.0).sum::<f64>() / n,
                w.pairs.iter().map(|p| p.1).sum::<f64>() / n,
            );
            let cxy: f64 = w.pairs.iter().map(|p| (p.0 - my) * (p.1 - mx)).sum();
            let sxx: f64 = w.pairs.iter().map(|p| (p.1 - mx) * (p.1 - mx)).sum();
            prop_assert!(close(float(&row[7]).unwrap(), cxy / n, 1e-9));
            if sxx > 0.0 {
                prop_assert!(close(float(&row[8]).unwrap(), cxy / sxx, 1e-7));
            }
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn grouped_aggregates_match_reference(
        seed in any::<u64>(),
        n in 0usize..3000,
        groups in 1i64..12,
        null_rate in 0.0f64..0.5,
        lo in 0.0f64..10.0,
    ) {
        let (db, d) = make(seed, n, groups, null_rate);
        check(&db, &d, lo)?;
    }
}

#[test]
fn multi_task_tables_match_reference_in_both_modes() {
    let (db, d) = make(7, 300_000, 9, 0.1);
    for mode in [ExecMode::Parallel, ExecMode::Sequential] {
        db.set_mode(mode);
        check(&db, &d, 2.5).unwrap();
    }
}
