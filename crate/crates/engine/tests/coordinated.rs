//! Sessions running on the engine: pre-aggregated answers equal direct ones.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use selcube_core::coordinator::{Coordinator, CoordinatorOptions, QueryPath};
use selcube_core::data::{compare_results, Column, ColumnData, Values};
use selcube_core::query::ClientViewDescriptor;
use selcube_core::scale::ScaleDescriptor;
use selcube_core::selection::{Clause, SelectionConfig};
use selcube_core::sql::parse_query;
use selcube_engine::Database;

fn flights(n: usize) -> Arc<Database> {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let delay: Vec<f64> = (0..n).map(|_| rng.random_range(-60.0..190.0)).collect();
    let time: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..24.0)).collect();
    let dist: Vec<f64> = (0..n).map(|_| rng.random_range(50.0..3000.0)).collect();
    let valid: Vec<bool> = (0..n).map(|_| !rng.random_bool(0.02)).collect();
    let db = Database::new();
    db.register_table(
        "flights",
        vec![
            Column::new("delay", ColumnData::with_validity(Values::Float(delay), Some(valid))),
            Column::float("time", time),
            Column::float("distance", dist),
        ],
    )
    .unwrap();
    Arc::new(db)
}

const VIEWS: [(&str, &str); 3] = [
    ("delay", "SELECT 10 * FLOOR(delay / 10) AS x, COUNT(*) AS y FROM flights GROUP BY x"),
    ("time", "SELECT FLOOR(time) AS x, COUNT(*) AS y FROM flights GROUP BY x"),
    (
        "dist",
        "SELECT 100 * FLOOR(distance / 100) AS x, AVG(delay) AS m, VAR_POP(delay) AS v FROM flights GROUP BY x",
    ),
];

#[test]
fn optimized_answers_equal_direct_answers() {
    let db = flights(50_000);
    let mut fast = Coordinator::new(db.clone(), CoordinatorOptions::default());
    let mut slow = Coordinator::new(
        db.clone(),
        CoordinatorOptions {
            optimize: false,
            cache_entries: 0,
        },
    );
    let sf = fast.create_selection(SelectionConfig::crossfilter());
    let ss = slow.create_selection(SelectionConfig::crossfilter());
    for (id, sql) in VIEWS {
        let q = parse_query(sql).unwrap();
        fast.register_view(ClientViewDescriptor::new(id, q.clone()).with_selection(sf))
            .unwrap();
        slow.register_view(ClientViewDescriptor::new(id, q).with_selection(ss))
            .unwrap();
    }
    let scale = ScaleDescriptor::linear([-60.0, 190.0], [0.0, 500.0]);
    for (lo, hi) in [(-60.0, 190.0), (0.0, 30.0), (100.0, 100.5), (-10.0, 75.0)] {
        let clause = Clause::interval("brush", "delay", lo, hi, scale.clone()).with_views(["delay"]);
        let a = fast.update(sf, clause.clone()).unwrap();
        let b = slow.update(ss, clause).unwrap();
        for d in &a {
            if d.view == "delay" {
                continue;
            }
            assert_eq!(d.path, QueryPath::Optimized, "{}", d.sql);
            let other = b.iter().find(|e| e.view == d.view).unwrap();
            assert_eq!(other.path, QueryPath::Direct);
            let (x, y) = (d.result.as_ref().unwrap(), other.result.as_ref().unwrap());
            // variance reconstructions from centered sums carry more rounding
            let tol = if d.view == "dist" { 1e-6 } else { 1e-9 };
            compare_results(y, x, &[0], tol).unwrap_or_else(|e| panic!("{} [{lo},{hi}]: {e}", d.view));
        }
    }
    assert_eq!(fast.stats().creates, 2);
    assert_eq!(db.table_names().iter().filter(|n| n.starts_with("mosaic.")).count(), 2);
}
