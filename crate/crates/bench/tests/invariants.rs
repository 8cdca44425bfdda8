use std::sync::Arc;

use selcube_bench::report::Summary;
use selcube_bench::scenario::{self, Scenario};
use selcube_bench::sweep::{self, Condition, SweepOptions};
use selcube_core::coordinator::QueryPath;
use selcube_engine::Database;

#[test]
fn optimized_and_direct_sweeps_agree_on_every_scenario() {
    for s in Scenario::all() {
        let db = Arc::new(Database::new());
        sweep::load(&db, &s, 20_000, 11).unwrap();
        let opts = SweepOptions {
            stride: 3,
            keep_results: true,
            ..Default::default()
        };
        let opt = sweep::run_sweep(db.clone(), &s, 20_000, 11, Condition::Optimized, opts);
        let direct = sweep::run_sweep(db, &s, 20_000, 11, Condition::Unoptimized, opts);
        assert_eq!(opt.error, None, "{}", s.name);
        assert_eq!(direct.error, None, "{}", s.name);
        let n = sweep::compare_runs(&s, &direct, &opt).unwrap_or_else(|e| panic!("{}: {e}", s.name));
        assert!(n > 0, "{}", s.name);
        let paths = opt.steps.iter().flat_map(|st| &st.answers).map(|a| a.path);
        assert!(paths.clone().all(|p| p == QueryPath::Optimized), "{}", s.name);
        assert!(direct.steps.iter().flat_map(|st| &st.answers).all(|a| a.path == QueryPath::Direct));
    }
}

#[test]
fn direct_latency_grows_with_rows() {
    let s = scenario::flights();
    let opts = SweepOptions {
        stride: 60,
        warmup: 2,
        ..Default::default()
    };
    let mut medians = Vec::new();
    for rows in [10_000, 100_000, 1_000_000, 10_000_000] {
        let db = Arc::new(Database::new());
        sweep::load(&db, &s, rows, 2).unwrap();
        let run = sweep::run_sweep(db, &s, rows, 2, Condition::Unoptimized, opts);
        assert_eq!(run.error, None);
        medians.push(Summary::of(&run.update_ms()).unwrap().median);
    }
    assert!(medians.windows(2).all(|w| w[0] < w[1]), "{medians:?}");
}
