//! Acceptance run: one PASS/FAIL line per criterion, executed serially so
//! timings do not compete. Exits non-zero when any criterion fails.

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use selcube_bench::pan::{self, PanCondition, PanConfig};
use selcube_bench::report::Summary;
use selcube_bench::scenario::{self, Scenario};
use selcube_bench::sweep::{self, Condition, SweepOptions};
use selcube_bench::datagen;
use selcube_core::coordinator::{Coordinator, CoordinatorOptions, QueryPath};
use selcube_core::data::{compare_results, Column, ColumnData, Values};
use selcube_core::executor::{GatedExecutor, RecordingExecutor};
use selcube_core::planner::{self, max_view_rows};
use selcube_core::query::ClientViewDescriptor;
use selcube_core::runner::{SessionEvent, SessionRunner};
use selcube_core::scale::{BinFn, BinSpec, ScaleDescriptor};
use selcube_core::selection::{Clause, ClauseMeta, SelectionConfig, SelectionId};
use selcube_core::sql::{parse_query, parse_statements, to_sql, Expr, Statement};
use selcube_engine::Database;

type Outcome = Result<String, String>;

fn check(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn median(v: &[f64]) -> f64 {
    Summary::of(v).map_or(f64::NAN, |s| s.median)
}

// ---------------------------------------------------------------- oracle

const EXACT: &str = "SELECT g AS x, COUNT(*) AS n, COUNT(v) AS nv, SUM(i) AS si, MIN(v) AS mnv, MAX(v) AS mxv, \
    MIN(i) AS mni, MAX(i) AS mxi, ARG_MIN(i, v) AS amn, ARG_MAX(i, v) AS amx, BIT_AND(u) AS ba, BIT_OR(u) AS bo, \
    BIT_XOR(u) AS bx, BOOL_AND(b) AS band, BOOL_OR(b) AS bor, COUNT(*) FILTER (WHERE b) AS nb FROM d";
const MEANS: &str = "SELECT g AS x, AVG(v) AS av, GEOMEAN(w) AS gm, SUM(v) AS sv, PRODUCT(1 + (w - 1) / 1000) AS pr \
    FROM d";
const MOMENTS: &str = "SELECT g AS x, VAR_SAMP(v) AS vs, VAR_POP(v) AS vp, STDDEV_SAMP(v) AS ss, STDDEV_POP(v) AS sp, \
    COVAR_SAMP(p, v) AS cs, COVAR_POP(p, v) AS cp, CORR(p, v) AS co, REGR_COUNT(p, v) AS rc, \
    REGR_AVGX(p, v) AS rax, REGR_AVGY(p, v) AS ray, REGR_SXX(p, v) AS rsxx, REGR_SYY(p, v) AS rsyy, \
    REGR_SXY(p, v) AS rsxy, REGR_SLOPE(p, v) AS rsl, REGR_INTERCEPT(p, v) AS ri, REGR_R2(p, v) AS rr2 FROM d";

const FAMILIES: [(&str, &str, f64); 3] = [("exact", EXACT, 0.0), ("means", MEANS, 1e-9), ("moments", MOMENTS, 1e-6)];

const X_DOMAIN: [f64; 2] = [1.0, 1000.0];

fn oracle_table(rows: usize, seed: u64) -> Vec<Column> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let groups = r.random_range(2..12);
    let (mut g, mut x, mut k, mut i, mut u, mut b) = (vec![], vec![], vec![], vec![], vec![], vec![]);
    let (mut v, mut valid, mut w, mut p) = (vec![], vec![], vec![], vec![]);
    for _ in 0..rows {
        g.push(r.random_range(0..groups));
        x.push(r.random_range(X_DOMAIN[0]..X_DOMAIN[1]));
        k.push(r.random_range(0..8i64));
        i.push(r.random_range(-1000..1000i64));
        u.push(r.random_range(0..1i64 << 20));
        b.push(r.random_bool(0.8));
        let vi = 50.0 + 20.0 * (r.random::<f64>() - 0.5) * 3.0;
        v.push(vi);
        valid.push(!r.random_bool(0.1));
        w.push(r.random_range(0.5..2.0));
        p.push(3.0 * vi - 40.0 + r.random_range(-25.0..25.0));
    }
    vec![
        Column::int("g", g),
        Column::float("x", x),
        Column::int("k", k),
        Column::int("i", i),
        Column::int("u", u),
        Column::boolean("b", b),
        Column::new("v", ColumnData::with_validity(Values::Float(v), Some(valid))),
        Column::float("w", w),
        Column::float("p", p),
    ]
}

fn oracle_scales(pixels: f64) -> Vec<(&'static str, ScaleDescriptor)> {
    let range = [0.0, pixels];
    vec![
        ("linear", ScaleDescriptor::linear(X_DOMAIN, range)),
        ("log", ScaleDescriptor::log(X_DOMAIN, range, 10.0)),
        ("pow", ScaleDescriptor::pow(X_DOMAIN, range, 0.5)),
        ("symlog", ScaleDescriptor::symlog(X_DOMAIN, range, 1.0)),
    ]
}

/// The family query filtered by `predicate`, written out by hand.
fn direct_sql(family: &str, predicate: &str) -> String {
    format!("{family} WHERE {predicate} GROUP BY x")
}

fn grouped(family: &str) -> String {
    format!("{family} GROUP BY x")
}

fn oracle_suite() -> Outcome {
    let t0 = Instant::now();
    let mut compared = 0usize;
    let mut cells = HashMap::new();
    for ds in 0..20u64 {
        let mut r = ChaCha8Rng::seed_from_u64(1000 + ds);
        let rows = 10f64.powf(r.random_range(3.0..5.0)).round() as usize;
        let db = Arc::new(Database::new());
        db.register_table("d", oracle_table(rows, ds)).map_err(|e| e.to_string())?;
        let mut co = Coordinator::new(
            db.clone(),
            CoordinatorOptions {
                optimize: true,
                cache_entries: 0,
            },
        );
        let sel = co.create_selection(SelectionConfig::intersect());
        for (name, sql, _) in FAMILIES {
            let view = ClientViewDescriptor::new(name, parse_query(&grouped(sql)).unwrap()).with_selection(sel);
            co.register_view(view).map_err(|e| e.to_string())?;
        }
        let mut verify = |co: &mut Coordinator, clause: Clause, predicate: String, leg: &str| -> Result<(), String> {
            let out = co.update(sel, clause).map_err(|e| e.to_string())?;
            check(out.len() == FAMILIES.len(), format!("dataset {ds} {leg}: {} deliveries", out.len()))?;
            for d in out {
                let (_, sql, tol) = FAMILIES.iter().find(|f| f.0 == d.view).expect("family view");
                check(
                    d.path == QueryPath::Optimized,
                    format!("dataset {ds} {leg} {}: answered by {:?}: {}", d.view, d.path, d.sql),
                )?;
                let got = d.result.map_err(|e| format!("dataset {ds} {leg} {}: {e}", d.view))?;
                let want = db.execute(&direct_sql(sql, &predicate)).map_err(|e| e.to_string())?;
                compare_results(&want, &got, &[0], *tol)
                    .map_err(|e| format!("dataset {ds} ({rows} rows) {leg} {} [{predicate}]: {e}", d.view))?;
                compared += 1;
                *cells.entry((d.view.clone(), leg.split(' ').next().unwrap().to_string())).or_insert(0) += 1;
            }
            Ok(())
        };
        let pixels = f64::from(r.random_range(200..800u32));
        for (scale_name, scale) in oracle_scales(pixels) {
            let spec = BinSpec::new(scale.clone(), 1.0, BinFn::Floor, Expr::col("x")).unwrap();
            for _ in 0..4 {
                let a = r.random_range(0..pixels as u32 - 1);
                let b = r.random_range(a + 1..=pixels as u32);
                let (lo, hi) = (spec.invert(f64::from(a)), spec.invert(f64::from(b)));
                let clause = Clause::new("brush", Expr::col("x").between(Expr::float(lo), Expr::float(hi)))
                    .with_meta(ClauseMeta::interval(vec![scale.clone()]));
                verify(&mut co, clause, format!("x BETWEEN {lo:?} AND {hi:?}"), &format!("interval {scale_name}"))?;
            }
            co.remove(sel, "brush").map_err(|e| e.to_string())?;
        }
        // point clauses carry no scale; one leg per dataset
        for _ in 0..3 {
            let ks: Vec<i64> = (0..r.random_range(1..4)).map(|_| r.random_range(0..8)).collect();
            let list = ks.iter().map(i64::to_string).collect::<Vec<_>>().join(", ");
            let predicate = format!("k IN ({list})");
            let expr = Expr::col("k").in_list(ks.iter().map(|&k| Expr::int(k)).collect());
            let clause = Clause::new("menu", expr).with_meta(ClauseMeta::point());
            verify(&mut co, clause, predicate, "point")?;
        }
        co.remove(sel, "menu").map_err(|e| e.to_string())?;
    }
    let elapsed = t0.elapsed().as_secs_f64();
    check(elapsed < 600.0, format!("suite took {elapsed:.0} s"))?;
    check(cells.len() == FAMILIES.len() * 2, format!("uncovered cells: {cells:?}"))?;
    Ok(format!(
        "20 datasets, 3 families x (4 scales interval + point), {compared} results equal, {elapsed:.1} s"
    ))
}

// ------------------------------------------------------- flights template

fn flights_template() -> Outcome {
    let view = ClientViewDescriptor::new(
        "time",
        parse_query("SELECT 24 * FLOOR(time / 24) AS x, COUNT(*) AS y FROM flights GROUP BY x").unwrap(),
    );
    let brush = Clause::interval("delay", "delay", 0.0, 50.0, ScaleDescriptor::linear([-60.0, 190.0], [0.0, 600.0]));
    let p = planner::plan(&view, &brush, SelectionConfig::intersect(), None).map_err(|e| e.to_string())?;
    let dims: Vec<&str> = p.view_dims.iter().map(|d| d.name.as_str()).chain(p.active_aliases.iter().map(String::as_str)).collect();
    check(dims == ["x", "active"], format!("dimensions {dims:?}"))?;
    let stmts = parse_statements(&p.creation).map_err(|e| e.to_string())?;
    let [Statement::CreateTableAs { name, if_not_exists: true, query }] = stmts.as_slice() else {
        return Err(format!("creation is not CREATE TABLE IF NOT EXISTS ... AS: {}", p.creation));
    };
    let name = name.to_string();
    check(name.starts_with("mosaic.pre_agg_"), format!("table {name}"))?;
    let body = to_sql(query).map_err(|e| e.to_string())?;
    check(
        body.starts_with("SELECT 24 * FLOOR(time / 24) AS x, COUNT(*) AS y, ")
            && body.contains("FLOOR(600 * (delay - -60) / (190 - -60))")
            && body.ends_with("AS active FROM flights GROUP BY x, active"),
        format!("creation body {body}"),
    )?;
    let update = to_sql(&p.update_template).map_err(|e| e.to_string())?;
    check(
        update == format!("SELECT x, SUM(y) AS y FROM {name} WHERE active BETWEEN $pixel_i AND $pixel_j GROUP BY x"),
        format!("update template {update}"),
    )?;
    Ok(format!("dims {{x, active}}, COUNT(*) -> SUM(y), {update}"))
}

// ------------------------------------------------------------ view sizes

fn view_sizes() -> Outcome {
    check(max_view_rows(540, 24) == 12_960, "540 x 24")?;
    check(max_view_rows(240, 26) == 6_240, "240 x 26")?;
    check(max_view_rows(600, 24) == 14_400, "600 x 24")?;
    // the same numbers from plans
    let f = scenario::flights();
    let plan_max = |s: &Scenario, it: usize, view: &str| -> Option<u64> {
        let v = s.view(view)?;
        let p = planner::plan(&v.descriptor(SelectionId(0)), &s.interactors[it].example(), s.selection, None).ok()?;
        p.max_rows(v.client_bins)
    };
    check(plan_max(&f, 0, "time") == Some(12_960), "flights delay brush -> time view")?;
    let a = scenario::airlines();
    check(plan_max(&a, 0, "carriers") == Some(6_240), "airlines slider -> carriers view")?;
    let view = ClientViewDescriptor::new("t", parse_query("SELECT FLOOR(time) AS x, COUNT(*) AS y FROM flights GROUP BY x").unwrap());
    let brush600 = Clause::interval("d", "delay", 0.0, 1.0, ScaleDescriptor::linear(datagen::DELAY_DOMAIN, [0.0, 600.0]));
    let p = planner::plan(&view, &brush600, SelectionConfig::intersect(), None).map_err(|e| e.to_string())?;
    check(p.max_rows(24) == Some(14_400), "600-px brush -> 24-bin view")?;

    let mut pairs = 0;
    for s in Scenario::all() {
        let db = Arc::new(Database::new());
        sweep::load(&db, &s, 200_000, 5).map_err(|e| e.to_string())?;
        sweep::materialize(db.clone(), &s).map_err(|e| e.to_string())?;
        for z in sweep::view_sizes(&db, &s).map_err(|e| e.to_string())? {
            check(
                z.actual_rows > 0 && z.actual_rows <= z.max_rows,
                format!("{} {} -> {}: {} rows of max {}", s.name, z.interactor, z.view, z.actual_rows, z.max_rows),
            )?;
            pairs += 1;
        }
    }
    let db = Arc::new(Database::new());
    db.register_table("flights", datagen::dense_flights(540)).map_err(|e| e.to_string())?;
    let f = scenario::flights();
    sweep::materialize(db.clone(), &f).map_err(|e| e.to_string())?;
    let sizes = sweep::view_sizes(&db, &f).map_err(|e| e.to_string())?;
    let dense = sizes
        .iter()
        .find(|z| z.interactor == "delay-brush" && z.view == "time")
        .ok_or("no delay -> time table")?;
    check(
        dense.actual_rows == 12_960 && dense.density == 1.0,
        format!("dense fixture: {} rows, density {}", dense.actual_rows, dense.density),
    )?;
    Ok(format!(
        "12960 / 6240 / 14400 exact; {pairs} scenario tables within max; dense fixture density {}",
        dense.density
    ))
}

// ------------------------------------------------- latency and cold start

struct Latency {
    opt_large: f64,
    noopt_large: f64,
    opt_small: f64,
    creation_ms: f64,
    elapsed_s: f64,
}

fn latency_runs() -> Result<Latency, String> {
    let t0 = Instant::now();
    let s = scenario::flights();
    let opts = SweepOptions {
        stride: 20,
        ..Default::default()
    };
    let run = |rows: usize, c: Condition, db: &Arc<Database>| {
        let r = sweep::run_sweep(db.clone(), &s, rows, 1, c, opts);
        match r.error {
            Some(e) => Err(format!("{c} at {rows}: {e}")),
            None => Ok(r),
        }
    };
    let small = Arc::new(Database::new());
    sweep::load(&small, &s, 10_000, 1).map_err(|e| e.to_string())?;
    let opt_small = run(10_000, Condition::Optimized, &small)?;
    let large = Arc::new(Database::new());
    sweep::load(&large, &s, 10_000_000, 1).map_err(|e| e.to_string())?;
    let opt_large = run(10_000_000, Condition::Optimized, &large)?;
    let noopt_large = run(10_000_000, Condition::Unoptimized, &large)?;
    Ok(Latency {
        opt_large: median(&opt_large.update_ms()),
        noopt_large: median(&noopt_large.update_ms()),
        opt_small: median(&opt_small.update_ms()),
        creation_ms: opt_large.creation_ms().iter().sum(),
        elapsed_s: t0.elapsed().as_secs_f64(),
    })
}

fn latency_ratio(l: &Result<Latency, String>) -> Outcome {
    let l = l.as_ref().map_err(Clone::clone)?;
    let detail = format!(
        "10^7 medians: optimized {:.3} ms, unoptimized {:.1} ms (ratio 1/{:.0}); optimized at 10^4 {:.3} ms ({:.2}x); {:.0} s",
        l.opt_large,
        l.noopt_large,
        l.noopt_large / l.opt_large,
        l.opt_small,
        l.opt_large / l.opt_small,
        l.elapsed_s
    );
    check(l.opt_large <= l.noopt_large / 10.0, detail.clone())?;
    check(l.opt_large <= 3.0 * l.opt_small, detail.clone())?;
    check(l.elapsed_s < 1200.0, detail.clone())?;
    Ok(detail)
}

fn cold_start(l: &Result<Latency, String>) -> Outcome {
    let l = l.as_ref().map_err(Clone::clone)?;
    let detail = format!("all flights tables at 10^7 rows created in {:.2} s", l.creation_ms / 1e3);
    check(l.creation_ms <= 10_000.0, detail.clone())?;
    Ok(detail)
}

// -------------------------------------------------------------- throttle

fn throttle() -> Outcome {
    let db = Arc::new(Database::new());
    db.register_table("flights", datagen::generate_flights(10_000, 3)).map_err(|e| e.to_string())?;
    let f = scenario::flights();
    let time = f.view("time").unwrap();
    let brush = &f.interactors[0];
    for k in 2..=50usize {
        let gate = Arc::new(GatedExecutor::new(db.clone()));
        let opts = CoordinatorOptions {
            optimize: false,
            cache_entries: 0,
        };
        let co = Coordinator::new(gate.clone(), opts);
        let events = Arc::new(Mutex::new(Vec::new()));
        let sink = events.clone();
        let h = SessionRunner::spawn(co, move |e| sink.lock().unwrap().push(e));
        let sel = h.create_selection(SelectionConfig::intersect());
        h.register_view(0, time.descriptor(sel));
        h.sync();
        gate.close();
        h.update(1, sel, brush.clause(&[[0.0, 10.0]]));
        gate.wait_for_waiter();
        for i in 0..k {
            h.update(100 + i as u64, sel, brush.clause(&[[0.0, 20.0 + i as f64]]));
        }
        gate.open();
        h.sync();
        let stats = h.stats();
        let tags: Vec<u64> = events
            .lock()
            .unwrap()
            .iter()
            .filter_map(|e| match e {
                SessionEvent::Result { tag, .. } => Some(*tag),
                _ => None,
            })
            .collect();
        let last = 100 + k as u64 - 1;
        check(
            tags == [0, 1, last] && stats.updates as usize == k + 1 && stats.dispatches == 2,
            format!("k={k}: results for {tags:?}, {} updates, {} dispatches", stats.updates, stats.dispatches),
        )?;
        drop(h);
    }
    Ok("k = 2..50: in-flight update and last of burst delivered, nothing else".into())
}

// --------------------------------------------------------- creation once

fn creation_once() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let f = scenario::flights();
    Database::open(dir.path())
        .and_then(|db| db.register_table("flights", datagen::generate_flights(20_000, 4)))
        .map_err(|e| e.to_string())?;
    let replay = |db: Arc<RecordingExecutor<Arc<Database>>>| -> Result<(), String> {
        let mut co = Coordinator::new(db, CoordinatorOptions::default());
        let sel = co.create_selection(f.selection);
        for v in &f.views {
            co.register_view(v.descriptor(sel)).map_err(|e| e.to_string())?;
        }
        for it in &f.interactors {
            co.activate(sel, it.example()).map_err(|e| e.to_string())?;
            co.run_background();
            for step in it.script(60) {
                co.update(sel, it.clause(&step.pixels)).map_err(|e| e.to_string())?;
            }
            co.remove(sel, &it.source).map_err(|e| e.to_string())?;
        }
        Ok(())
    };
    let mut creates: HashMap<String, usize> = HashMap::new();
    for _session in 0..2 {
        let db = Database::open(dir.path()).map_err(|e| e.to_string())?;
        let rec = Arc::new(RecordingExecutor::new(Arc::new(db)));
        replay(rec.clone())?;
        for s in rec.statements() {
            if let Some(rest) = s.strip_prefix("CREATE TABLE IF NOT EXISTS ") {
                let name = rest.split_whitespace().next().unwrap_or_default().to_string();
                *creates.entry(name).or_default() += 1;
            }
        }
    }
    let stored = Database::open(dir.path())
        .map_err(|e| e.to_string())?
        .table_names()
        .into_iter()
        .filter(|t| t.starts_with("mosaic."))
        .count();
    check(creates.len() == 6, format!("{} distinct tables created: {creates:?}", creates.len()))?;
    check(creates.values().all(|&n| n == 1), format!("repeated CREATE: {creates:?}"))?;
    check(stored == 6, format!("{stored} tables on disk"))?;
    Ok(format!("two sessions on one database directory: {} tables, one CREATE each", creates.len()))
}

// ------------------------------------------------------------------- pan

fn pan_bench() -> Outcome {
    let t0 = Instant::now();
    let cfg = PanConfig::default().with_rows(10_000_000);
    let db = Arc::new(Database::new());
    pan::load(&db, &cfg).map_err(|e| e.to_string())?;
    let runs = pan::run_all(db, &cfg, true);
    let mut lines = Vec::new();
    for r in &runs {
        if let Some(e) = &r.error {
            return Err(format!("{}: {e}", r.label()));
        }
        check(r.mismatches.is_empty(), format!("{}: {:?}", r.label(), r.mismatches.first()))?;
        lines.push(format!(
            "{} {:.0}% hits, median {:.3} ms",
            r.label(),
            100.0 * r.hit_rate(),
            r.summary(None).map_or(f64::NAN, |s| s.median)
        ));
    }
    let find = |c: PanCondition, sorted: bool| runs.iter().find(|r| r.condition == c && r.sorted == sorted).unwrap();
    for sorted in [false, true] {
        let p = find(PanCondition::Prefetch, sorted);
        check(p.hit_rate() >= 0.95, format!("{}: step hit rate {:.3}", p.label(), p.hit_rate()))?;
        check(p.skip_hits == 0, format!("{}: {} skips hit the cache", p.label(), p.skip_hits))?;
    }
    let med = |sorted| find(PanCondition::Direct, sorted).summary(None).map_or(f64::NAN, |s| s.median);
    check(med(true) <= med(false), format!("direct medians sorted {:.3} vs unsorted {:.3}", med(true), med(false)))?;
    Ok(format!("{}; stitched == direct; {:.0} s", lines.join("; "), t0.elapsed().as_secs_f64()))
}

// ------------------------------------------------------------ cross-filter

fn cross_filter() -> Outcome {
    let mut checked = Vec::new();
    for s in Scenario::all() {
        let db = Arc::new(Database::new());
        sweep::load(&db, &s, 100_000, 9).map_err(|e| e.to_string())?;
        let mut own = 0;
        for c in [Condition::Optimized, Condition::Unoptimized] {
            let opts = SweepOptions {
                check_own: true,
                ..Default::default()
            };
            let run = sweep::run_sweep(db.clone(), &s, 100_000, 9, c, opts);
            if let Some(e) = &run.error {
                return Err(format!("{} {c}: {e}", s.name));
            }
            check(
                run.own_violations.is_empty(),
                format!("{} {c}: {:?}", s.name, run.own_violations.first()),
            )?;
            own += run.update_ms().len();
        }
        checked.push(format!("{} {own} updates", s.name));
    }
    Ok(format!("own views unchanged after every update: {}", checked.join(", ")))
}

fn main() {
    let mut failed = 0;
    let mut report = |name: &str, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name} ({secs:.1} s): {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name} ({secs:.1} s): {why}");
            }
        }
    };
    report("oracle equivalence suite", &mut oracle_suite);
    report("creation and update queries for the flights template", &mut flights_template);
    report("view-size arithmetic", &mut view_sizes);
    let latency = latency_runs();
    report("latency ratio at 10^7 rows", &mut || latency_ratio(&latency));
    report("cold start at 10^7 rows", &mut || cold_start(&latency));
    drop(latency);
    report("throttle", &mut throttle);
    report("creation once across sessions", &mut creation_once);
    report("pan bench", &mut pan_bench);
    report("cross-filter semantics", &mut cross_filter);
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
