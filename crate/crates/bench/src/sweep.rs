//! Scripted interaction sweeps against a coordinator.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use selcube_core::coordinator::{Coordinator, CoordinatorOptions, CoordinatorStats, QueryPath};
use selcube_core::data::{compare_results, QueryResult};
use selcube_core::planner;
use selcube_engine::Database;

use crate::report::{LatencyReport, Phase, Sample, ViewSize};
use crate::scenario::{Interactor, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Condition {
    Optimized,
    Unoptimized,
}

impl Condition {
    pub fn name(self) -> &'static str {
        match self {
            Condition::Optimized => "opt",
            Condition::Unoptimized => "noopt",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "opt" | "optimized" => Ok(Condition::Optimized),
            "noopt" | "unoptimized" => Ok(Condition::Unoptimized),
            _ => Err(format!("unknown condition {s:?} (expected opt or noopt)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepOptions {
    /// Pixels between successive brush positions.
    pub stride: usize,
    /// Discarded updates per interactor before timing.
    pub warmup: usize,
    /// Keep every delivered result for cross-condition comparison.
    pub keep_results: bool,
    /// After each update, re-query the interactor's own views and compare
    /// them with their unfiltered results.
    pub check_own: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            stride: 1,
            warmup: 5,
            keep_results: false,
            check_own: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Answer {
    pub view: String,
    pub path: QueryPath,
    pub result: Arc<QueryResult>,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub interactor: String,
    pub width_pct: u32,
    pub index: usize,
    pub answers: Vec<Answer>,
}

#[derive(Debug, Clone)]
pub struct SweepRun {
    pub scenario: String,
    pub condition: Condition,
    pub rows: usize,
    pub seed: u64,
    pub samples: Vec<Sample>,
    pub steps: Vec<StepOutcome>,
    /// Own-view results that changed under the interactor's own clause.
    pub own_violations: Vec<String>,
    pub error: Option<String>,
    pub stats: CoordinatorStats,
}

impl SweepRun {
    pub fn report(&self) -> LatencyReport {
        let mut r =
            LatencyReport::from_samples(&self.scenario, self.condition.name(), self.rows, self.seed, &self.samples);
        r.error = self.error.clone();
        r
    }

    pub fn update_ms(&self) -> Vec<f64> {
        self.samples.iter().filter(|s| s.phase == Phase::Update).map(|s| s.ms).collect()
    }

    pub fn creation_ms(&self) -> Vec<f64> {
        self.samples.iter().filter(|s| s.phase == Phase::Create).map(|s| s.ms).collect()
    }
}

/// Generates the scenario's table into `db`.
pub fn load(db: &Database, scenario: &Scenario, rows: usize, seed: u64) -> anyhow::Result<()> {
    db.register_table(scenario.table, (scenario.generate)(rows, seed))?;
    Ok(())
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

struct Sweeper<'a> {
    scenario: &'a Scenario,
    co: Coordinator,
    run: SweepRun,
    opts: SweepOptions,
    baseline: Vec<(String, Arc<QueryResult>)>,
}

impl Sweeper<'_> {
    fn sample(&mut self, interactor: &str, phase: Phase, width_pct: u32, step: usize, ms: f64) {
        self.run.samples.push(Sample {
            scenario: self.scenario.name.into(),
            condition: self.run.condition.name().into(),
            rows: self.run.rows,
            interactor: interactor.into(),
            phase,
            width_pct,
            step,
            ms,
        });
    }

    fn check_own(&mut self, it: &Interactor, width_pct: u32, index: usize) -> Result<(), String> {
        for id in &it.own_views {
            let view = self.co.view(id).cloned().ok_or_else(|| format!("unknown view {id}"))?;
            let (sql, _) = self.co.view_sql(&view)?;
            let got = self.co.query(&sql).result?;
            let (_, expected) = self.baseline.iter().find(|(v, _)| v == id).expect("registered");
            let tpl = self.scenario.view(id).expect("scenario view");
            if let Err(e) = compare_results(expected, &got, &tpl.key_columns, tpl.rel_tol) {
                self.run
                    .own_violations
                    .push(format!("{} {width_pct}% step {index}: view {id}: {e}", it.source));
            }
        }
        Ok(())
    }

    fn interactor(&mut self, sel: selcube_core::selection::SelectionId, it: &Interactor) -> Result<(), String> {
        if self.run.condition == Condition::Optimized {
            let t = Instant::now();
            self.co.activate(sel, it.example()).map_err(|e| e.to_string())?;
            self.co.run_background();
            self.sample(&it.source, Phase::Create, 0, 0, ms(t));
        }
        for step in it.warmup(self.opts.warmup) {
            self.co.update(sel, it.clause(&step.pixels)).map_err(|e| e.to_string())?;
        }
        for step in it.script(self.opts.stride) {
            let clause = it.clause(&step.pixels);
            let t = Instant::now();
            let out = self.co.update(sel, clause).map_err(|e| e.to_string())?;
            let elapsed = ms(t);
            let mut answers = Vec::with_capacity(out.len());
            for d in out {
                let result = d.result.map_err(|e| format!("view {}: {e}", d.view))?;
                answers.push(Answer {
                    view: d.view,
                    path: d.path,
                    result,
                });
            }
            self.sample(&it.source, Phase::Update, step.width_pct, step.index, elapsed);
            if self.opts.keep_results {
                self.run.steps.push(StepOutcome {
                    interactor: it.source.clone(),
                    width_pct: step.width_pct,
                    index: step.index,
                    answers,
                });
            }
            if self.opts.check_own {
                self.check_own(it, step.width_pct, step.index)?;
            }
        }
        self.co.remove(sel, &it.source).map_err(|e| e.to_string())?;
        Ok(())
    }
}

/// Runs every interactor's script in turn on a fresh coordinator.
///
/// Failures stop the run; the partial run carries the error.
pub fn run_sweep(
    db: Arc<Database>,
    scenario: &Scenario,
    rows: usize,
    seed: u64,
    condition: Condition,
    opts: SweepOptions,
) -> SweepRun {
    let co = Coordinator::new(
        db,
        CoordinatorOptions {
            optimize: condition == Condition::Optimized,
            // time query execution, not cache lookups
            cache_entries: 0,
        },
    );
    let mut s = Sweeper {
        scenario,
        co,
        run: SweepRun {
            scenario: scenario.name.into(),
            condition,
            rows,
            seed,
            samples: vec![],
            steps: vec![],
            own_violations: vec![],
            error: None,
            stats: CoordinatorStats::default(),
        },
        opts,
        baseline: vec![],
    };
    let sel = s.co.create_selection(scenario.selection);
    for v in &scenario.views {
        match s.co.register_view(v.descriptor(sel)) {
            Ok(d) => match d.result {
                Ok(r) => s.baseline.push((v.id.clone(), r)),
                Err(e) => s.run.error = Some(format!("view {}: {e}", v.id)),
            },
            Err(e) => s.run.error = Some(e.to_string()),
        }
    }
    if s.run.error.is_none() {
        for it in &scenario.interactors {
            if let Err(e) = s.interactor(sel, it) {
                log::error!("{} aborted during {}: {e}", scenario.name, it.source);
                s.run.error = Some(format!("{}: {e}", it.source));
                break;
            }
        }
    }
    s.run.stats = s.co.stats();
    s.run
}

/// Pairs the steps of two runs and compares every delivered result.
/// Returns the number of results compared.
pub fn compare_runs(scenario: &Scenario, a: &SweepRun, b: &SweepRun) -> Result<usize, String> {
    if a.steps.len() != b.steps.len() {
        return Err(format!("step counts differ: {} vs {}", a.steps.len(), b.steps.len()));
    }
    let mut compared = 0;
    for (x, y) in a.steps.iter().zip(&b.steps) {
        let at = format!("{} {}% step {}", x.interactor, x.width_pct, x.index);
        if (&x.interactor, x.width_pct, x.index) != (&y.interactor, y.width_pct, y.index) {
            return Err(format!("{at}: scripts diverge"));
        }
        let views = |s: &StepOutcome| s.answers.iter().map(|a| a.view.clone()).collect::<Vec<_>>();
        if views(x) != views(y) {
            return Err(format!("{at}: views {:?} vs {:?}", views(x), views(y)));
        }
        for (p, q) in x.answers.iter().zip(&y.answers) {
            let tpl = scenario.view(&p.view).ok_or_else(|| format!("unknown view {}", p.view))?;
            compare_results(&p.result, &q.result, &tpl.key_columns, tpl.rel_tol)
                .map_err(|e| format!("{at}: view {}: {e}", p.view))?;
            compared += 1;
        }
    }
    Ok(compared)
}

/// Creates every table the scenario's interactors would use, as activation
/// does, and returns the elapsed milliseconds.
pub fn materialize(db: Arc<Database>, scenario: &Scenario) -> anyhow::Result<f64> {
    let mut co = Coordinator::new(db, CoordinatorOptions::default());
    let sel = co.create_selection(scenario.selection);
    for v in &scenario.views {
        co.register_view(v.descriptor(sel))?;
    }
    let t = Instant::now();
    let mut queued = 0;
    for it in &scenario.interactors {
        queued += co.activate(sel, it.example())?;
        co.run_background();
    }
    let elapsed = ms(t);
    let made = co.created_tables().len();
    anyhow::ensure!(made == queued, "created {made} of {queued} tables");
    Ok(elapsed)
}

/// Sizes of the tables an optimized run creates, one per (interactor, view)
/// pair that the interactor filters.
pub fn view_sizes(db: &Database, scenario: &Scenario) -> anyhow::Result<Vec<ViewSize>> {
    let mut out = Vec::new();
    for it in &scenario.interactors {
        let example = it.example();
        for v in &scenario.views {
            if it.own_views.contains(&v.id) {
                continue;
            }
            let desc = v.descriptor(selcube_core::selection::SelectionId(0));
            let p = planner::plan(&desc, &example, scenario.selection, None)?;
            let resolution = p.interactive_resolution().unwrap_or(0);
            let max_rows = p.max_rows(v.client_bins).unwrap_or(0);
            let table = p.name.to_string();
            let actual_rows = match db.execute(&format!("SELECT COUNT(*) AS n FROM {table}")) {
                Ok(r) => r.value(0, 0).as_f64().unwrap_or(0.0) as u64,
                Err(_) => 0,
            };
            out.push(ViewSize {
                interactor: it.source.clone(),
                view: v.id.clone(),
                table,
                resolution,
                client_bins: v.client_bins,
                max_rows,
                actual_rows,
                density: if max_rows == 0 { 0.0 } else { actual_rows as f64 / max_rows as f64 },
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario;

    fn fixture(s: &Scenario, rows: usize) -> Arc<Database> {
        let db = Arc::new(Database::new());
        load(&db, s, rows, 11).unwrap();
        db
    }

    #[test]
    fn conditions_agree_on_flights() {
        let s = scenario::flights();
        let db = fixture(&s, 3000);
        let opts = SweepOptions {
            stride: 37,
            keep_results: true,
            check_own: true,
            ..Default::default()
        };
        let a = run_sweep(db.clone(), &s, 3000, 11, Condition::Optimized, opts);
        let b = run_sweep(db.clone(), &s, 3000, 11, Condition::Unoptimized, opts);
        assert_eq!((a.error.as_deref(), b.error.as_deref()), (None, None));
        assert!(a.own_violations.is_empty(), "{:?}", a.own_violations);
        assert!(compare_runs(&s, &a, &b).unwrap() > 0);
        assert_eq!(a.creation_ms().len(), 3);
        assert!(b.creation_ms().is_empty());
        assert_eq!(a.update_ms().len(), a.steps.len());
        assert!(a.steps.iter().flat_map(|s| &s.answers).all(|x| x.path == QueryPath::Optimized));
        assert!(b.steps.iter().flat_map(|s| &s.answers).all(|x| x.path == QueryPath::Direct));
        // only the two other histograms answer each brush
        assert!(a.steps.iter().all(|s| s.answers.len() == 2));
        let sizes = view_sizes(&db, &s).unwrap();
        assert_eq!(sizes.len(), 6);
        assert!(sizes.iter().all(|z| z.actual_rows > 0 && z.actual_rows <= z.max_rows));
        let r = a.report();
        assert!(r.update.unwrap().count > 0 && !r.partial());
    }

    #[test]
    fn failures_flag_a_partial_run() {
        let s = scenario::flights();
        // no table loaded
        let run = run_sweep(Arc::new(Database::new()), &s, 0, 1, Condition::Optimized, SweepOptions::default());
        assert!(run.error.is_some());
        assert!(run.report().partial());
    }

    #[test]
    fn conditions_parse() {
        assert_eq!("opt".parse::<Condition>().unwrap(), Condition::Optimized);
        assert_eq!("noopt".parse::<Condition>().unwrap(), Condition::Unoptimized);
        assert!("fast".parse::<Condition>().is_err());
    }
}
