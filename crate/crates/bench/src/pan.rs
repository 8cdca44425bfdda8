//! Panning over a multichannel recording: direct, tiled and prefetching
//! viewports on channel-major and time-sorted copies.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use selcube_core::coordinator::{Coordinator, CoordinatorOptions, QueryPath};
use selcube_core::data::{compare_results, Column, ColumnData, QueryResult, Value};
use selcube_engine::Database;

use crate::datagen;
use crate::report::{Phase, Sample, Summary};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PanConfig {
    pub channels: usize,
    /// Samples per channel.
    pub samples: usize,
    /// Viewport length in samples; also the tile size.
    pub viewport: usize,
    /// Samples per pixel column.
    pub bin: usize,
    pub skips: usize,
    pub steps_per_skip: usize,
    pub seed: u64,
}

impl Default for PanConfig {
    fn default() -> Self {
        PanConfig {
            channels: 16,
            samples: 625_000,
            viewport: 64,
            bin: 4,
            skips: 10,
            steps_per_skip: 100,
            seed: 7,
        }
    }
}

impl PanConfig {
    pub fn with_rows(self, rows: usize) -> Self {
        PanConfig {
            samples: (rows / self.channels).max(self.viewport),
            ..self
        }
    }

    pub fn tiles(&self) -> usize {
        self.samples / self.viewport
    }

    fn validate(&self) -> Result<(), String> {
        if self.viewport < 2 || self.viewport % 2 != 0 || (self.viewport / 2) % self.bin != 0 {
            return Err(format!(
                "viewport {} must be even with halves divisible by the bin size {}",
                self.viewport, self.bin
            ));
        }
        let needed = self.skips * (self.steps_per_skip / 2 + 4);
        if self.tiles() < needed {
            return Err(format!("{} tiles leave no room for {} skips", self.tiles(), self.skips));
        }
        Ok(())
    }
}

pub const UNSORTED: &str = "recording";
pub const SORTED: &str = "recording_sorted";

/// Registers the channel-major table and its time-sorted copy.
pub fn load(db: &Database, cfg: &PanConfig) -> anyhow::Result<()> {
    let cols = datagen::generate_recording(cfg.channels, cfg.samples, cfg.seed);
    let sorted = datagen::sort_by(&cols, "t");
    db.register_table(UNSORTED, cols)?;
    db.register_table(SORTED, sorted)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Move {
    Skip,
    Step,
}

impl Move {
    pub fn name(self) -> &'static str {
        match self {
            Move::Skip => "skip",
            Move::Step => "step",
        }
    }
}

/// Viewport start offsets (in samples) for a session.
///
/// Steps pan by half a viewport, keep their direction and bounce off the
/// ends. Skips jump to a tile-aligned offset whose tile and neighbours
/// have not been shown or fetched, chosen uniformly.
pub fn script(cfg: &PanConfig) -> Result<Vec<(Move, usize)>, String> {
    cfg.validate()?;
    let mut rng = datagen::rng(cfg.seed ^ 0x9e37_79b9);
    let half = cfg.viewport / 2;
    let last = cfg.samples - cfg.viewport;
    let tiles = cfg.tiles();
    let mut touched = BTreeSet::new();
    let touch = |lo: usize, touched: &mut BTreeSet<usize>| {
        for t in covered(cfg, lo) {
            touched.extend([t.saturating_sub(1), t, (t + 1).min(tiles - 1)]);
        }
    };
    let mut out = Vec::with_capacity(cfg.skips * (cfg.steps_per_skip + 1));
    for _ in 0..cfg.skips {
        let free: Vec<usize> = (0..tiles)
            .filter(|t| (t.saturating_sub(1)..=(t + 1).min(tiles - 1)).all(|n| !touched.contains(&n)))
            .collect();
        if free.is_empty() {
            return Err("no unvisited region left to skip to".into());
        }
        let mut lo = free[rng.random_range(0..free.len())] * cfg.viewport;
        let mut forward = rng.random_bool(0.5);
        out.push((Move::Skip, lo));
        touch(lo, &mut touched);
        for _ in 0..cfg.steps_per_skip {
            if forward && lo + half > last {
                forward = false;
            } else if !forward && lo < half {
                forward = true;
            }
            lo = if forward { lo + half } else { lo - half };
            out.push((Move::Step, lo));
            touch(lo, &mut touched);
        }
    }
    Ok(out)
}

/// Tiles intersecting the viewport starting at `lo`.
pub fn covered(cfg: &PanConfig, lo: usize) -> Vec<usize> {
    let first = lo / cfg.viewport;
    let last = (lo + cfg.viewport - 1) / cfg.viewport;
    (first..=last).collect()
}

pub fn range_sql(table: &str, cfg: &PanConfig, lo: usize, hi: usize) -> String {
    format!(
        "SELECT channel, FLOOR(t / {bin}) AS px, MIN(value) AS lo, MAX(value) AS hi FROM {table} \
         WHERE t BETWEEN {lo} AND {hi} GROUP BY channel, px",
        bin = cfg.bin,
        hi = hi - 1
    )
}

pub fn viewport_sql(table: &str, cfg: &PanConfig, lo: usize) -> String {
    range_sql(table, cfg, lo, lo + cfg.viewport)
}

pub fn tile_sql(table: &str, cfg: &PanConfig, tile: usize) -> String {
    range_sql(table, cfg, tile * cfg.viewport, (tile + 1) * cfg.viewport)
}

/// Rows of the tile results that fall inside the viewport at `lo`.
pub fn stitch(cfg: &PanConfig, lo: usize, tiles: &[Arc<QueryResult>]) -> QueryResult {
    let (p0, p1) = ((lo / cfg.bin) as f64, ((lo + cfg.viewport) / cfg.bin) as f64);
    let mut rows: Vec<Vec<Value>> = Vec::new();
    let mut names: Vec<String> = Vec::new();
    for r in tiles {
        if names.is_empty() {
            names = r.column_names().iter().map(|s| s.to_string()).collect();
        }
        for row in r.rows() {
            if row[1].as_f64().is_some_and(|p| p >= p0 && p < p1) {
                rows.push(row);
            }
        }
    }
    let columns = names
        .iter()
        .enumerate()
        .map(|(i, n)| {
            let vals: Vec<Value> = rows.iter().map(|r| r[i].clone()).collect();
            let fallback = tiles[0].columns[i].data.data_type();
            Column::new(n.clone(), ColumnData::from_values(&vals, fallback))
        })
        .collect();
    QueryResult::new(columns)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PanCondition {
    Direct,
    Tile,
    Prefetch,
}

impl PanCondition {
    pub const ALL: [PanCondition; 3] = [PanCondition::Direct, PanCondition::Tile, PanCondition::Prefetch];

    pub fn name(self) -> &'static str {
        match self {
            PanCondition::Direct => "direct",
            PanCondition::Tile => "tile",
            PanCondition::Prefetch => "prefetch",
        }
    }
}

impl fmt::Display for PanCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone)]
pub struct PanRun {
    pub condition: PanCondition,
    pub sorted: bool,
    pub samples: Vec<Sample>,
    pub step_hits: usize,
    pub steps: usize,
    pub skip_hits: usize,
    pub skips: usize,
    /// Viewports whose stitched result differed from the direct query.
    pub mismatches: Vec<String>,
    pub error: Option<String>,
}

impl PanRun {
    pub fn label(&self) -> String {
        format!("{}-{}", self.condition, if self.sorted { "sorted" } else { "unsorted" })
    }

    pub fn hit_rate(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.step_hits as f64 / self.steps as f64
        }
    }

    pub fn summary(&self, mv: Option<Move>) -> Option<Summary> {
        let ms: Vec<f64> = self
            .samples
            .iter()
            .filter(|s| mv.is_none_or(|m| s.interactor == m.name()))
            .map(|s| s.ms)
            .collect();
        Summary::of(&ms)
    }
}

/// Plays the session script under one condition. With `verify`, every
/// stitched viewport is checked against a direct query (untimed).
pub fn run_pan(db: Arc<Database>, cfg: &PanConfig, condition: PanCondition, sorted: bool, verify: bool) -> PanRun {
    let table = if sorted { SORTED } else { UNSORTED };
    let mut run = PanRun {
        condition,
        sorted,
        samples: vec![],
        step_hits: 0,
        steps: 0,
        skip_hits: 0,
        skips: 0,
        mismatches: vec![],
        error: None,
    };
    let moves = match script(cfg) {
        Ok(m) => m,
        Err(e) => {
            run.error = Some(e);
            return run;
        }
    };
    let mut co = Coordinator::new(db.clone(), CoordinatorOptions::default());
    let label = run.label();
    for (i, &(mv, lo)) in moves.iter().enumerate() {
        let t = Instant::now();
        let (hit, result) = match condition {
            PanCondition::Direct => {
                let d = co.query(&viewport_sql(table, cfg, lo));
                (d.path == QueryPath::Cache, d.result)
            }
            PanCondition::Tile | PanCondition::Prefetch => {
                let mut all_hit = true;
                let mut parts = Vec::new();
                let mut failed = None;
                for tile in covered(cfg, lo) {
                    let d = co.query(&tile_sql(table, cfg, tile));
                    all_hit &= d.path == QueryPath::Cache;
                    match d.result {
                        Ok(r) => parts.push(r),
                        Err(e) => failed = Some(e),
                    }
                }
                match failed {
                    Some(e) => (all_hit, Err(e)),
                    None => (all_hit, Ok(Arc::new(stitch(cfg, lo, &parts)))),
                }
            }
        };
        let elapsed = t.elapsed().as_secs_f64() * 1e3;
        let result = match result {
            Ok(r) => r,
            Err(e) => {
                run.error = Some(format!("move {i}: {e}"));
                break;
            }
        };
        run.samples.push(Sample {
            scenario: "pan".into(),
            condition: label.clone(),
            rows: cfg.channels * cfg.samples,
            interactor: mv.name().into(),
            phase: Phase::Update,
            width_pct: 0,
            step: i,
            ms: elapsed,
        });
        match mv {
            Move::Step => {
                run.steps += 1;
                run.step_hits += usize::from(hit);
            }
            Move::Skip => {
                run.skips += 1;
                run.skip_hits += usize::from(hit);
            }
        }
        if verify && condition != PanCondition::Direct {
            match db.execute(&viewport_sql(table, cfg, lo)) {
                Ok(direct) => {
                    if let Err(e) = compare_results(&direct, &result, &[0, 1], 0.0) {
                        run.mismatches.push(format!("viewport at {lo}: {e}"));
                    }
                }
                Err(e) => run.mismatches.push(format!("viewport at {lo}: {e}")),
            }
        }
        if condition == PanCondition::Prefetch {
            let tiles = cfg.tiles();
            let mut next = BTreeSet::new();
            for t in covered(cfg, lo) {
                next.extend([t.saturating_sub(1), (t + 1).min(tiles - 1)]);
            }
            co.prefetch(next.into_iter().map(|t| tile_sql(table, cfg, t)));
            // idle time between interactions
            co.run_background();
        }
    }
    run
}

/// Every condition on both tables.
pub fn run_all(db: Arc<Database>, cfg: &PanConfig, verify: bool) -> Vec<PanRun> {
    let mut out = Vec::new();
    for sorted in [false, true] {
        for c in PanCondition::ALL {
            out.push(run_pan(db.clone(), cfg, c, sorted, verify));
        }
    }
    out
}

pub fn row_count(db: &Database, table: &str) -> Option<usize> {
    let r = db.execute(&format!("SELECT COUNT(*) AS n FROM {table}")).ok()?;
    r.value(0, 0).as_f64().map(|n| n as usize)
}
