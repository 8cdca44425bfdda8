//! Benchmark scenarios: a generated table, client views and interactors.

use selcube_core::data::Column;
use selcube_core::query::ClientViewDescriptor;
use selcube_core::scale::{BinFn, BinSpec, ScaleDescriptor};
use selcube_core::selection::{Clause, ClauseMeta, SelectionConfig, SelectionId};
use selcube_core::sql::{parse_query, Expr};

use crate::datagen;

#[derive(Debug, Clone, PartialEq)]
pub struct ViewTemplate {
    pub id: String,
    pub sql: String,
    /// Number of bins the view renders.
    pub client_bins: u64,
    /// Positions of the grouping columns in the result.
    pub key_columns: Vec<usize>,
    /// Relative tolerance for non-key columns when comparing conditions.
    pub rel_tol: f64,
}

impl ViewTemplate {
    fn new(id: &str, sql: &str, client_bins: u64, key_columns: &[usize], rel_tol: f64) -> Self {
        ViewTemplate {
            id: id.into(),
            sql: sql.into(),
            client_bins,
            key_columns: key_columns.to_vec(),
            rel_tol,
        }
    }

    pub fn descriptor(&self, sel: SelectionId) -> ClientViewDescriptor {
        let q = parse_query(&self.sql).unwrap_or_else(|e| panic!("view {}: {e}", self.id));
        ClientViewDescriptor::new(&self.id, q)
            .with_selection(sel)
            .with_client_bins(self.client_bins)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InteractorKind {
    /// Interval brush over one column per scale; sweeps move diagonally.
    Brush { columns: Vec<String>, scales: Vec<ScaleDescriptor> },
    /// Slider selecting `[domain start, value]`; visits every position.
    Slider { column: String, scale: ScaleDescriptor },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Interactor {
    pub source: String,
    pub kind: InteractorKind,
    /// Views the interactor is drawn on, excluded under cross-filtering.
    pub own_views: Vec<String>,
    pub pixel_size: f64,
}

/// One scripted interaction: a pixel interval per dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    /// Width as a percentage of the axis, 0 for slider positions.
    pub width_pct: u32,
    pub index: usize,
    pub pixels: Vec<[f64; 2]>,
}

pub const SWEEP_WIDTHS: [u32; 3] = [10, 20, 30];
pub const WARMUP_WIDTH: u32 = 5;

impl Interactor {
    fn scales(&self) -> &[ScaleDescriptor] {
        match &self.kind {
            InteractorKind::Brush { scales, .. } => scales,
            InteractorKind::Slider { scale, .. } => std::slice::from_ref(scale),
        }
    }

    fn columns(&self) -> Vec<&str> {
        match &self.kind {
            InteractorKind::Brush { columns, .. } => columns.iter().map(String::as_str).collect(),
            InteractorKind::Slider { column, .. } => vec![column],
        }
    }

    pub fn bin_specs(&self) -> Vec<BinSpec> {
        self.scales()
            .iter()
            .zip(self.columns())
            .map(|(s, c)| BinSpec::new(s.clone(), self.pixel_size, BinFn::Floor, Expr::col(c)).expect("valid scale"))
            .collect()
    }

    /// Interactive pixels along each axis.
    pub fn resolution(&self) -> Vec<usize> {
        self.bin_specs().iter().map(|b| b.bin_count() as usize).collect()
    }

    fn meta(&self) -> ClauseMeta {
        ClauseMeta::interval(self.scales().to_vec()).with_pixel_size(self.pixel_size)
    }

    /// The clause for an interval in interactive pixels.
    pub fn clause(&self, pixels: &[[f64; 2]]) -> Clause {
        let specs = self.bin_specs();
        assert_eq!(pixels.len(), specs.len(), "one pixel interval per dimension");
        let terms = specs.iter().zip(pixels).map(|(b, [p, q])| {
            b.column
                .clone()
                .between(Expr::number(b.invert(*p)), Expr::number(b.invert(*q)))
        });
        Clause::new(&self.source, Expr::conjunction(terms).expect("at least one dimension"))
            .with_views(self.own_views.iter().cloned())
            .with_meta(self.meta())
    }

    /// Interval widths in pixels for a percentage of each axis.
    fn width(&self, pct: u32) -> Vec<usize> {
        self.resolution()
            .iter()
            .map(|&n| ((n as f64 * f64::from(pct) / 100.0).round() as usize).max(1))
            .collect()
    }

    fn diagonal(&self, pct: u32, stride: usize) -> Vec<Step> {
        let res = self.resolution();
        let w = self.width(pct);
        let travel = res.iter().zip(&w).map(|(n, w)| n - w).min().unwrap_or(0);
        (0..=travel)
            .step_by(stride.max(1))
            .enumerate()
            .map(|(index, a)| Step {
                width_pct: pct,
                index,
                pixels: w.iter().map(|&w| [a as f64, (a + w) as f64]).collect(),
            })
            .collect()
    }

    /// The timed script: brushes sweep each width across the axis at
    /// `stride` pixels; sliders visit every position.
    pub fn script(&self, stride: usize) -> Vec<Step> {
        match &self.kind {
            InteractorKind::Brush { .. } => SWEEP_WIDTHS.iter().flat_map(|&p| self.diagonal(p, stride)).collect(),
            InteractorKind::Slider { .. } => {
                let n = self.resolution()[0];
                (1..=n)
                    .map(|v| Step {
                        width_pct: 0,
                        index: v - 1,
                        pixels: vec![[0.0, v as f64]],
                    })
                    .collect()
            }
        }
    }

    /// Untimed updates preceding the script.
    pub fn warmup(&self, count: usize) -> Vec<Step> {
        let all = match &self.kind {
            InteractorKind::Brush { .. } => self.diagonal(WARMUP_WIDTH, 1),
            InteractorKind::Slider { .. } => self.script(1),
        };
        let every = (all.len() / count.max(1)).max(1);
        all.into_iter().step_by(every).take(count).collect()
    }

    /// A representative clause for activation.
    pub fn example(&self) -> Clause {
        let w = self.width(SWEEP_WIDTHS[0]);
        self.clause(&w.iter().map(|&w| [0.0, w as f64]).collect::<Vec<_>>())
    }
}

pub type Generator = fn(usize, u64) -> Vec<Column>;

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: &'static str,
    pub table: &'static str,
    pub generate: Generator,
    pub views: Vec<ViewTemplate>,
    pub interactors: Vec<Interactor>,
    pub selection: SelectionConfig,
}

pub const NAMES: [&str; 4] = ["flights", "airlines", "property", "raster2d"];

impl Scenario {
    pub fn by_name(name: &str) -> Option<Scenario> {
        match name {
            "flights" => Some(flights()),
            "airlines" => Some(airlines()),
            "property" => Some(property()),
            "raster2d" => Some(raster2d()),
            _ => None,
        }
    }

    pub fn all() -> Vec<Scenario> {
        NAMES.iter().filter_map(|n| Scenario::by_name(n)).collect()
    }

    pub fn view(&self, id: &str) -> Option<&ViewTemplate> {
        self.views.iter().find(|v| v.id == id)
    }
}

fn brush(source: &str, column: &str, domain: [f64; 2], pixels: f64, own: &str) -> Interactor {
    Interactor {
        source: source.into(),
        kind: InteractorKind::Brush {
            columns: vec![column.into()],
            scales: vec![ScaleDescriptor::linear(domain, [0.0, pixels])],
        },
        own_views: vec![own.into()],
        pixel_size: 1.0,
    }
}

/// Three linked COUNT histograms with 540-pixel brushes.
pub fn flights() -> Scenario {
    Scenario {
        name: "flights",
        table: "flights",
        generate: datagen::generate_flights,
        views: vec![
            ViewTemplate::new(
                "delay",
                "SELECT 10 * FLOOR(delay / 10) AS x, COUNT(*) AS y FROM flights GROUP BY x",
                25,
                &[0],
                0.0,
            ),
            ViewTemplate::new("time", "SELECT FLOOR(time) AS x, COUNT(*) AS y FROM flights GROUP BY x", 24, &[0], 0.0),
            ViewTemplate::new(
                "distance",
                "SELECT 100 * FLOOR(distance / 100) AS x, COUNT(*) AS y FROM flights GROUP BY x",
                30,
                &[0],
                0.0,
            ),
        ],
        interactors: vec![
            brush("delay-brush", "delay", datagen::DELAY_DOMAIN, 540.0, "delay"),
            brush("time-brush", "time", datagen::TIME_DOMAIN, 540.0, "time"),
            brush("distance-brush", "distance", datagen::DISTANCE_DOMAIN, 540.0, "distance"),
        ],
        selection: SelectionConfig::crossfilter(),
    }
}

/// A departure-time slider driving per-carrier delay means with
/// confidence-interval statistics.
pub fn airlines() -> Scenario {
    Scenario {
        name: "airlines",
        table: "airlines",
        generate: datagen::generate_airlines,
        views: vec![
            ViewTemplate::new(
                "carriers",
                "SELECT carrier AS x, AVG(delay) AS mean, STDDEV_SAMP(delay) AS sd, COUNT(*) AS n \
                 FROM airlines GROUP BY x",
                datagen::CARRIERS as u64,
                &[0],
                1e-6,
            ),
            ViewTemplate::new("hours", "SELECT FLOOR(time) AS x, COUNT(*) AS y FROM airlines GROUP BY x", 24, &[0], 0.0),
        ],
        interactors: vec![Interactor {
            source: "time-slider".into(),
            kind: InteractorKind::Slider {
                column: "time".into(),
                scale: ScaleDescriptor::linear(datagen::TIME_DOMAIN, [0.0, 240.0]),
            },
            own_views: vec!["hours".into()],
            pixel_size: 1.0,
        }],
        selection: SelectionConfig::crossfilter(),
    }
}

/// A date brush over a sales density plot driving a price regression.
pub fn property() -> Scenario {
    Scenario {
        name: "property",
        table: "property",
        generate: datagen::generate_property,
        views: vec![
            ViewTemplate::new(
                "sales",
                "SELECT FLOOR(date) AS x, COUNT(*) AS y, AVG(price) AS price FROM property GROUP BY x",
                29,
                &[0],
                1e-6,
            ),
            ViewTemplate::new(
                "trend",
                "SELECT REGR_SLOPE(price, date) AS slope, REGR_INTERCEPT(price, date) AS intercept, \
                 REGR_R2(price, date) AS r2, REGR_COUNT(price, date) AS n FROM property",
                1,
                &[],
                1e-6,
            ),
            ViewTemplate::new(
                "prices",
                "SELECT 50000 * FLOOR(price / 50000) AS x, COUNT(*) AS y FROM property GROUP BY x",
                40,
                &[0],
                0.0,
            ),
        ],
        interactors: vec![brush("date-brush", "date", datagen::DATE_DOMAIN, 440.0, "sales")],
        selection: SelectionConfig::crossfilter(),
    }
}

pub const RASTER: u64 = 64;

/// A 2D brush on a sky raster driving a magnitude histogram and a
/// color-magnitude raster, both at 64x64 resolution or below.
pub fn raster2d() -> Scenario {
    let unit = [0.0, 1.0];
    let px = [0.0, RASTER as f64];
    Scenario {
        name: "raster2d",
        table: "stars",
        generate: datagen::generate_stars,
        views: vec![
            ViewTemplate::new(
                "sky",
                "SELECT FLOOR(64 * ra) AS x, FLOOR(64 * dec) AS y, COUNT(*) AS z FROM stars GROUP BY x, y",
                RASTER * RASTER,
                &[0, 1],
                0.0,
            ),
            ViewTemplate::new("mag", "SELECT FLOOR(mag) AS x, COUNT(*) AS y FROM stars GROUP BY x", 16, &[0], 0.0),
            ViewTemplate::new(
                "cmd",
                "SELECT FLOOR(64 * (color + 0.5) / 3.5) AS x, FLOOR(4 * (mag - 5)) AS y, COUNT(*) AS z \
                 FROM stars GROUP BY x, y",
                RASTER * RASTER,
                &[0, 1],
                0.0,
            ),
        ],
        interactors: vec![Interactor {
            source: "sky-brush".into(),
            kind: InteractorKind::Brush {
                columns: vec!["ra".into(), "dec".into()],
                scales: vec![ScaleDescriptor::linear(unit, px), ScaleDescriptor::linear(unit, px)],
            },
            own_views: vec!["sky".into()],
            pixel_size: 1.0,
        }],
        selection: SelectionConfig::crossfilter(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_step_counts() {
        let f = flights();
        let delay = &f.interactors[0];
        assert_eq!(delay.resolution(), vec![540]);
        let script = delay.script(1);
        let ten: Vec<_> = script.iter().filter(|s| s.width_pct == 10).collect();
        assert_eq!(ten.len(), 540 - 54 + 1);
        assert_eq!(script.len(), (540 - 54 + 1) + (540 - 108 + 1) + (540 - 162 + 1));
        assert_eq!(ten.last().unwrap().pixels, vec![[486.0, 540.0]]);
        assert_eq!(delay.script(10).iter().filter(|s| s.width_pct == 10).count(), 49);
    }

    #[test]
    fn slider_visits_every_position() {
        let a = airlines();
        let s = a.interactors[0].script(7);
        assert_eq!(s.len(), 240);
        assert_eq!(s[239].pixels, vec![[0.0, 240.0]]);
    }

    #[test]
    fn clauses_invert_pixels_to_data() {
        let f = flights();
        let c = f.interactors[0].clause(&[[0.0, 54.0]]);
        let sql = selcube_core::sql::expr_to_sql(&c.predicate);
        assert!(sql.starts_with("delay BETWEEN -60 AND -35"), "{sql}");
        assert!(c.views.contains("delay"));
        let r = raster2d();
        let c = r.interactors[0].clause(&[[0.0, 16.0], [0.0, 16.0]]);
        assert_eq!(
            selcube_core::sql::expr_to_sql(&c.predicate),
            "(ra BETWEEN 0 AND 0.25) AND (dec BETWEEN 0 AND 0.25)"
        );
    }

    #[test]
    fn warmup_is_short_and_narrow() {
        for s in Scenario::all() {
            for i in &s.interactors {
                let w = i.warmup(5);
                assert_eq!(w.len(), 5, "{}", s.name);
            }
        }
    }

    #[test]
    fn every_view_parses() {
        for s in Scenario::all() {
            for v in &s.views {
                v.descriptor(SelectionId(0));
            }
            for i in &s.interactors {
                assert!(i.own_views.iter().all(|o| s.view(o).is_some()));
            }
        }
    }
}
