use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use selcube_bench::pan::{self, PanConfig};
use selcube_bench::plot::{self, Metric};
use selcube_bench::report::{self, LatencyReport, Summary};
use selcube_bench::scenario::{self, Scenario};
use selcube_bench::sweep::{self, Condition, SweepOptions};
use selcube_engine::Database;

#[derive(Parser, Debug)]
#[command(name = "bench", version, about = "Interaction latency benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sweep a scenario's interactors and record update latencies.
    Run {
        #[arg(long, default_value = "flights")]
        scenario: String,
        #[arg(long, default_value_t = 100_000)]
        rows: usize,
        /// opt or noopt
        #[arg(long, default_value = "opt")]
        condition: Condition,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// Pixels between brush positions.
        #[arg(long, default_value_t = 1)]
        stride: usize,
        #[arg(long, default_value_t = 5)]
        warmup: usize,
    },
    /// Pan a multichannel recording under direct, tile and prefetch conditions.
    Pan {
        #[arg(long, default_value_t = 10_000_000)]
        rows: usize,
        #[arg(long, default_value_t = 16)]
        channels: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// Check every stitched viewport against a direct query.
        #[arg(long)]
        verify: bool,
    },
    /// Materialize a scenario's tables and report their sizes.
    Sizes {
        #[arg(long, default_value = "flights")]
        scenario: String,
        #[arg(long, default_value_t = 100_000)]
        rows: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render median latency by dataset size from report files.
    Plot {
        /// Directory of `*.json` reports.
        #[arg(long, default_value = "results")]
        input: PathBuf,
        #[arg(long, default_value = "results/latency.svg")]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = PlotMetric::Update)]
        metric: PlotMetric,
    },
    /// Generate a scenario table (or the pan recordings) into a database directory.
    Gen {
        /// A scenario name or `pan`.
        #[arg(long, default_value = "flights")]
        scenario: String,
        #[arg(long, default_value_t = 1_000_000)]
        rows: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        db: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PlotMetric {
    Update,
    Creation,
}

fn scenario(name: &str) -> Result<Scenario> {
    match Scenario::by_name(name) {
        Some(s) => Ok(s),
        None => bail!("unknown scenario {name:?}; expected one of {:?}", scenario::NAMES),
    }
}

fn fmt_summary(s: Option<Summary>) -> String {
    match s {
        Some(s) => format!(
            "n={} median={:.3}ms iqr={:.3}ms mean={:.3}ms max={:.3}ms",
            s.count, s.median, s.iqr, s.mean, s.max
        ),
        None => "-".into(),
    }
}

fn generate(name: &str, rows: usize, seed: u64) -> Result<(Arc<Database>, Scenario)> {
    let s = scenario(name)?;
    let db = Arc::new(Database::new());
    log::info!("generating {rows} rows for {name}");
    sweep::load(&db, &s, rows, seed)?;
    Ok((db, s))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Run {
            scenario,
            rows,
            condition,
            seed,
            out,
            stride,
            warmup,
        } => {
            let (db, s) = generate(&scenario, rows, seed)?;
            let opts = SweepOptions {
                stride,
                warmup,
                ..Default::default()
            };
            let run = sweep::run_sweep(db.clone(), &s, rows, seed, condition, opts);
            let mut rep = run.report();
            if condition == Condition::Optimized && run.error.is_none() {
                rep.sizes = sweep::view_sizes(&db, &s)?;
            }
            report::save_run(&out, &rep, &run.samples)?;
            println!("{} {} rows={rows}", s.name, condition);
            println!("  creation: {}", fmt_summary(rep.creation));
            println!("  update:   {}", fmt_summary(rep.update));
            if let Some(e) = &rep.error {
                bail!("partial run: {e}");
            }
        }
        Command::Pan {
            rows,
            channels,
            seed,
            out,
            verify,
        } => {
            let cfg = PanConfig {
                channels,
                seed,
                ..PanConfig::default()
            }
            .with_rows(rows);
            let db = Arc::new(Database::new());
            log::info!("generating {} x {} samples", cfg.channels, cfg.samples);
            pan::load(&db, &cfg)?;
            std::fs::create_dir_all(&out)?;
            let mut failed = None;
            for run in pan::run_all(db, &cfg, verify) {
                let mut rep =
                    LatencyReport::from_samples("pan", &run.label(), cfg.channels * cfg.samples, seed, &run.samples);
                rep.error = run.error.clone();
                report::save_run(&out, &rep, &run.samples)?;
                println!(
                    "{:<18} step hits {:>4}/{:<4} skip hits {}/{}  {}",
                    run.label(),
                    run.step_hits,
                    run.steps,
                    run.skip_hits,
                    run.skips,
                    fmt_summary(rep.update)
                );
                if let Some(e) = run.error.clone().or_else(|| run.mismatches.first().cloned()) {
                    failed = Some(format!("{}: {e}", run.label()));
                }
            }
            if let Some(e) = failed {
                bail!(e);
            }
        }
        Command::Sizes {
            scenario,
            rows,
            seed,
            out,
        } => {
            let (db, s) = generate(&scenario, rows, seed)?;
            let ms = sweep::materialize(db.clone(), &s)?;
            let sizes = sweep::view_sizes(&db, &s)?;
            println!("created in {ms:.1} ms");
            println!(
                "{:<16} {:<10} {:>10} {:>8} {:>12} {:>12} {:>8}",
                "interactor", "view", "resolution", "bins", "max rows", "actual", "density"
            );
            for z in &sizes {
                println!(
                    "{:<16} {:<10} {:>10} {:>8} {:>12} {:>12} {:>8.4}",
                    z.interactor, z.view, z.resolution, z.client_bins, z.max_rows, z.actual_rows, z.density
                );
            }
            if let Some(path) = out {
                std::fs::write(&path, serde_json::to_string_pretty(&sizes)? + "\n")
                    .with_context(|| format!("writing {}", path.display()))?;
            }
        }
        Command::Plot { input, out, metric } => {
            let reports = plot::load_reports(&input).with_context(|| format!("reading {}", input.display()))?;
            if reports.is_empty() {
                bail!("no reports in {}", input.display());
            }
            let (m, title) = match metric {
                PlotMetric::Update => (Metric::Update, "Median update latency"),
                PlotMetric::Creation => (Metric::Creation, "Median table creation time"),
            };
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(&out, plot::render(&reports, m, title))?;
            println!("wrote {}", out.display());
        }
        Command::Gen {
            scenario,
            rows,
            seed,
            db,
        } => {
            let database = Database::open(&db).with_context(|| format!("opening {}", db.display()))?;
            if scenario == "pan" {
                pan::load(&database, &PanConfig { seed, ..PanConfig::default() }.with_rows(rows))?;
            } else {
                sweep::load(&database, &self::scenario(&scenario)?, rows, seed)?;
            }
            println!("tables in {}: {:?}", db.display(), database.table_names());
        }
    }
    Ok(())
}
