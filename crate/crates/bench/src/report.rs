//! Latency samples, summaries and report files.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

/// Linear-interpolated quantile of sorted data, `q` in [0, 1].
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of nothing");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let (i, frac) = (pos.floor() as usize, pos.fract());
    match sorted.get(i + 1) {
        Some(next) => sorted[i] + frac * (next - sorted[i]),
        None => sorted[i],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(samples: &[f64]) -> Option<Summary> {
        if samples.is_empty() {
            return None;
        }
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let (q1, q3) = (quantile(&s, 0.25), quantile(&s, 0.75));
        Some(Summary {
            count: s.len(),
            median: quantile(&s, 0.5),
            q1,
            q3,
            iqr: q3 - q1,
            mean: s.iter().sum::<f64>() / s.len() as f64,
            min: s[0],
            max: s[s.len() - 1],
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Create,
    Update,
}

/// One timed operation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub scenario: String,
    pub condition: String,
    pub rows: usize,
    pub interactor: String,
    pub phase: Phase,
    pub width_pct: u32,
    pub step: usize,
    pub ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewSize {
    pub interactor: String,
    pub view: String,
    pub table: String,
    pub resolution: u64,
    pub client_bins: u64,
    pub max_rows: u64,
    pub actual_rows: u64,
    pub density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub scenario: String,
    pub condition: String,
    pub rows: usize,
    pub seed: u64,
    pub creation: Option<Summary>,
    pub update: Option<Summary>,
    #[serde(default)]
    pub sizes: Vec<ViewSize>,
    /// Set when an executor failure cut the run short.
    #[serde(default)]
    pub error: Option<String>,
}

impl LatencyReport {
    pub fn from_samples(scenario: &str, condition: &str, rows: usize, seed: u64, samples: &[Sample]) -> Self {
        let ms = |phase| samples.iter().filter(|s| s.phase == phase).map(|s| s.ms).collect::<Vec<_>>();
        LatencyReport {
            scenario: scenario.into(),
            condition: condition.into(),
            rows,
            seed,
            creation: Summary::of(&ms(Phase::Create)),
            update: Summary::of(&ms(Phase::Update)),
            sizes: vec![],
            error: None,
        }
    }

    pub fn partial(&self) -> bool {
        self.error.is_some()
    }
}

/// Base file name shared by the samples and summary of one run.
pub fn run_stem(scenario: &str, condition: &str, rows: usize) -> String {
    format!("{scenario}-{condition}-{rows}")
}

pub fn write_samples(path: &Path, samples: &[Sample]) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for s in samples {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_samples(path: &Path) -> std::io::Result<Vec<Sample>> {
    let mut out = Vec::new();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

pub fn write_report(path: &Path, report: &LatencyReport) -> std::io::Result<()> {
    fs::write(path, serde_json::to_string_pretty(report)? + "\n")
}

pub fn read_report(path: &Path) -> std::io::Result<LatencyReport> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Writes `<stem>.jsonl` and `<stem>.json` under `dir`.
pub fn save_run(dir: &Path, report: &LatencyReport, samples: &[Sample]) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    let stem = run_stem(&report.scenario, &report.condition, report.rows);
    write_samples(&dir.join(format!("{stem}.jsonl")), samples)?;
    write_report(&dir.join(format!("{stem}.json")), report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn quartiles_interpolate() {
        let s = Summary::of(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!((s.median, s.q1, s.q3), (2.5, 1.75, 3.25));
        assert_eq!((s.min, s.max, s.mean, s.count), (1.0, 4.0, 2.5, 4));
        assert_eq!(Summary::of(&[7.0]).unwrap().iqr, 0.0);
        assert!(Summary::of(&[]).is_none());
    }

    fn sample(ms: f64, phase: Phase) -> Sample {
        Sample {
            scenario: "s".into(),
            condition: "opt".into(),
            rows: 10,
            interactor: "b".into(),
            phase,
            width_pct: 10,
            step: 0,
            ms,
        }
    }

    #[test]
    fn files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let samples = vec![sample(1.0, Phase::Create), sample(0.5, Phase::Update), sample(0.25, Phase::Update)];
        let report = LatencyReport::from_samples("s", "opt", 10, 1, &samples);
        save_run(dir.path(), &report, &samples).unwrap();
        assert_eq!(read_samples(&dir.path().join("s-opt-10.jsonl")).unwrap(), samples);
        let back = read_report(&dir.path().join("s-opt-10.json")).unwrap();
        assert_eq!(back, report);
        assert_eq!(back.update.unwrap().median, 0.375);
        assert_eq!(back.creation.unwrap().count, 1);
    }

    proptest! {
        #[test]
        fn summary_bounds(v in proptest::collection::vec(0.0f64..1e4, 1..200)) {
            let s = Summary::of(&v).unwrap();
            prop_assert!(s.min <= s.q1 && s.q1 <= s.median && s.median <= s.q3 && s.q3 <= s.max);
            prop_assert!(s.min <= s.mean + 1e-9 && s.mean <= s.max + 1e-9);
            // recomputing from raw samples gives the reported median
            let mut sorted = v.clone();
            sorted.sort_by(f64::total_cmp);
            let n = sorted.len();
            let m = if n % 2 == 1 { sorted[n / 2] } else { (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0 };
            prop_assert!((m - s.median).abs() <= 1e-9 * m.abs().max(1.0));
        }
    }
}
