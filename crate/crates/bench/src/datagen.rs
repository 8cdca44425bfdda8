//! Seeded synthetic tables.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal, Normal};
use selcube_core::data::{Column, ColumnData, Values};

pub const DELAY_DOMAIN: [f64; 2] = [-60.0, 190.0];
pub const TIME_DOMAIN: [f64; 2] = [0.0, 24.0];
pub const DISTANCE_DOMAIN: [f64; 2] = [0.0, 3000.0];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Keeps `v` inside the half-open `[lo, hi)`.
fn fit(v: f64, [lo, hi]: [f64; 2]) -> f64 {
    v.clamp(lo, hi - (hi - lo) * 1e-9)
}

fn delay(rng: &mut ChaCha8Rng) -> f64 {
    let on_time = Normal::new(-2.0, 9.0).unwrap();
    let early = Normal::new(-18.0, 8.0).unwrap();
    let late = Exp::new(1.0 / 35.0).unwrap();
    let v = match rng.random_range(0..100) {
        0..70 => on_time.sample(rng),
        70..76 => early.sample(rng),
        _ => 8.0 + late.sample(rng),
    };
    fit(v, DELAY_DOMAIN)
}

fn departure(rng: &mut ChaCha8Rng) -> f64 {
    // morning and evening banks
    let bank = if rng.random_bool(0.55) { Normal::new(9.5, 2.8) } else { Normal::new(17.5, 2.6) };
    let v: f64 = bank.unwrap().sample(rng);
    let v = v.rem_euclid(24.0);
    if v >= 24.0 {
        0.0
    } else {
        v
    }
}

fn distance(rng: &mut ChaCha8Rng) -> f64 {
    fit(LogNormal::new(700f64.ln(), 0.62).unwrap().sample(rng), [50.0, DISTANCE_DOMAIN[1]])
}

/// `delay` (minutes), `time` (hour of day) and `distance` (miles).
pub fn generate_flights(n: usize, seed: u64) -> Vec<Column> {
    let mut r = rng(seed);
    let (mut d, mut t, mut s) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        d.push(delay(&mut r));
        t.push(departure(&mut r));
        s.push(distance(&mut r));
    }
    vec![Column::float("delay", d), Column::float("time", t), Column::float("distance", s)]
}

pub const CARRIERS: usize = 26;

/// Flights with a two-letter `carrier` code; each carrier shifts the delay mix.
pub fn generate_airlines(n: usize, seed: u64) -> Vec<Column> {
    let mut r = rng(seed);
    let codes: Vec<Arc<str>> = (0..CARRIERS)
        .map(|i| Arc::from(format!("{}{}", (b'A' + i as u8) as char, (b'Z' - i as u8) as char)))
        .collect();
    let shift: Vec<f64> = (0..CARRIERS).map(|i| (i as f64 - 12.0) * 0.9).collect();
    let (mut c, mut t, mut d) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        let k = r.random_range(0..CARRIERS);
        c.push(codes[k].clone());
        t.push(departure(&mut r));
        d.push(fit(delay(&mut r) + shift[k], DELAY_DOMAIN));
    }
    vec![Column::string("carrier", c), Column::float("time", t), Column::float("delay", d)]
}

pub const DATE_DOMAIN: [f64; 2] = [1995.0, 2024.0];

/// Sale `date` (decimal year) and `price`; prices rise, then dip after 2016.
pub fn generate_property(n: usize, seed: u64) -> Vec<Column> {
    let mut r = rng(seed);
    let noise = LogNormal::new(0.0, 0.35).unwrap();
    let (mut date, mut price) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        let y = r.random_range(DATE_DOMAIN[0]..DATE_DOMAIN[1]);
        let trend = 60_000.0 + 9_000.0 * (y - 1995.0) - if y > 2016.5 { 14_000.0 * (y - 2016.5) } else { 0.0 };
        date.push(y);
        price.push((trend * noise.sample(&mut r)).clamp(5_000.0, 2_000_000.0));
    }
    vec![Column::float("date", date), Column::float("price", price)]
}

/// Star-like points: `ra`, `dec` in [0, 1) with clustered density,
/// `mag` in [5, 21) and `color` in [-0.5, 3).
pub fn generate_stars(n: usize, seed: u64) -> Vec<Column> {
    let mut r = rng(seed);
    let centers: Vec<(f64, f64, f64)> = (0..6)
        .map(|_| (r.random_range(0.1..0.9), r.random_range(0.1..0.9), r.random_range(0.03..0.15)))
        .collect();
    let (mut ra, mut dec, mut mag, mut color) = (vec![], vec![], vec![], vec![]);
    for _ in 0..n {
        let (x, y) = if r.random_bool(0.7) {
            let (cx, cy, s) = centers[r.random_range(0..centers.len())];
            let g = Normal::new(0.0, s).unwrap();
            ((cx + g.sample(&mut r)).rem_euclid(1.0), (cy + g.sample(&mut r)).rem_euclid(1.0))
        } else {
            (r.random_range(0.0..1.0), r.random_range(0.0..1.0))
        };
        ra.push(fit(x, [0.0, 1.0]));
        dec.push(fit(y, [0.0, 1.0]));
        let c: f64 = fit(Normal::new(1.0, 0.6).unwrap().sample(&mut r), [-0.5, 3.0]);
        color.push(c);
        mag.push(fit(11.0 + 2.5 * c + Normal::new(0.0, 2.0).unwrap().sample(&mut r), [5.0, 21.0]));
    }
    vec![
        Column::float("ra", ra),
        Column::float("dec", dec),
        Column::float("mag", mag),
        Column::float("color", color),
    ]
}

/// Multichannel recording in channel-major order: `channel`, integer
/// sample index `t` in `[0, samples)`, and `value`.
pub fn generate_recording(channels: usize, samples: usize, seed: u64) -> Vec<Column> {
    let mut r = rng(seed);
    let n = channels * samples;
    let (mut ch, mut t, mut v) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    let noise = Normal::new(0.0, 1.0).unwrap();
    for c in 0..channels {
        let mut level = 0.0;
        for s in 0..samples {
            level = 0.95 * level + noise.sample(&mut r);
            ch.push(c as i64);
            t.push(s as i64);
            v.push(level + if r.random_bool(0.001) { 25.0 } else { 0.0 });
        }
    }
    vec![Column::int("channel", ch), Column::int("t", t), Column::float("value", v)]
}

/// Reorders rows by the integer column `key` (stable).
pub fn sort_by(columns: &[Column], key: &str) -> Vec<Column> {
    let k = columns.iter().find(|c| c.name == key).expect("key column");
    let Values::Int(keys) = &k.data.values else {
        panic!("sort key must be an integer column")
    };
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by_key(|&i| keys[i]);
    columns.iter().map(|c| Column::new(c.name.clone(), take(&c.data, &order))).collect()
}

fn take(d: &ColumnData, idx: &[usize]) -> ColumnData {
    let values = match &d.values {
        Values::Bool(v) => Values::Bool(idx.iter().map(|&i| v[i]).collect()),
        Values::Int(v) => Values::Int(idx.iter().map(|&i| v[i]).collect()),
        Values::Float(v) => Values::Float(idx.iter().map(|&i| v[i]).collect()),
        Values::Str(v) => Values::Str(idx.iter().map(|&i| v[i].clone()).collect()),
    };
    let validity = d.validity.as_ref().map(|m| idx.iter().map(|&i| m[i]).collect());
    ColumnData::with_validity(values, validity)
}

/// One flight at the centre of every (delay pixel, departure hour) pair for
/// a `pixels`-wide delay axis; distance is constant.
pub fn dense_flights(pixels: usize) -> Vec<Column> {
    let [d0, d1] = DELAY_DOMAIN;
    let (mut d, mut t) = (Vec::new(), Vec::new());
    for p in 0..pixels {
        for h in 0..24 {
            d.push(d0 + (p as f64 + 0.5) * (d1 - d0) / pixels as f64);
            t.push(h as f64 + 0.5);
        }
    }
    let n = d.len();
    vec![Column::float("delay", d), Column::float("time", t), Column::float("distance", vec![500.0; n])]
}

/// Noise bound and valid range for one upsampled numeric column.
#[derive(Debug, Clone, PartialEq)]
pub struct Jitter {
    pub column: String,
    pub bound: f64,
    pub range: [f64; 2],
}

pub fn flights_jitter() -> Vec<Jitter> {
    let j = |c: &str, bound, range| Jitter {
        column: c.into(),
        bound,
        range,
    };
    vec![
        j("delay", 0.5, DELAY_DOMAIN),
        j("time", 0.02, TIME_DOMAIN),
        j("distance", 5.0, [50.0, DISTANCE_DOMAIN[1]]),
    ]
}

/// Samples `n` rows with replacement from `fixture` and adds uniform noise
/// in `[-bound, bound]` to each jittered float column, kept inside its range.
/// Other columns are copied.
pub fn upsample(fixture: &[Column], n: usize, jitter: &[Jitter], seed: u64) -> Vec<Column> {
    let mut r = rng(seed);
    let rows = fixture.first().map_or(0, |c| c.data.len());
    assert!(rows > 0 || n == 0, "empty fixture");
    let idx: Vec<usize> = (0..n).map(|_| r.random_range(0..rows)).collect();
    fixture
        .iter()
        .map(|c| {
            let mut d = take(&c.data, &idx);
            if let (Some(j), Values::Float(v)) = (jitter.iter().find(|j| j.column == c.name), &mut d.values) {
                for x in v.iter_mut() {
                    *x = fit(*x + r.random_range(-j.bound..=j.bound), j.range);
                }
            }
            Column::new(c.name.clone(), d)
        })
        .collect()
}
