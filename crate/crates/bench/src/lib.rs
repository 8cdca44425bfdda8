//! Benchmark harness: seeded data, scripted sweeps and pans, latency
//! reports and view-size tables.

pub mod datagen;
pub mod pan;
pub mod plot;
pub mod report;
pub mod scenario;
pub mod sweep;
