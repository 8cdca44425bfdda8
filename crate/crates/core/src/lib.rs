//! Selection model, query analysis and pre-aggregation planning for
//! linked, cross-filtered views over a relational store.

pub mod data;
pub mod sql;
pub mod scale;
pub mod selection;
pub mod query;
pub mod planner;
pub mod executor;
pub mod coordinator;
pub mod runner;
