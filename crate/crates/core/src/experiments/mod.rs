//! Simulation studies, metrics and reports.

pub mod presets;
pub mod config;
pub mod metrics;
pub mod study;
pub mod report;
