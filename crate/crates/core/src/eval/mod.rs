//! Metrics, baselines, synthetic data and experiment drivers.

pub mod gaussian;
pub mod metrics;
pub mod synthetic;
pub mod experiments;
pub mod report;
pub mod runner;
