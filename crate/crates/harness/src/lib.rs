//! Experiment harness: flat-file configs, seeded orchestration of the lab's
//! run modes, CSV persistence, and cross-seed reporting with self-contained
//! SVG plots.
//!
//! Three run modes mirror the lab's two worlds:
//!
//! - `bandit`: one algorithm on one instance family, one regret CSV per
//!   seed;
//! - `train`: GRPO training on a generated reasoning world, per-step stats
//!   plus per-epoch diversity metrics;
//! - `base-sample`: the matched comparison stream drawn from the frozen
//!   reference policy.
//!
//! Identical (config, seed) pairs produce byte-identical CSVs; a manifest
//! ties the resolved config to every file a run wrote.

pub mod config;
pub mod manifest;
pub mod report;
pub mod runner;
pub mod svg;

pub use config::{Mode, RunConfig};
pub use manifest::ExperimentManifest;
pub use runner::run_experiment;
