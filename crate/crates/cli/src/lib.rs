//! Study harness: configuration, orchestration, reproducibility manifests,
//! and the headline convergence / coincidence / scaling studies.

pub mod config;
pub mod error;
pub mod manifest;
pub mod output;
pub mod reference;
pub mod stats;
pub mod studies;
