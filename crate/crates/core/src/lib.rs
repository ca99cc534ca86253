//! Multi-class outcome-risk modeling for B2B tender pipelines.
//!
//! The pipeline runs from weekly CRM-style opportunity snapshots to
//! per-segment boosted-tree models evaluated with rolling quarterly windows:
//!
//! 1. [`synthgen`] generates a synthetic snapshot portfolio.
//! 2. [`labeling`] turns snapshots into labeled open examples.
//! 3. [`features`] builds leakage-free numeric feature matrices.
//! 4. [`gbdt`] fits multi-class gradient-boosted trees.
//! 5. [`imbalance`] searches class weights that maximize a validation metric.
//! 6. [`backtest`] evaluates everything on rolling quarterly folds, scored by
//!    [`metrics`].

pub mod backtest;
pub mod cache;
pub mod cli;
pub mod domain;
pub mod error;
pub mod features;
pub mod gbdt;
pub mod imbalance;
pub mod labeling;
pub mod metrics;
pub mod report;
pub mod seed;
pub mod synthgen;

pub use error::{Error, Result};
