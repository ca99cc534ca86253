//! Sensitivity sweeps over the train window length and over
//! importance-based feature removal.

use serde::{Deserialize, Serialize};

use super::{build_fold_plan, fold_weights, run_backtest, train_fold, Averages, BacktestConfig, FoldPlan};
use crate::error::{Error, Result};
use crate::gbdt::feature_importance;
use crate::labeling::LabeledDataset;

/// Train window lengths (quarters) tried by [`window_sweep`] by default.
pub const SWEEP_SIZES: std::ops::RangeInclusive<usize> = 2..=10;

/// Split-count thresholds tried by [`feature_selection_sweep`] by default.
pub const DEFAULT_THRESHOLDS: [u64; 4] = [0, 10, 20, 30];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRow {
    pub train_window: usize,
    pub folds: usize,
    pub averages: Option<Averages>,
    /// Why the window could not be evaluated (e.g. the span is too short).
    pub skipped: Option<String>,
}

/// Backtests each train window length with a fixed test window.
pub fn window_sweep(
    data: &LabeledDataset,
    sizes: &[usize],
    test_window: usize,
    config: &BacktestConfig,
) -> Result<Vec<WindowRow>> {
    let quarters = data.quarters();
    let mut rows = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let row = match build_fold_plan(&quarters, size, test_window) {
            Err(e) => WindowRow {
                train_window: size,
                folds: 0,
                averages: None,
                skipped: Some(e.to_string()),
            },
            Ok(plan) => {
                let report = run_backtest(data, &plan, config)?;
                WindowRow {
                    train_window: size,
                    folds: report.averages.folds,
                    averages: Some(report.averages),
                    skipped: None,
                }
            }
        };
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub threshold: u64,
    /// Train features whose split count in the baseline model is at or
    /// below the threshold.
    pub removed: Vec<String>,
    pub removed_pct: f64,
    pub remaining: usize,
    pub averages: Averages,
}

/// Ranks features by split count in the first fold's model, then for each
/// threshold drops every feature used in at most that many splits and
/// re-runs the backtest.
pub fn feature_selection_sweep(
    data: &LabeledDataset,
    plan: &FoldPlan,
    thresholds: &[u64],
    config: &BacktestConfig,
) -> Result<Vec<SelectionRow>> {
    config.validate()?;
    let first = plan.folds.first().ok_or_else(|| Error::invalid("fold plan has no folds"))?;
    let weights = fold_weights(data, plan, config)?;
    let baseline = train_fold(data, first, weights[0].0.as_ref(), config)?;
    let importance = feature_importance(&baseline.model);
    let total = importance.len();
    thresholds
        .iter()
        .map(|&t| {
            let removed: Vec<String> = importance
                .iter()
                .filter(|f| f.splits <= t)
                .map(|f| f.feature.clone())
                .collect();
            if removed.len() == total {
                return Err(Error::invalid(format!(
                    "split threshold {t} would remove all {total} features"
                )));
            }
            let mut cfg = config.clone();
            cfg.features.non_train.extend(removed.iter().cloned());
            let report = run_backtest(data, plan, &cfg)?;
            Ok(SelectionRow {
                threshold: t,
                removed_pct: 100.0 * removed.len() as f64 / total as f64,
                remaining: total - removed.len(),
                removed,
                averages: report.averages,
            })
        })
        .collect()
}
