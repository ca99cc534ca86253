//! Rolling-window evaluation: per fold, fit features and model on the train
//! quarters only, optionally search class weights on the last train quarter,
//! then score the test quarters.

mod plan;
mod sweep;

pub use plan::{build_fold_plan, fold_count, Fold, FoldPlan, QuarterSpan};
pub use sweep::{feature_selection_sweep, window_sweep, SelectionRow, WindowRow, DEFAULT_THRESHOLDS, SWEEP_SIZES};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{SegmentKey, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, FeatureSpec, Featurizer};
use crate::gbdt::{self, Ensemble, Hyperparams};
use crate::imbalance::{self, ClassWeights, ObjectiveSpec, WeightSearchResult};
use crate::labeling::{quarter_of, LabeledDataset, Quarter};
use crate::metrics::{full_report, MetricReport};
use crate::seed;

/// How class weights are obtained for training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightsMode {
    /// Unit sample weights: no imbalance handling.
    None,
    Grid,
    Bayes,
    /// Weights supplied in the configuration.
    Fixed,
}

impl WeightsMode {
    pub fn name(self) -> &'static str {
        match self {
            WeightsMode::None => "none",
            WeightsMode::Grid => "grid",
            WeightsMode::Bayes => "bayes",
            WeightsMode::Fixed => "fixed",
        }
    }
}

/// Whether searched weights are found once (on the first fold's train span)
/// and reused, or searched again in every fold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightScope {
    PerSegment,
    PerFold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BacktestConfig {
    pub mode: WeightsMode,
    pub scope: WeightScope,
    pub fixed_weights: Option<ClassWeights>,
    pub hyperparams: Hyperparams,
    pub objective: ObjectiveSpec,
    pub features: FeatureSpec,
    pub grid_resolution: usize,
    pub bayes_budget: usize,
    pub seed: u64,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        BacktestConfig {
            mode: WeightsMode::None,
            scope: WeightScope::PerSegment,
            fixed_weights: None,
            hyperparams: Hyperparams::default(),
            objective: ObjectiveSpec::default(),
            features: FeatureSpec::default(),
            grid_resolution: 8,
            bayes_budget: 35,
            seed: 0,
        }
    }
}

impl BacktestConfig {
    pub fn validate(&self) -> Result<()> {
        self.hyperparams.validate()?;
        self.objective.validate()?;
        if self.mode == WeightsMode::Fixed && self.fixed_weights.is_none() {
            return Err(Error::InvalidConfig("weights mode `fixed` needs fixed_weights".into()));
        }
        Ok(())
    }
}

/// Summary of a weight search kept in the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSummary {
    pub best_objective: f64,
    pub budget_used: usize,
    pub validation_quarter: Quarter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: Fold,
    pub n_train: usize,
    pub n_test: usize,
    pub weights: Option<ClassWeights>,
    pub search: Option<SearchSummary>,
    pub model_hash: Option<String>,
    pub metrics: Option<MetricReport>,
    /// Why the fold was not scored, if it was not.
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Averages {
    pub folds: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Mean of the folds' macro AUCs (folds where it is defined).
    pub auc: Option<f64>,
    pub class_auc: [Option<f64>; NUM_CLASSES],
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

impl Averages {
    /// Arithmetic means over the scored folds.
    pub fn of(reports: &[&MetricReport]) -> Averages {
        let m = |f: fn(&MetricReport) -> f64| mean(reports.iter().map(|r| f(r))).unwrap_or(0.0);
        Averages {
            folds: reports.len(),
            accuracy: m(|r| r.accuracy),
            precision: m(|r| r.precision),
            recall: m(|r| r.recall),
            f1: m(|r| r.f1),
            auc: mean(reports.iter().filter_map(|r| r.macro_auc)),
            class_auc: std::array::from_fn(|k| mean(reports.iter().filter_map(|r| r.per_class[k].auc))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub segment: SegmentKey,
    pub mode: WeightsMode,
    pub scope: WeightScope,
    pub hyperparams: Hyperparams,
    pub objective: ObjectiveSpec,
    pub fingerprint: String,
    pub plan: FoldPlan,
    pub folds: Vec<FoldResult>,
    pub averages: Averages,
}

impl BacktestReport {
    pub fn scored_folds(&self) -> impl Iterator<Item = &FoldResult> {
        self.folds.iter().filter(|f| f.metrics.is_some())
    }

    pub fn skipped_folds(&self) -> Vec<usize> {
        self.folds.iter().filter(|f| f.skipped.is_some()).map(|f| f.fold.index).collect()
    }
}

/// Row indices of `data` whose record date falls in `span`.
pub fn rows_in(data: &LabeledDataset, span: &QuarterSpan) -> Vec<usize> {
    (0..data.len())
        .filter(|&i| span.contains(quarter_of(data.examples[i].snapshot.record_date)))
        .collect()
}

fn fold_seed(config: &BacktestConfig, fold: usize, purpose: &str) -> u64 {
    seed::derive(config.seed, &format!("backtest/fold{fold}/{purpose}"))
}

/// Searches class weights on a train span: the last quarter validates, the
/// earlier quarters train.
pub fn search_weights(
    data: &LabeledDataset,
    train: &QuarterSpan,
    config: &BacktestConfig,
    fold: usize,
) -> Result<(WeightSearchResult, SearchSummary)> {
    if train.len() < 2 {
        return Err(Error::invalid(
            "weight search needs a train window of at least 2 quarters (the last one validates)",
        ));
    }
    let valid_q = train.last;
    let inner = QuarterSpan {
        first: train.first,
        last: valid_q.offset(-1),
    };
    let inner_rows = rows_in(data, &inner);
    let valid_rows = rows_in(data, &QuarterSpan { first: valid_q, last: valid_q });
    if inner_rows.is_empty() || valid_rows.is_empty() {
        return Err(Error::invalid(format!(
            "fold {fold}: weight search needs rows in {inner} ({} found) and validation quarter {valid_q} ({} found)",
            inner_rows.len(),
            valid_rows.len()
        )));
    }
    let (featurizer, train_m) = Featurizer::fit(&config.features, data, &inner_rows, fold_seed(config, fold, "search-features"))?;
    let valid_m = featurizer.transform(data, &valid_rows)?;
    let hp = &config.hyperparams;
    let result = match config.mode {
        WeightsMode::Grid => imbalance::grid_search(&train_m, &valid_m, &config.objective, config.grid_resolution, hp)?,
        WeightsMode::Bayes => imbalance::bayes_opt(
            &train_m,
            &valid_m,
            &config.objective,
            config.bayes_budget,
            fold_seed(config, fold, "bayes"),
            hp,
        )?,
        other => return Err(Error::invalid(format!("mode {} does not search weights", other.name()))),
    };
    let summary = SearchSummary {
        best_objective: result.best_objective,
        budget_used: result.budget_used,
        validation_quarter: valid_q,
    };
    Ok((result, summary))
}

/// A fold's fitted feature pipeline, training matrix and model.
pub struct TrainedFold {
    pub featurizer: Featurizer,
    pub matrix: FeatureMatrix,
    pub model: Ensemble,
}

/// Fits features and the model on the rows of `train_rows`.
pub fn train_on_rows(
    data: &LabeledDataset,
    train_rows: &[usize],
    weights: Option<&ClassWeights>,
    config: &BacktestConfig,
    feature_seed: u64,
) -> Result<TrainedFold> {
    let (featurizer, matrix) = Featurizer::fit(&config.features, data, train_rows, feature_seed)?;
    let model = match weights {
        Some(w) => imbalance::train_weighted(&matrix, w, &config.hyperparams)?,
        None => gbdt::fit(&matrix, &vec![1.0; matrix.n_rows], &config.hyperparams)?,
    };
    Ok(TrainedFold {
        featurizer,
        matrix,
        model,
    })
}

/// Trains the model of one fold, given its class weights.
pub fn train_fold(
    data: &LabeledDataset,
    fold: &Fold,
    weights: Option<&ClassWeights>,
    config: &BacktestConfig,
) -> Result<TrainedFold> {
    let rows = rows_in(data, &fold.train);
    if rows.is_empty() {
        return Err(Error::invalid(format!("fold {}: no training rows in {}", fold.index, fold.train)));
    }
    train_on_rows(data, &rows, weights, config, fold_seed(config, fold.index, "features"))
}

/// Weights for every fold, searching where the mode and scope require it.
pub(crate) fn fold_weights(
    data: &LabeledDataset,
    plan: &FoldPlan,
    config: &BacktestConfig,
) -> Result<Vec<(Option<ClassWeights>, Option<SearchSummary>)>> {
    match config.mode {
        WeightsMode::None => Ok(vec![(None, None); plan.folds.len()]),
        WeightsMode::Fixed => Ok(vec![(config.fixed_weights, None); plan.folds.len()]),
        WeightsMode::Grid | WeightsMode::Bayes => match config.scope {
            WeightScope::PerSegment => {
                let Some(first) = plan.folds.first() else { return Ok(Vec::new()) };
                let (result, summary) = search_weights(data, &first.train, config, 0)?;
                Ok(vec![(Some(result.best), Some(summary)); plan.folds.len()])
            }
            WeightScope::PerFold => plan
                .folds
                .par_iter()
                .map(|f| search_weights(data, &f.train, config, f.index).map(|(r, s)| (Some(r.best), Some(s))))
                .collect(),
        },
    }
}

fn run_fold(
    data: &LabeledDataset,
    fold: &Fold,
    weights: Option<ClassWeights>,
    search: Option<SearchSummary>,
    config: &BacktestConfig,
) -> Result<(FoldResult, Option<Ensemble>)> {
    let train_rows = rows_in(data, &fold.train);
    let test_rows = rows_in(data, &fold.test);
    let mut result = FoldResult {
        fold: *fold,
        n_train: train_rows.len(),
        n_test: test_rows.len(),
        weights,
        search,
        model_hash: None,
        metrics: None,
        skipped: None,
    };
    if train_rows.is_empty() {
        result.skipped = Some(format!("no training rows in {}", fold.train));
        return Ok((result, None));
    }
    if test_rows.is_empty() {
        result.skipped = Some(format!("no test rows in {}", fold.test));
        return Ok((result, None));
    }
    let trained = train_on_rows(data, &train_rows, weights.as_ref(), config, fold_seed(config, fold.index, "features"))?;
    let test = trained.featurizer.transform(data, &test_rows)?;
    let probs = gbdt::predict_proba(&trained.model, &test)?;
    result.metrics = Some(full_report(&test.labels, &probs)?);
    result.model_hash = Some(trained.model.hash());
    Ok((result, Some(trained.model)))
}

/// Runs every fold of `plan` on one segment and averages the scored folds.
pub fn run_backtest(data: &LabeledDataset, plan: &FoldPlan, config: &BacktestConfig) -> Result<BacktestReport> {
    run_backtest_with_models(data, plan, config).map(|(r, _)| r)
}

/// [`run_backtest`], also returning each scored fold's model.
pub fn run_backtest_with_models(
    data: &LabeledDataset,
    plan: &FoldPlan,
    config: &BacktestConfig,
) -> Result<(BacktestReport, Vec<Option<Ensemble>>)> {
    config.validate()?;
    plan.check()?;
    let weights = fold_weights(data, plan, config)?;
    let fingerprint = crate::features::schema_for(&data.attributes, &config.features)?.fingerprint();
    let outcomes: Vec<(FoldResult, Option<Ensemble>)> = plan
        .folds
        .par_iter()
        .zip(weights)
        .map(|(fold, (w, s))| run_fold(data, fold, w, s, config))
        .collect::<Result<_>>()?;
    let (folds, models): (Vec<FoldResult>, Vec<Option<Ensemble>>) = outcomes.into_iter().unzip();
    let reports: Vec<&MetricReport> = folds.iter().filter_map(|f| f.metrics.as_ref()).collect();
    let averages = Averages::of(&reports);
    let report = BacktestReport {
        segment: data.segment.clone(),
        mode: config.mode,
        scope: config.scope,
        hyperparams: config.hyperparams.clone(),
        objective: config.objective,
        fingerprint,
        plan: plan.clone(),
        folds,
        averages,
    };
    Ok((report, models))
}

/// One fold's leakage check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub fold: usize,
    pub full_hash: String,
    pub truncated_hash: String,
}

impl AuditEntry {
    pub fn identical(&self) -> bool {
        self.full_hash == self.truncated_hash
    }
}

/// For every fold, retrains after deleting all rows dated in or after the
/// fold's test span (weights re-derived as well) and records both model
/// hashes. Identical hashes mean no fitted statistic saw test-span data.
pub fn leakage_audit(data: &LabeledDataset, plan: &FoldPlan, config: &BacktestConfig) -> Result<Vec<AuditEntry>> {
    config.validate()?;
    let full_weights = fold_weights(data, plan, config)?;
    plan.folds
        .par_iter()
        .zip(full_weights)
        .filter(|(f, _)| !rows_in(data, &f.train).is_empty())
        .map(|(fold, (w, _))| {
            let full = train_fold(data, fold, w.as_ref(), config)?;
            let cutoff = fold.test.first.first_day();
            let truncated = data.filtered(|e| e.snapshot.record_date < cutoff);
            let w_trunc = match (config.mode, config.scope) {
                (WeightsMode::Grid | WeightsMode::Bayes, WeightScope::PerFold) => {
                    Some(search_weights(&truncated, &fold.train, config, fold.index)?.0.best)
                }
                (WeightsMode::Grid | WeightsMode::Bayes, WeightScope::PerSegment) => {
                    Some(search_weights(&truncated, &plan.folds[0].train, config, 0)?.0.best)
                }
                _ => w,
            };
            let trunc = train_fold(&truncated, fold, w_trunc.as_ref(), config)?;
            Ok(AuditEntry {
                fold: fold.index,
                full_hash: full.model.hash(),
                truncated_hash: trunc.model.hash(),
            })
        })
        .collect()
}
