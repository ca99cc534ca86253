//! Class weighting and the search for class weights that maximize a
//! validation metric.
//!
//! A weight vector `W` (one raw value per class, each in `(0, 1)`) is
//! normalized to `ω = W / ΣW`. The weighted loss is `Σ ω_i L_i`, with `L_i`
//! the mean cross-entropy over class `i`; the equivalent per-sample weight is
//! `ω_i / π_i` (π the training class frequency), rescaled to mean 1. Uniform
//! `ω` therefore means "balanced classes", not "unweighted".
//!
//! Two searches are provided: exhaustive grid search over weight vectors
//! with components in multiples of `1/r`, and Bayesian optimization with a
//! Gaussian-process surrogate and expected improvement.

mod gp;

pub use gp::{GaussianProcess, Kernel};

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{OutcomeClass, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::gbdt::{self, loss::cross_entropy, Ensemble, Hyperparams};
use crate::metrics::{full_report, MetricReport};

/// Sample weights use the normalized weights rounded to multiples of 2^-24.
/// Scaling the raw vector perturbs `W / ΣW` only in its last bits, far below
/// this resolution, so scaled vectors train bit-identical models.
const QUANTUM_GRID: f64 = (1u64 << 24) as f64;

/// Search box for raw weights in Bayesian optimization.
pub const RAW_MIN: f64 = 0.01;
pub const RAW_MAX: f64 = 0.99;

/// Candidates drawn per expected-improvement maximization.
pub const EI_CANDIDATES: usize = 1024;
const EI_REFINE_STARTS: usize = 5;
const EI_XI: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawWeights")]
pub struct ClassWeights {
    raw: [f64; NUM_CLASSES],
    normalized: [f64; NUM_CLASSES],
    #[serde(skip_serializing)]
    quantized: [f64; NUM_CLASSES],
}

#[derive(Deserialize)]
struct RawWeights {
    raw: [f64; NUM_CLASSES],
}

impl TryFrom<RawWeights> for ClassWeights {
    type Error = Error;

    fn try_from(r: RawWeights) -> Result<Self> {
        ClassWeights::new(r.raw)
    }
}

impl ClassWeights {
    pub fn new(raw: [f64; NUM_CLASSES]) -> Result<Self> {
        if let Some(w) = raw.iter().find(|w| !(w.is_finite() && **w > 0.0 && **w < 1.0)) {
            return Err(Error::invalid(format!("raw class weight {w} is outside (0, 1)")));
        }
        let sum: f64 = raw.iter().sum();
        let normalized = raw.map(|w| w / sum);
        // grid units, each at least one; the largest absorbs the remainder so
        // that the sum is exactly 1
        let mut units = normalized.map(|w| (w * QUANTUM_GRID).round().max(1.0));
        let mut largest = 0;
        for k in 1..NUM_CLASSES {
            if units[k] > units[largest] {
                largest = k;
            }
        }
        units[largest] += QUANTUM_GRID - units.iter().sum::<f64>();
        Ok(ClassWeights {
            raw,
            normalized,
            quantized: units.map(|u| u / QUANTUM_GRID),
        })
    }

    /// Equal weights (raw 0.5 each).
    pub fn uniform() -> Self {
        ClassWeights::new([0.5; NUM_CLASSES]).expect("0.5 is a valid weight")
    }

    pub fn raw(&self) -> [f64; NUM_CLASSES] {
        self.raw
    }

    pub fn normalized(&self) -> [f64; NUM_CLASSES] {
        self.normalized
    }

    /// Normalized weights on the 2^-24 grid, summing to exactly 1; these
    /// drive the per-sample weights.
    pub fn quantized(&self) -> [f64; NUM_CLASSES] {
        self.quantized
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("weights serialize")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// `Σ ω_i L_i`.
pub fn weighted_loss(per_class: &[f64; NUM_CLASSES], weights: &ClassWeights) -> f64 {
    per_class.iter().zip(weights.normalized()).map(|(l, w)| w * l).sum()
}

/// Mean cross-entropy of the predicted probabilities within each true
/// class; 0 for classes without rows.
pub fn per_class_losses(probabilities: &[[f64; NUM_CLASSES]], labels: &[OutcomeClass]) -> [f64; NUM_CLASSES] {
    let mut sums = [0.0; NUM_CLASSES];
    let mut counts = [0usize; NUM_CLASSES];
    for (p, y) in probabilities.iter().zip(labels) {
        let scores = p.map(|v| v.max(f64::MIN_POSITIVE).ln());
        sums[y.index()] += cross_entropy(&scores, y.index(), 1.0);
        counts[y.index()] += 1;
    }
    std::array::from_fn(|k| if counts[k] > 0 { sums[k] / counts[k] as f64 } else { 0.0 })
}

/// Per-sample weights `ω_y / π_y`, rescaled to mean 1.
pub fn sample_weights(labels: &[OutcomeClass], weights: &ClassWeights) -> Result<Vec<f64>> {
    if labels.is_empty() {
        return Err(Error::invalid("no training rows to weight"));
    }
    let mut counts = [0usize; NUM_CLASSES];
    for l in labels {
        counts[l.index()] += 1;
    }
    let n = labels.len() as f64;
    let w = weights.quantized();
    let per_class: [f64; NUM_CLASSES] =
        std::array::from_fn(|k| if counts[k] > 0 { w[k] / (counts[k] as f64 / n) } else { 0.0 });
    let raw: Vec<f64> = labels.iter().map(|l| per_class[l.index()]).collect();
    let mean = raw.iter().sum::<f64>() / n;
    Ok(raw.into_iter().map(|v| v / mean).collect())
}

/// Trains `M(W)`: the boosted model with class-weighted samples.
pub fn train_weighted(train: &FeatureMatrix, weights: &ClassWeights, hp: &Hyperparams) -> Result<Ensemble> {
    gbdt::fit(train, &sample_weights(&train.labels, weights)?, hp)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Precision,
    Recall,
    F1,
    Auc,
    Accuracy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    Weighted,
    Macro,
}

/// Validation metric maximized by the weight search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObjectiveSpec {
    pub metric: Metric,
    pub averaging: Averaging,
}

impl Default for ObjectiveSpec {
    fn default() -> Self {
        ObjectiveSpec {
            metric: Metric::F1,
            averaging: Averaging::Weighted,
        }
    }
}

impl ObjectiveSpec {
    pub fn validate(&self) -> Result<()> {
        if self.metric == Metric::Auc && self.averaging == Averaging::Weighted {
            return Err(Error::InvalidConfig("AUC is only averaged as a macro mean".into()));
        }
        Ok(())
    }

    /// Value of the objective on a report. An undefined macro AUC scores 0.
    pub fn score(&self, r: &MetricReport) -> f64 {
        use Averaging::*;
        match (self.metric, self.averaging) {
            (Metric::Accuracy, _) => r.accuracy,
            (Metric::Precision, Weighted) => r.precision,
            (Metric::Precision, Macro) => r.macro_precision,
            (Metric::Recall, Weighted) => r.recall,
            (Metric::Recall, Macro) => r.macro_recall,
            (Metric::F1, Weighted) => r.f1,
            (Metric::F1, Macro) => r.macro_f1,
            (Metric::Auc, _) => r.macro_auc.unwrap_or(0.0),
        }
    }
}

/// Objective of `M(W)` on the validation rows.
pub fn evaluate(
    train: &FeatureMatrix,
    valid: &FeatureMatrix,
    weights: &ClassWeights,
    objective: &ObjectiveSpec,
    hp: &Hyperparams,
) -> Result<f64> {
    let model = train_weighted(train, weights, hp)?;
    let probs = gbdt::predict_proba(&model, valid)?;
    Ok(objective.score(&full_report(&valid.labels, &probs)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMethod {
    Grid,
    Bayes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub weights: ClassWeights,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSearchResult {
    pub method: SearchMethod,
    pub best: ClassWeights,
    pub best_objective: f64,
    /// Evaluations in the order they were made.
    pub trace: Vec<TraceEntry>,
    pub budget_used: usize,
}

impl WeightSearchResult {
    fn from_trace(method: SearchMethod, trace: Vec<TraceEntry>) -> Result<Self> {
        let mut best = trace.first().ok_or_else(|| Error::invalid("weight search made no evaluations"))?;
        for t in &trace {
            if t.objective > best.objective {
                best = t;
            }
        }
        Ok(WeightSearchResult {
            method,
            best: best.weights,
            best_objective: best.objective,
            budget_used: trace.len(),
            trace: trace.clone(),
        })
    }

    /// Running maximum of the objective along the trace.
    pub fn running_best(&self) -> Vec<f64> {
        let mut best = f64::NEG_INFINITY;
        self.trace
            .iter()
            .map(|t| {
                best = best.max(t.objective);
                best
            })
            .collect()
    }

    /// CSV: evaluation index, 4 raw weights, 4 normalized weights, objective.
    pub fn trace_csv(&self) -> String {
        let mut s = String::from("evaluation,raw0,raw1,raw2,raw3,weight0,weight1,weight2,weight3,objective\n");
        for (i, t) in self.trace.iter().enumerate() {
            let _ = write!(s, "{i}");
            for v in t.weights.raw().iter().chain(&t.weights.normalized()) {
                let _ = write!(s, ",{v}");
            }
            let _ = writeln!(s, ",{}", t.objective);
        }
        s
    }
}

/// All vectors of 4 positive integers summing to `r`, lexicographically.
pub fn compositions(r: usize) -> Vec<[usize; NUM_CLASSES]> {
    let mut out = Vec::new();
    for a in 1..r {
        for b in 1..r.saturating_sub(a) {
            for c in 1..r.saturating_sub(a + b) {
                let d = r - a - b - c;
                if d >= 1 {
                    out.push([a, b, c, d]);
                }
            }
        }
    }
    out
}

/// Grid search over an arbitrary objective. Evaluations run in parallel;
/// the trace keeps enumeration order and ties go to the earliest vector.
pub fn grid_search_with<F>(resolution: usize, objective: F) -> Result<WeightSearchResult>
where
    F: Fn(&ClassWeights) -> Result<f64> + Sync,
{
    if resolution < NUM_CLASSES {
        return Err(Error::invalid(format!(
            "grid resolution {resolution} admits no weight vector; it must be at least {NUM_CLASSES}"
        )));
    }
    let r = resolution as f64;
    let grid: Vec<ClassWeights> = compositions(resolution)
        .into_iter()
        .map(|c| ClassWeights::new(c.map(|k| k as f64 / r)))
        .collect::<Result<_>>()?;
    let trace = grid
        .par_iter()
        .map(|w| {
            Ok(TraceEntry {
                weights: *w,
                objective: objective(w)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    WeightSearchResult::from_trace(SearchMethod::Grid, trace)
}

pub fn grid_search(
    train: &FeatureMatrix,
    valid: &FeatureMatrix,
    objective: &ObjectiveSpec,
    resolution: usize,
    hp: &Hyperparams,
) -> Result<WeightSearchResult> {
    check_splits(train, valid, objective)?;
    grid_search_with(resolution, |w| evaluate(train, valid, w, objective, hp))
}

fn check_splits(train: &FeatureMatrix, valid: &FeatureMatrix, objective: &ObjectiveSpec) -> Result<()> {
    objective.validate()?;
    if valid.n_rows == 0 {
        return Err(Error::invalid("validation split is empty"));
    }
    if train.n_rows == 0 {
        return Err(Error::invalid("training split is empty"));
    }
    Ok(())
}

/// Initial space-filling design size for a budget.
pub fn initial_design_size(budget: usize) -> usize {
    (budget / 5).max(5)
}

fn to_raw(u: &[f64]) -> [f64; NUM_CLASSES] {
    std::array::from_fn(|k| RAW_MIN + (RAW_MAX - RAW_MIN) * u[k])
}

/// Latin hypercube sample of `n` points in the unit box.
fn latin_hypercube(n: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let mut points = vec![vec![0.0; NUM_CLASSES]; n];
    for d in 0..NUM_CLASSES {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        for (p, s) in points.iter_mut().zip(strata) {
            p[d] = (s as f64 + rng.random::<f64>()) / n as f64;
        }
    }
    points
}

/// Coordinate pattern search on expected improvement from `start`.
fn refine(gp: &GaussianProcess, start: &[f64], best: f64) -> (Vec<f64>, f64) {
    let mut x = start.to_vec();
    let mut fx = gp.expected_improvement(&x, best, EI_XI);
    let mut step = 0.1;
    while step > 1e-3 {
        let mut improved = false;
        for d in 0..NUM_CLASSES {
            for dir in [1.0, -1.0] {
                let mut y = x.clone();
                y[d] = (y[d] + dir * step).clamp(0.0, 1.0);
                let fy = gp.expected_improvement(&y, best, EI_XI);
                if fy > fx {
                    x = y;
                    fx = fy;
                    improved = true;
                }
            }
        }
        if !improved {
            step /= 2.0;
        }
    }
    (x, fx)
}

/// Next point to evaluate: the best of 1,024 random candidates and the
/// pattern-search refinements of the top few.
fn maximize_ei(gp: &GaussianProcess, best: f64, rng: &mut impl Rng) -> Vec<f64> {
    let candidates: Vec<Vec<f64>> = (0..EI_CANDIDATES)
        .map(|_| (0..NUM_CLASSES).map(|_| rng.random::<f64>()).collect())
        .collect();
    let mut scored: Vec<(f64, usize)> = candidates
        .iter()
        .enumerate()
        .map(|(i, c)| (gp.expected_improvement(c, best, EI_XI), i))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut winner = (candidates[scored[0].1].clone(), scored[0].0);
    for &(_, i) in scored.iter().take(EI_REFINE_STARTS) {
        let (x, fx) = refine(gp, &candidates[i], best);
        if fx > winner.1 {
            winner = (x, fx);
        }
    }
    winner.0
}

/// Bayesian optimization of an arbitrary objective over raw weights in
/// `(0.01, 0.99)^4`. Deterministic given `seed`.
pub fn bayes_opt_with<F>(budget: usize, seed: u64, mut objective: F) -> Result<WeightSearchResult>
where
    F: FnMut(&ClassWeights) -> Result<f64>,
{
    let n_init = initial_design_size(budget);
    if budget < n_init {
        return Err(Error::invalid(format!(
            "budget {budget} is smaller than the initial design of {n_init} points"
        )));
    }
    let mut rng = crate::seed::rng(seed, "imbalance/bayes");
    let mut xs: Vec<Vec<f64>> = latin_hypercube(n_init, &mut rng);
    let mut trace = Vec::with_capacity(budget);
    let mut ys = Vec::with_capacity(budget);
    for u in &xs {
        let w = ClassWeights::new(to_raw(u))?;
        let y = objective(&w)?;
        ys.push(y);
        trace.push(TraceEntry { weights: w, objective: y });
    }
    while trace.len() < budget {
        let best = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let next = match GaussianProcess::fit(&xs, &ys) {
            Some(gp) => maximize_ei(&gp, best, &mut rng),
            None => (0..NUM_CLASSES).map(|_| rng.random::<f64>()).collect(),
        };
        let w = ClassWeights::new(to_raw(&next))?;
        let y = objective(&w)?;
        xs.push(next);
        ys.push(y);
        trace.push(TraceEntry { weights: w, objective: y });
    }
    WeightSearchResult::from_trace(SearchMethod::Bayes, trace)
}

pub fn bayes_opt(
    train: &FeatureMatrix,
    valid: &FeatureMatrix,
    objective: &ObjectiveSpec,
    budget: usize,
    seed: u64,
    hp: &Hyperparams,
) -> Result<WeightSearchResult> {
    check_splits(train, valid, objective)?;
    bayes_opt_with(budget, seed, |w| evaluate(train, valid, w, objective, hp))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_weight_validation() {
        assert!(ClassWeights::new([0.0, 0.5, 0.5, 0.5]).is_err());
        assert!(ClassWeights::new([1.0, 0.5, 0.5, 0.5]).is_err());
        assert!(ClassWeights::new([f64::NAN, 0.5, 0.5, 0.5]).is_err());
        let w = ClassWeights::new([0.3, 0.2, 0.9, 0.01]).unwrap();
        assert!((w.normalized().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(w.normalized().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn weighted_loss_examples() {
        let l = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(weighted_loss(&l, &ClassWeights::uniform()), 2.5);
        let w = ClassWeights::new([0.9, 0.1, 0.1, 0.1]).unwrap();
        assert!((w.normalized()[0] - 0.75).abs() < 1e-12);
        assert!((weighted_loss(&[0.0, 12.0, 12.0, 12.0], &w) - 3.0).abs() < 1e-12);
        let half = ClassWeights::new([0.45, 0.05, 0.05, 0.05]).unwrap();
        assert_eq!(weighted_loss(&l, &half), weighted_loss(&l, &w));
    }

    #[test]
    fn ray_invariance_is_exact() {
        let mut rng = crate::seed::rng(1, "test");
        for _ in 0..1000 {
            let raw: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.02..0.45));
            let c = rng.random_range(0.1..2.0);
            let a = ClassWeights::new(raw).unwrap();
            let b = ClassWeights::new(raw.map(|v| v * c)).unwrap();
            assert_eq!(a.quantized(), b.quantized());
            assert_eq!(a.quantized().iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn sample_weight_formula() {
        use OutcomeClass::*;
        let labels = [Win, Win, Win, Win, Win, Win, NoBid, NoBid, CustomerDidNotPursue, LostToCompetition];
        let w = sample_weights(&labels, &ClassWeights::uniform()).unwrap();
        // 0.25 / π: Win 0.25/0.6, NoBid 0.25/0.2, others 0.25/0.1; mean of
        // those over rows is 1 already, since Σ_k n_k (0.25 / (n_k/n)) = n
        let expect = [0.25 / 0.6, 0.25 / 0.2, 0.25 / 0.1, 0.25 / 0.1];
        for (l, v) in labels.iter().zip(&w) {
            assert!((v - expect[l.index()]).abs() < 1e-12);
        }
        let balanced = [Win, NoBid, CustomerDidNotPursue, LostToCompetition];
        assert_eq!(sample_weights(&balanced, &ClassWeights::uniform()).unwrap(), vec![1.0; 4]);
    }

    #[test]
    fn composition_counts() {
        assert_eq!(compositions(4), vec![[1, 1, 1, 1]]);
        for r in 4..=12 {
            // stars and bars: C(r - 1, 3)
            let expect = (r - 1) * (r - 2) * (r - 3) / 6;
            let got = compositions(r);
            assert_eq!(got.len(), expect);
            assert!(got.iter().all(|c| c.iter().sum::<usize>() == r && c.iter().all(|&v| v >= 1)));
            assert!(got.windows(2).all(|w| w[0] < w[1]));
        }
        assert_eq!(compositions(8).len(), 35);
        assert!(compositions(3).is_empty());
    }

    #[test]
    fn grid_search_bookkeeping() {
        let target = [0.4, 0.3, 0.2, 0.1];
        let f = |w: &ClassWeights| -> Result<f64> {
            Ok(-w.normalized().iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        };
        let r = grid_search_with(10, f).unwrap();
        assert_eq!(r.trace.len(), 84);
        assert_eq!(r.budget_used, 84);
        assert_eq!(r.best.raw(), [0.4, 0.3, 0.2, 0.1]);
        let uniform = grid_search_with(4, f).unwrap();
        assert_eq!(uniform.best.normalized(), ClassWeights::uniform().normalized());
        assert!(grid_search_with(3, f).is_err());
        // ties go to the first vector
        let flat = grid_search_with(8, |_| Ok(1.0)).unwrap();
        assert_eq!(flat.best.raw(), [1.0 / 8.0, 1.0 / 8.0, 1.0 / 8.0, 5.0 / 8.0]);
    }

    #[test]
    fn bayes_bookkeeping() {
        let f = |w: &ClassWeights| -> Result<f64> { Ok(-(w.normalized()[0] - 0.5).powi(2)) };
        assert!(bayes_opt_with(4, 0, f).is_err());
        let r = bayes_opt_with(12, 3, f).unwrap();
        assert_eq!(r.trace.len(), 12);
        assert!(r.running_best().windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(*r.running_best().last().unwrap(), r.best_objective);
        assert_eq!(bayes_opt_with(12, 3, f).unwrap(), r);
        assert!(r.trace.iter().all(|t| t.weights.raw().iter().all(|&v| (RAW_MIN..=RAW_MAX).contains(&v))));
    }

    #[test]
    fn json_round_trip_and_validation() {
        let w = ClassWeights::new([0.2, 0.4, 0.6, 0.8]).unwrap();
        assert_eq!(ClassWeights::from_json(&w.to_json()).unwrap(), w);
        assert!(ClassWeights::from_json(r#"{"raw":[0,0.5,0.5,0.5]}"#).is_err());
    }

    #[test]
    fn trace_csv_layout() {
        let r = grid_search_with(4, |_| Ok(0.5)).unwrap();
        let csv = r.trace_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap().split(',').count(), 10);
        assert_eq!(lines.next().unwrap(), "0,0.25,0.25,0.25,0.25,0.25,0.25,0.25,0.25,0.5");
    }
}
