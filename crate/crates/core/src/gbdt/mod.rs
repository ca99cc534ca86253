//! Multi-class gradient-boosted decision trees.
//!
//! Each boosting iteration computes softmax probabilities from the current
//! raw scores, then fits one regression tree per class on that class's
//! gradients and diagonal Hessians. Trees grow leaf-wise on quantile-binned
//! features: the leaf whose best split gains the most is split next, with
//!
//! ```text
//! gain  = GL^2/(HL + l2) + GR^2/(HR + l2) - G^2/(H + l2)
//! value = -learning_rate * G/(H + l2)
//! ```
//!
//! Sample weights are relative: `fit` rescales them to mean 1, so `l2_reg`
//! and the minimum-hessian guard keep the same meaning whatever the weight
//! scale, and any constant weight vector trains exactly the unweighted model.
//! Nothing in training is random.

mod binning;
mod io;
pub mod loss;
mod tree;

pub use binning::FeatureBins;
pub use io::{dump_text, MODEL_MAGIC, MODEL_VERSION};
pub use loss::{softmax, softmax_grad_hess};
pub use tree::{Node, Tree};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::NUM_CLASSES;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use tree::{BinnedData, GrowParams};

/// Floor applied to class frequencies before taking logs for base scores.
pub const FREQUENCY_FLOOR: f64 = 1e-12;

/// Leaves must carry at least this much Hessian mass.
pub const MIN_SUM_HESSIAN: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoostingType {
    Standard,
}

/// Provenance of the sample weights. `External` marks weights supplied by
/// the class-weight optimizer; `fit` applies whatever weights it is given
/// either way.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeightMode {
    None,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub num_iterations: usize,
    pub learning_rate: f64,
    pub num_leaves: usize,
    pub min_data_in_leaf: usize,
    pub max_bin: usize,
    pub l2_reg: f64,
    pub boosting_type: BoostingType,
    pub class_weight: ClassWeightMode,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            num_iterations: 100,
            learning_rate: 0.1,
            num_leaves: 31,
            min_data_in_leaf: 20,
            max_bin: 255,
            l2_reg: 1.0,
            boosting_type: BoostingType::Standard,
            class_weight: ClassWeightMode::None,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("hyperparams: {m}")));
        if self.num_iterations == 0 {
            return bad("num_iterations must be positive");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if self.num_leaves < 2 {
            return bad("num_leaves must be at least 2");
        }
        if self.min_data_in_leaf == 0 {
            return bad("min_data_in_leaf must be positive");
        }
        if !(2..=256).contains(&self.max_bin) {
            return bad("max_bin must be in 2..=256");
        }
        if !(self.l2_reg.is_finite() && self.l2_reg >= 0.0) {
            return bad("l2_reg must be non-negative");
        }
        Ok(())
    }
}

/// Fitted model: per-class tree sequences over a fixed feature schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub hyperparams: Hyperparams,
    pub fingerprint: String,
    pub feature_names: Vec<String>,
    pub base_scores: [f64; NUM_CLASSES],
    pub trees: [Vec<Tree>; NUM_CLASSES],
    /// Weighted mean cross-entropy on the training rows after each iteration.
    pub training_loss: Vec<f64>,
}

impl Ensemble {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn raw_scores(&self, row: &[f64]) -> [f64; NUM_CLASSES] {
        std::array::from_fn(|k| {
            self.base_scores[k] + self.trees[k].iter().map(|t| t.predict(row)).sum::<f64>()
        })
    }

    /// Bytes of the versioned binary model format.
    pub fn to_bytes(&self) -> Vec<u8> {
        io::encode(self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        io::decode(bytes)
    }

    /// Hex SHA-256 of the binary model.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }
}

fn normalized_weights(weights: &[f64]) -> Vec<f64> {
    // Dividing by the max first makes any constant vector exactly 1.0.
    let max = weights.iter().copied().fold(0.0, f64::max);
    let scaled: Vec<f64> = weights.iter().map(|w| w / max).collect();
    let mean = scaled.iter().sum::<f64>() / scaled.len() as f64;
    scaled.into_iter().map(|w| w / mean).collect()
}

pub fn fit(matrix: &FeatureMatrix, weights: &[f64], hp: &Hyperparams) -> Result<Ensemble> {
    hp.validate()?;
    let n = matrix.n_rows;
    let m = matrix.n_cols();
    if n == 0 || m == 0 {
        return Err(Error::invalid("cannot fit on an empty matrix"));
    }
    if weights.len() != n {
        return Err(Error::invalid(format!("{} weights for {n} rows", weights.len())));
    }
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
        return Err(Error::invalid(format!("sample weight {w} is not positive")));
    }
    if matrix.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("feature matrix holds a non-finite value"));
    }
    if n < hp.min_data_in_leaf {
        return Err(Error::invalid(format!(
            "{n} rows is fewer than min_data_in_leaf = {}",
            hp.min_data_in_leaf
        )));
    }
    let weights = normalized_weights(weights);
    let labels: Vec<usize> = matrix.labels.iter().map(|c| c.index()).collect();

    let feature_bins: Vec<FeatureBins> = (0..m)
        .into_par_iter()
        .map(|j| {
            let column: Vec<f64> = (0..n).map(|i| matrix.values[i * m + j]).collect();
            FeatureBins::fit(&column, hp.max_bin)
        })
        .collect();
    let data = BinnedData::new(&matrix.values, n, m, &feature_bins);

    let total_w: f64 = weights.iter().sum();
    let mut class_w = [0.0; NUM_CLASSES];
    for (&y, &w) in labels.iter().zip(&weights) {
        class_w[y] += w;
    }
    let base_scores: [f64; NUM_CLASSES] =
        std::array::from_fn(|k| (class_w[k] / total_w).max(FREQUENCY_FLOOR).ln());

    let params = GrowParams {
        num_leaves: hp.num_leaves,
        min_data_in_leaf: hp.min_data_in_leaf,
        min_sum_hessian: MIN_SUM_HESSIAN,
        l2_reg: hp.l2_reg,
        learning_rate: hp.learning_rate,
    };
    let mut scores: Vec<[f64; NUM_CLASSES]> = vec![base_scores; n];
    let mut trees: [Vec<Tree>; NUM_CLASSES] = std::array::from_fn(|_| Vec::with_capacity(hp.num_iterations));
    let mut training_loss = Vec::with_capacity(hp.num_iterations);
    let mut grad: Vec<Vec<f64>> = vec![vec![0.0; n]; NUM_CLASSES];
    let mut hess: Vec<Vec<f64>> = vec![vec![0.0; n]; NUM_CLASSES];

    for _ in 0..hp.num_iterations {
        for i in 0..n {
            let (g, h) = softmax_grad_hess(&scores[i], labels[i], weights[i]);
            for k in 0..NUM_CLASSES {
                grad[k][i] = g[k];
                hess[k][i] = h[k];
            }
        }
        let grown: Vec<tree::Grown> = (0..NUM_CLASSES)
            .into_par_iter()
            .map(|k| tree::grow(&data, &grad[k], &hess[k], &params))
            .collect();
        for (k, g) in grown.into_iter().enumerate() {
            for &(start, end, value) in &g.leaves {
                for &r in &g.rows[start..end] {
                    scores[r as usize][k] += value;
                }
            }
            trees[k].push(g.tree);
        }
        let loss: f64 = scores
            .iter()
            .zip(&labels)
            .zip(&weights)
            .map(|((s, &y), &w)| loss::cross_entropy(s, y, w))
            .sum::<f64>()
            / total_w;
        training_loss.push(loss);
    }

    Ok(Ensemble {
        hyperparams: hp.clone(),
        fingerprint: matrix.fingerprint.clone(),
        feature_names: matrix.column_names(),
        base_scores,
        trees,
        training_loss,
    })
}

pub fn predict_proba(ensemble: &Ensemble, matrix: &FeatureMatrix) -> Result<Vec<[f64; NUM_CLASSES]>> {
    if matrix.fingerprint != ensemble.fingerprint {
        return Err(Error::Schema(format!(
            "feature schema {} does not match the model's {}",
            short(&matrix.fingerprint),
            short(&ensemble.fingerprint)
        )));
    }
    Ok((0..matrix.n_rows)
        .into_par_iter()
        .map(|i| softmax(&ensemble.raw_scores(matrix.row(i))))
        .collect())
}

fn short(fp: &str) -> &str {
    &fp[..fp.len().min(12)]
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature: String,
    pub splits: u64,
}

/// Number of internal nodes using each feature, over all trees, in feature
/// order.
pub fn feature_importance(ensemble: &Ensemble) -> Vec<FeatureImportance> {
    let mut counts = vec![0u64; ensemble.n_features()];
    for tree in ensemble.trees.iter().flatten() {
        for node in &tree.nodes {
            if let Node::Split { feature, .. } = node {
                counts[*feature as usize] += 1;
            }
        }
    }
    ensemble
        .feature_names
        .iter()
        .zip(counts)
        .map(|(f, splits)| FeatureImportance {
            feature: f.clone(),
            splits,
        })
        .collect()
}
