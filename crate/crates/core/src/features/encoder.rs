//! Ordered target encoding with category clustering.
//!
//! Training rows are visited in a seeded random order. A row's encoding for
//! class `k` is
//!
//! ```text
//! (earlier same-category rows of class k + a * prior_k) / (earlier same-category rows + a)
//! ```
//!
//! so it never depends on its own label or on any later row. Rows encoded
//! after fitting use the full training counts. Categories are further
//! grouped into clusters by 1-D k-means on the Win component of their final
//! encoding, which yields a small one-hot block.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::domain::{OutcomeClass, NUM_CLASSES};
use crate::error::{Error, Result};

const KMEANS_MAX_ITER: usize = 100;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CategoryCounts {
    pub by_class: [u64; NUM_CLASSES],
    pub total: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderedTargetEncoder {
    pub prior_strength: f64,
    pub prior: [f64; NUM_CLASSES],
    pub counts: BTreeMap<String, CategoryCounts>,
    pub cluster_count: usize,
    /// Cluster centers on the Win component, ascending.
    pub centers: Vec<f64>,
    pub clusters: BTreeMap<String, usize>,
}

fn encode_counts(c: &CategoryCounts, prior: &[f64; NUM_CLASSES], a: f64) -> [f64; NUM_CLASSES] {
    std::array::from_fn(|k| (c.by_class[k] as f64 + a * prior[k]) / (c.total as f64 + a))
}

/// Class frequencies of `labels`; uniform when empty.
pub fn class_frequencies(labels: &[OutcomeClass]) -> [f64; NUM_CLASSES] {
    if labels.is_empty() {
        return [1.0 / NUM_CLASSES as f64; NUM_CLASSES];
    }
    let mut counts = [0usize; NUM_CLASSES];
    for l in labels {
        counts[l.index()] += 1;
    }
    std::array::from_fn(|k| counts[k] as f64 / labels.len() as f64)
}

/// Fits the encoder and returns it with the ordered encodings of the
/// training rows, in input order.
pub fn fit_ordered_encoder(
    values: &[&str],
    labels: &[OutcomeClass],
    prior: [f64; NUM_CLASSES],
    seed: u64,
    prior_strength: f64,
    cluster_count: usize,
) -> Result<(OrderedTargetEncoder, Vec<[f64; NUM_CLASSES]>)> {
    if values.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} category values for {} labels",
            values.len(),
            labels.len()
        )));
    }
    if !(prior_strength.is_finite() && prior_strength > 0.0) {
        return Err(Error::invalid("encoder prior strength must be positive"));
    }
    if cluster_count == 0 {
        return Err(Error::invalid("encoder cluster count must be at least 1"));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.shuffle(&mut crate::seed::rng(seed, "features/encoder/permutation"));

    let mut counts: BTreeMap<String, CategoryCounts> = BTreeMap::new();
    let mut encoded = vec![[0.0; NUM_CLASSES]; values.len()];
    for &i in &order {
        let c = counts.entry(values[i].to_string()).or_default();
        encoded[i] = encode_counts(c, &prior, prior_strength);
        c.by_class[labels[i].index()] += 1;
        c.total += 1;
    }

    let mut enc = OrderedTargetEncoder {
        prior_strength,
        prior,
        counts,
        cluster_count,
        centers: Vec::new(),
        clusters: BTreeMap::new(),
    };
    let points: Vec<(String, f64)> = enc
        .counts
        .iter()
        .map(|(cat, c)| (cat.clone(), encode_counts(c, &enc.prior, prior_strength)[0]))
        .collect();
    let (centers, assignment) = kmeans_1d(&points.iter().map(|p| p.1).collect::<Vec<_>>(), cluster_count);
    enc.centers = centers;
    enc.clusters = points.into_iter().map(|p| p.0).zip(assignment).collect();
    Ok((enc, encoded))
}

impl OrderedTargetEncoder {
    /// Encoding of a category using all training rows.
    pub fn encode(&self, value: &str) -> [f64; NUM_CLASSES] {
        match self.counts.get(value) {
            Some(c) => encode_counts(c, &self.prior, self.prior_strength),
            None => self.prior,
        }
    }

    /// Cluster of a category; unseen categories go to the cluster nearest
    /// the prior.
    pub fn cluster_of(&self, value: &str) -> usize {
        match self.clusters.get(value) {
            Some(&c) => c,
            None => nearest(&self.centers, self.prior[0]),
        }
    }
}

fn nearest(centers: &[f64], x: f64) -> usize {
    let mut best = 0;
    for (j, c) in centers.iter().enumerate() {
        if (x - c).abs() < (x - centers[best]).abs() {
            best = j;
        }
    }
    best
}

/// Lloyd's algorithm in one dimension with quantile initialization over the
/// distinct values. Returns ascending centers (at most `k`) and each point's
/// cluster.
fn kmeans_1d(points: &[f64], k: usize) -> (Vec<f64>, Vec<usize>) {
    let mut distinct = points.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.is_empty() {
        return (Vec::new(), Vec::new());
    }
    let k = k.min(distinct.len());
    let mut centers: Vec<f64> = (0..k)
        .map(|j| distinct[((2 * j + 1) * distinct.len()) / (2 * k)])
        .collect();
    let mut assignment = vec![0usize; points.len()];
    for _ in 0..KMEANS_MAX_ITER {
        let next: Vec<usize> = points.iter().map(|&x| nearest(&centers, x)).collect();
        let mut sums = vec![(0.0, 0usize); k];
        for (&x, &c) in points.iter().zip(&next) {
            sums[c].0 += x;
            sums[c].1 += 1;
        }
        let moved: Vec<f64> = sums
            .iter()
            .zip(&centers)
            .map(|(&(s, n), &c)| if n > 0 { s / n as f64 } else { c })
            .collect();
        let stable = next == assignment && moved == centers;
        assignment = next;
        centers = moved;
        if stable {
            break;
        }
    }
    // relabel so cluster ids follow ascending centers
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| centers[a].total_cmp(&centers[b]).then(a.cmp(&b)));
    let mut rank = vec![0; k];
    for (r, &j) in order.iter().enumerate() {
        rank[j] = r;
    }
    (
        order.iter().map(|&j| centers[j]).collect(),
        assignment.into_iter().map(|c| rank[c]).collect(),
    )
}
