//! Quantile binning of feature columns.
//!
//! A feature's thresholds are strictly increasing cut points, at most
//! `max_bin - 1` of them. A value `v` falls in bin `#{t : t < v}`, so "bin
//! <= b" and "v <= thresholds[b]" describe the same rows; trees store the
//! real threshold and can score raw values. Values outside the training range
//! land in the first or last bin.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureBins {
    pub thresholds: Vec<f64>,
}

impl FeatureBins {
    /// Fits cut points on one column of training values.
    pub fn fit(values: &[f64], max_bin: usize) -> FeatureBins {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut distinct: Vec<(f64, usize)> = Vec::new();
        for v in sorted {
            match distinct.last_mut() {
                Some((last, n)) if *last == v => *n += 1,
                _ => distinct.push((v, 1)),
            }
        }
        let mut thresholds = Vec::new();
        if distinct.len() <= 1 {
            return FeatureBins { thresholds };
        }
        if distinct.len() <= max_bin {
            for w in distinct.windows(2) {
                thresholds.push(cut_between(w[0].0, w[1].0));
            }
        } else {
            // Greedy equal-frequency: close a bin once the running count
            // reaches the next quantile target.
            let n = values.len() as f64;
            let mut cumulative = 0usize;
            let mut next_target = 1usize;
            for w in distinct.windows(2) {
                cumulative += w[0].1;
                if thresholds.len() + 1 >= max_bin {
                    break;
                }
                if cumulative as f64 >= next_target as f64 * n / max_bin as f64 {
                    thresholds.push(cut_between(w[0].0, w[1].0));
                    while (next_target as f64) * n / (max_bin as f64) <= cumulative as f64 {
                        next_target += 1;
                    }
                }
            }
        }
        FeatureBins { thresholds }
    }

    pub fn n_bins(&self) -> usize {
        self.thresholds.len() + 1
    }

    pub fn bin(&self, v: f64) -> usize {
        self.thresholds.partition_point(|&t| t < v)
    }
}

/// A cut `t` with `a <= t < b`.
fn cut_between(a: f64, b: f64) -> f64 {
    let mid = a + (b - a) / 2.0;
    if mid < b {
        mid
    } else {
        a
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn few_distinct_values_get_midpoints() {
        let b = FeatureBins::fit(&[3.0, 1.0, 2.0, 2.0, 1.0], 255);
        assert_eq!(b.thresholds, vec![1.5, 2.5]);
        assert_eq!(b.bin(1.0), 0);
        assert_eq!(b.bin(1.5), 0);
        assert_eq!(b.bin(2.0), 1);
        assert_eq!(b.bin(-100.0), 0);
        assert_eq!(b.bin(100.0), 2);
    }

    #[test]
    fn constant_column_has_one_bin() {
        let b = FeatureBins::fit(&[4.0; 10], 16);
        assert_eq!(b.n_bins(), 1);
        assert_eq!(b.bin(-1.0), 0);
        assert_eq!(b.bin(10.0), 0);
    }

    #[test]
    fn adjacent_floats() {
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let bins = FeatureBins::fit(&[a, b], 4);
        assert_eq!(bins.bin(a), 0);
        assert_eq!(bins.bin(b), 1);
    }

    proptest! {
        #[test]
        fn thresholds_increasing_and_bounded(
            values in proptest::collection::vec(-1e6f64..1e6, 1..500),
            max_bin in 2usize..64,
        ) {
            let b = FeatureBins::fit(&values, max_bin);
            prop_assert!(b.n_bins() <= max_bin);
            prop_assert!(b.thresholds.windows(2).all(|w| w[0] < w[1]));
            // threshold semantics agree with bin semantics
            for &v in &values {
                let bin = b.bin(v);
                prop_assert!(bin < b.n_bins());
                for (j, &t) in b.thresholds.iter().enumerate() {
                    prop_assert_eq!(bin <= j, v <= t);
                }
            }
        }
    }
}
