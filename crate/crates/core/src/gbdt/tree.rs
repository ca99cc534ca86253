//! Regression trees grown leaf-wise on binned data.

use serde::{Deserialize, Serialize};

use super::binning::FeatureBins;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    /// Rows with `value <= threshold` (equivalently `bin <= bin`) go left.
    Split {
        feature: u32,
        bin: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        value: f64,
        count: u32,
    },
}

/// Node array with the root at index 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value, .. } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    i = if row[*feature as usize] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    pub fn split_count(&self) -> usize {
        self.nodes.len() - self.leaf_count()
    }
}

/// Row-major bin indices for the features that have more than one bin.
pub(crate) struct BinnedData<'a> {
    pub n_rows: usize,
    /// Original feature index of each active column.
    pub active: Vec<usize>,
    /// Histogram offset and bin count of each active column.
    pub offsets: Vec<usize>,
    pub n_bins: Vec<usize>,
    pub total_bins: usize,
    pub bins: Vec<u8>,
    pub feature_bins: &'a [FeatureBins],
}

impl<'a> BinnedData<'a> {
    pub fn new(values: &[f64], n_rows: usize, n_cols: usize, feature_bins: &'a [FeatureBins]) -> Self {
        let active: Vec<usize> = (0..n_cols).filter(|&j| feature_bins[j].n_bins() > 1).collect();
        let n_bins: Vec<usize> = active.iter().map(|&j| feature_bins[j].n_bins()).collect();
        let mut offsets = Vec::with_capacity(active.len());
        let mut total_bins = 0;
        for &nb in &n_bins {
            offsets.push(total_bins);
            total_bins += nb;
        }
        let m = active.len();
        let mut bins = vec![0u8; n_rows * m];
        for i in 0..n_rows {
            let row = &values[i * n_cols..(i + 1) * n_cols];
            let out = &mut bins[i * m..(i + 1) * m];
            for (slot, &j) in out.iter_mut().zip(&active) {
                *slot = feature_bins[j].bin(row[j]) as u8;
            }
        }
        BinnedData {
            n_rows,
            active,
            offsets,
            n_bins,
            total_bins,
            bins,
            feature_bins,
        }
    }
}

pub(crate) struct GrowParams {
    pub num_leaves: usize,
    pub min_data_in_leaf: usize,
    pub min_sum_hessian: f64,
    pub l2_reg: f64,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct HistBin {
    g: f64,
    h: f64,
    n: u32,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    column: usize,
    bin: usize,
    gain: f64,
    left_g: f64,
    left_h: f64,
    left_n: usize,
}

struct LeafState {
    start: usize,
    end: usize,
    g: f64,
    h: f64,
    node: usize,
    hist: Option<Vec<HistBin>>,
    best: Option<Candidate>,
}

/// A grown tree plus, for each leaf, the training rows it holds.
pub(crate) struct Grown {
    pub tree: Tree,
    pub rows: Vec<u32>,
    pub leaves: Vec<(usize, usize, f64)>,
}

fn build_hist(data: &BinnedData, rows: &[u32], grad: &[f64], hess: &[f64]) -> Vec<HistBin> {
    let mut hist = vec![HistBin::default(); data.total_bins];
    let m = data.active.len();
    for &r in rows {
        let r = r as usize;
        let (g, h) = (grad[r], hess[r]);
        let row_bins = &data.bins[r * m..(r + 1) * m];
        for (&b, &off) in row_bins.iter().zip(&data.offsets) {
            let e = &mut hist[off + b as usize];
            e.g += g;
            e.h += h;
            e.n += 1;
        }
    }
    hist
}

fn score(g: f64, h: f64, l2: f64) -> f64 {
    g * g / (h + l2)
}

/// Best split of one leaf; ties keep the lowest column, then the lowest bin.
fn best_split(data: &BinnedData, hist: &[HistBin], g: f64, h: f64, n: usize, p: &GrowParams) -> Option<Candidate> {
    let parent = score(g, h, p.l2_reg);
    let mut best: Option<Candidate> = None;
    for (col, (&off, &nb)) in data.offsets.iter().zip(&data.n_bins).enumerate() {
        let bins = &hist[off..off + nb];
        let (mut gl, mut hl, mut nl) = (0.0, 0.0, 0usize);
        for (b, e) in bins[..nb - 1].iter().enumerate() {
            gl += e.g;
            hl += e.h;
            nl += e.n as usize;
            if nl < p.min_data_in_leaf {
                continue;
            }
            if n - nl < p.min_data_in_leaf {
                break;
            }
            let (gr, hr) = (g - gl, h - hl);
            if hl < p.min_sum_hessian || hr < p.min_sum_hessian {
                continue;
            }
            let gain = score(gl, hl, p.l2_reg) + score(gr, hr, p.l2_reg) - parent;
            if gain > best.map_or(0.0, |c| c.gain) {
                best = Some(Candidate {
                    column: col,
                    bin: b,
                    gain,
                    left_g: gl,
                    left_h: hl,
                    left_n: nl,
                });
            }
        }
    }
    best
}

/// Grows one tree on all rows of `data`: repeatedly split the leaf with the
/// largest gain until `num_leaves` is reached or no split has positive gain.
pub(crate) fn grow(data: &BinnedData, grad: &[f64], hess: &[f64], p: &GrowParams) -> Grown {
    let n = data.n_rows;
    let mut rows: Vec<u32> = (0..n as u32).collect();
    let mut scratch: Vec<u32> = Vec::with_capacity(n);
    let g: f64 = grad.iter().sum();
    let h: f64 = hess.iter().sum();
    let hist = build_hist(data, &rows, grad, hess);
    let best = best_split(data, &hist, g, h, n, p);
    let mut nodes = vec![Node::Leaf { value: 0.0, count: n as u32 }];
    let mut leaves = vec![LeafState {
        start: 0,
        end: n,
        g,
        h,
        node: 0,
        hist: best.is_some().then_some(hist),
        best,
    }];

    while leaves.len() < p.num_leaves {
        let mut pick: Option<usize> = None;
        for (i, leaf) in leaves.iter().enumerate() {
            if let Some(c) = leaf.best {
                if pick.is_none_or(|j| c.gain > leaves[j].best.expect("picked leaf has split").gain) {
                    pick = Some(i);
                }
            }
        }
        let Some(i) = pick else { break };
        let cand = leaves[i].best.take().expect("picked leaf has split");
        let parent_hist = leaves[i].hist.take().expect("splittable leaf keeps its histogram");
        let LeafState {
            start,
            end,
            g: pg,
            h: ph,
            node,
            ..
        } = leaves[i];

        // stable partition of the leaf's rows
        let m = data.active.len();
        scratch.clear();
        let mut write = start;
        for k in start..end {
            let r = rows[k];
            if (data.bins[r as usize * m + cand.column] as usize) <= cand.bin {
                rows[write] = r;
                write += 1;
            } else {
                scratch.push(r);
            }
        }
        rows[write..end].copy_from_slice(&scratch);
        let mid = start + cand.left_n;
        debug_assert_eq!(write, mid);

        let (lg, lh) = (cand.left_g, cand.left_h);
        let (rg, rh) = (pg - lg, ph - lh);
        let left_n = mid - start;
        let right_n = end - mid;
        let (small_range, small_is_left) = if left_n <= right_n {
            (start..mid, true)
        } else {
            (mid..end, false)
        };
        let small_hist = build_hist(data, &rows[small_range], grad, hess);
        let mut large_hist = parent_hist;
        for (l, s) in large_hist.iter_mut().zip(&small_hist) {
            l.g -= s.g;
            l.h -= s.h;
            l.n -= s.n;
        }
        let (left_hist, right_hist) = if small_is_left {
            (small_hist, large_hist)
        } else {
            (large_hist, small_hist)
        };

        let left_node = nodes.len();
        let right_node = left_node + 1;
        let feature = data.active[cand.column];
        nodes[node] = Node::Split {
            feature: feature as u32,
            bin: cand.bin as u32,
            threshold: data.feature_bins[feature].thresholds[cand.bin],
            left: left_node as u32,
            right: right_node as u32,
        };
        nodes.push(Node::Leaf { value: 0.0, count: left_n as u32 });
        nodes.push(Node::Leaf { value: 0.0, count: right_n as u32 });

        let left_best = best_split(data, &left_hist, lg, lh, left_n, p);
        let right_best = best_split(data, &right_hist, rg, rh, right_n, p);
        leaves[i] = LeafState {
            start,
            end: mid,
            g: lg,
            h: lh,
            node: left_node,
            hist: left_best.is_some().then_some(left_hist),
            best: left_best,
        };
        leaves.push(LeafState {
            start: mid,
            end,
            g: rg,
            h: rh,
            node: right_node,
            hist: right_best.is_some().then_some(right_hist),
            best: right_best,
        });
    }

    let mut out = Vec::with_capacity(leaves.len());
    for leaf in &leaves {
        let value = -leaf.g / (leaf.h + p.l2_reg) * p.learning_rate;
        nodes[leaf.node] = Node::Leaf {
            value,
            count: (leaf.end - leaf.start) as u32,
        };
        out.push((leaf.start, leaf.end, value));
    }
    Grown {
        tree: Tree { nodes },
        rows,
        leaves: out,
    }
}
