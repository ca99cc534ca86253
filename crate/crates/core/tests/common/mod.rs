//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use chrono::{Days, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use tender_risk::domain::{
    AttrValue, AttributeDef, OpportunitySnapshot, OutcomeClass, SalesStageCode, SegmentKey, SnapshotDataset,
};
use tender_risk::features::FeatureMatrix;
use tender_risk::labeling::{derive_labels, LabeledDataset};
use tender_risk::synthgen::{generate_portfolio, AttributeSpec, GeneratorConfig, SegmentSpec};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Four Gaussian blobs in `dims >= 4` dimensions; blob k is centred at
/// 5 times the k-th unit vector, `spread` is the per-axis standard deviation.
pub fn blobs(n: usize, dims: usize, spread: f64, seed: u64) -> FeatureMatrix {
    assert!(dims >= 4);
    let mut r = rng(seed);
    let noise = Normal::new(0.0, spread).unwrap();
    let centers: Vec<Vec<f64>> = (0..4)
        .map(|k| (0..dims).map(|d| if d == k { 5.0 } else { 0.0 }).collect())
        .collect();
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let k = i % 4;
        rows.push(centers[k].iter().map(|c| c + noise.sample(&mut r)).collect::<Vec<f64>>());
        labels.push(OutcomeClass::ALL[k]);
    }
    let names: Vec<String> = (0..dims).map(|d| format!("x{d}")).collect();
    let names: Vec<&str> = names.iter().map(String::as_str).collect();
    FeatureMatrix::from_rows(&names, &rows, labels).unwrap()
}

/// Leave-one-out 1-nearest-neighbour accuracy, by exhaustive search.
pub fn one_nn_accuracy(m: &FeatureMatrix) -> f64 {
    let mut correct = 0;
    for i in 0..m.n_rows {
        let mut best = (f64::INFINITY, usize::MAX);
        for j in 0..m.n_rows {
            if i == j {
                continue;
            }
            let d: f64 = m.row(i).iter().zip(m.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best.0 {
                best = (d, j);
            }
        }
        if m.labels[best.1] == m.labels[i] {
            correct += 1;
        }
    }
    correct as f64 / m.n_rows as f64
}

/// AUC by counting every (positive, negative) pair; ties count one half.
pub fn auc_pairs(scores: &[f64], truth: &[bool]) -> Option<f64> {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &ti) in truth.iter().enumerate() {
        if !ti {
            continue;
        }
        for (j, &tj) in truth.iter().enumerate() {
            if tj {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    (pairs > 0.0).then(|| wins / pairs)
}

/// AUC as the trapezoidal area under the ROC curve, with one curve point per
/// distinct threshold (so tied scores form a diagonal segment).
pub fn auc_trapezoid(scores: &[f64], truth: &[bool]) -> Option<f64> {
    let p = truth.iter().filter(|&&t| t).count() as f64;
    let n = truth.len() as f64 - p;
    if p == 0.0 || n == 0.0 {
        return None;
    }
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let mut points = vec![(0.0, 0.0)];
    for t in thresholds {
        let tp = scores.iter().zip(truth).filter(|(s, &y)| **s >= t && y).count() as f64;
        let fp = scores.iter().zip(truth).filter(|(s, &y)| **s >= t && !y).count() as f64;
        points.push((fp / n, tp / p));
    }
    Some(points.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0).sum())
}

pub fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).unwrap()
}

/// Randomized opportunity histories straight from stage codes: some never
/// close, some close more than once or keep changing stage after closing.
/// Snapshots are emitted in shuffled order.
pub fn random_histories(opportunities: usize, seed: u64) -> SnapshotDataset {
    let mut r = rng(seed);
    let start = date(2017, 1, 2);
    let segments = [SegmentKey::new("BU1", "GEO1"), SegmentKey::new("BU2", "GEO2")];
    let mut snapshots = Vec::new();
    for o in 0..opportunities {
        let len = r.random_range(1..=12);
        let offset = r.random_range(0..200u64);
        let segment = segments[r.random_range(0..2)].clone();
        let mut stage = r.random_range(1..=3u8);
        let mut week = 0u64;
        for _ in 0..len {
            let code = match r.random_range(0..10) {
                // mostly walk forward through open stages
                0..=5 => {
                    stage = (stage + r.random_range(0..2)).min(6);
                    stage
                }
                6..=7 => r.random_range(7..=11),
                _ => r.random_range(1..=11),
            };
            snapshots.push(OpportunitySnapshot {
                opportunity_id: format!("OPP{o:05}"),
                record_date: start + Days::new(7 * (offset + week)),
                sales_stage: SalesStageCode::new(code).unwrap(),
                segment: segment.clone(),
                attrs: vec![AttrValue::Num(week as f64)],
            });
            week += r.random_range(1..=3);
        }
    }
    snapshots.shuffle(&mut r);
    SnapshotDataset::new(vec![AttributeDef::numeric("age")], snapshots).unwrap()
}

/// One brute-force labeled row: (opportunity id, record date, label index).
pub type OracleRow = (String, NaiveDate, usize);

/// Labels by scanning each opportunity's full history independently of the
/// library: the earliest closed snapshot (by date) decides the label of every
/// strictly earlier open snapshot.
pub fn brute_force_labels(ds: &SnapshotDataset) -> (Vec<OracleRow>, usize) {
    let mut ids: Vec<&str> = ds.snapshots.iter().map(|s| s.opportunity_id.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    let mut rows = Vec::new();
    let mut in_flight = 0;
    for id in ids {
        let history: Vec<&OpportunitySnapshot> = ds.snapshots.iter().filter(|s| s.opportunity_id == id).collect();
        let mut first_close: Option<(NaiveDate, u8)> = None;
        for s in &history {
            let code = s.sales_stage.get();
            if code >= 7 && first_close.is_none_or(|(d, _)| s.record_date < d) {
                first_close = Some((s.record_date, code));
            }
        }
        let Some((close_date, code)) = first_close else {
            in_flight += 1;
            continue;
        };
        let label = match code {
            7 | 8 => 0,
            9 => 1,
            10 => 2,
            11 => 3,
            _ => unreachable!(),
        };
        for s in &history {
            if s.record_date < close_date {
                assert!(s.sales_stage.get() <= 6, "open by construction");
                rows.push((id.to_string(), s.record_date, label));
            }
        }
    }
    rows.sort();
    (rows, in_flight)
}

/// Generator config for one segment with the given class mixture.
pub fn one_segment_config(
    seed: u64,
    opportunities: usize,
    quarters: u32,
    mixture: [f64; 4],
    signal: f64,
) -> GeneratorConfig {
    GeneratorConfig {
        seed,
        start_date: date(2017, 1, 2),
        quarters_span: quarters,
        mean_lifetime_weeks: 10.0,
        missing_rate: 0.05,
        signal_strength: signal,
        segments: vec![SegmentSpec {
            business_unit: "BU2".into(),
            geography: "GEO4".into(),
            opportunity_count: opportunities,
            class_mixture: mixture,
        }],
        attributes: GeneratorConfig::default_attributes(),
    }
}

/// Smaller attribute layout for fast end-to-end tests.
pub fn compact_attributes() -> Vec<AttributeSpec> {
    vec![
        AttributeSpec::numeric("deal_value", 2.0e6, 8.0e5, true),
        AttributeSpec::count("competitors", 2.0, 1.5, true),
        AttributeSpec::categorical("client", 60, true),
        AttributeSpec::categorical("seller", 20, true),
        AttributeSpec::categorical("product", 10, true),
        AttributeSpec::numeric("attr_00", 0.0, 1.0, true),
        AttributeSpec::numeric("attr_01", 0.0, 1.0, false),
    ]
}

/// Generates and labels a single-segment portfolio.
pub fn labeled_segment(config: &GeneratorConfig) -> LabeledDataset {
    let ds = generate_portfolio(config).unwrap();
    let mut parts: BTreeMap<SegmentKey, LabeledDataset> = derive_labels(&ds).unwrap().by_segment();
    assert_eq!(parts.len(), 1);
    parts.pop_first().unwrap().1
}
