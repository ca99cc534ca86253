//! One-vs-rest multi-class metrics.
//!
//! Precision, recall and F1 are computed per class on the binary "class k vs
//! the rest" problem and combined with support weights, so weighted recall is
//! identically the accuracy. ROC AUC is computed per class from that class's
//! probability column and combined with an unweighted (macro) mean over the
//! classes for which it is defined.

use serde::{Deserialize, Serialize};

use crate::domain::{OutcomeClass, NUM_CLASSES};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BinaryConfusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl BinaryConfusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// Number of true members of the class.
    pub fn support(&self) -> u64 {
        self.tp + self.fn_
    }
}

/// Per-class one-vs-rest confusion counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OvrConfusion {
    pub classes: [BinaryConfusion; NUM_CLASSES],
}

impl OvrConfusion {
    pub fn new(y_true: &[OutcomeClass], y_pred: &[OutcomeClass]) -> Result<Self> {
        check_aligned(y_true.len(), y_pred.len())?;
        let mut classes = [BinaryConfusion::default(); NUM_CLASSES];
        for (&t, &p) in y_true.iter().zip(y_pred) {
            for (k, c) in classes.iter_mut().enumerate() {
                match (t.index() == k, p.index() == k) {
                    (true, true) => c.tp += 1,
                    (false, true) => c.fp += 1,
                    (true, false) => c.fn_ += 1,
                    (false, false) => c.tn += 1,
                }
            }
        }
        Ok(OvrConfusion { classes })
    }
}

fn check_aligned(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::invalid(format!("length mismatch: {a} labels vs {b} predictions")));
    }
    Ok(())
}

pub fn ovr_confusion(y_true: &[OutcomeClass], y_pred: &[OutcomeClass], class: OutcomeClass) -> Result<BinaryConfusion> {
    Ok(OvrConfusion::new(y_true, y_pred)?.classes[class.index()])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when any of the three hit 0/0 and was reported as 0.
    pub zero_division: bool,
}

fn ratio(num: f64, den: f64, flag: &mut bool) -> f64 {
    if den == 0.0 {
        *flag = true;
        0.0
    } else {
        num / den
    }
}

pub fn prf1(c: &BinaryConfusion) -> Prf1 {
    let mut zero_division = false;
    let precision = ratio(c.tp as f64, (c.tp + c.fp) as f64, &mut zero_division);
    let recall = ratio(c.tp as f64, (c.tp + c.fn_) as f64, &mut zero_division);
    let f1 = ratio(2.0 * precision * recall, precision + recall, &mut zero_division);
    Prf1 {
        precision,
        recall,
        f1,
        zero_division,
    }
}

/// Support-weighted mean.
pub fn weighted_average(values: &[f64; NUM_CLASSES], supports: &[u64; NUM_CLASSES]) -> Result<f64> {
    let total: u64 = supports.iter().sum();
    if total == 0 {
        return Err(Error::invalid("weighted average over zero total support"));
    }
    let sum: f64 = values
        .iter()
        .zip(supports)
        .map(|(v, &s)| v * s as f64)
        .sum();
    Ok(sum / total as f64)
}

/// Rank-based (Mann-Whitney) ROC AUC. Tied scores share their average rank,
/// which credits each tied positive/negative pair with one half. Returns
/// `None` when `truth` lacks positives or negatives.
pub fn roc_auc(scores: &[f64], truth: &[bool]) -> Result<Option<f64>> {
    check_aligned(truth.len(), scores.len())?;
    let positives = truth.iter().filter(|&&t| t).count();
    let negatives = truth.len() - positives;
    if positives == 0 || negatives == 0 {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut positive_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j share their mean
        let mean_rank = (i + 1 + j) as f64 / 2.0;
        let tied_positives = order[i..j].iter().filter(|&&r| truth[r]).count();
        positive_rank_sum += mean_rank * tied_positives as f64;
        i = j;
    }
    let p = positives as f64;
    let n = negatives as f64;
    let u = positive_rank_sum - p * (p + 1.0) / 2.0;
    Ok(Some(u / (p * n)))
}

/// Unweighted mean of the defined per-class AUCs.
pub fn macro_auc(class_auc: &[Option<f64>; NUM_CLASSES]) -> Option<f64> {
    let present: Vec<f64> = class_auc.iter().flatten().copied().collect();
    if present.is_empty() {
        None
    } else {
        Some(present.iter().sum::<f64>() / present.len() as f64)
    }
}

pub fn argmax(row: &[f64; NUM_CLASSES]) -> OutcomeClass {
    let mut best = 0;
    for k in 1..NUM_CLASSES {
        if row[k] > row[best] {
            best = k;
        }
    }
    OutcomeClass::ALL[best]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub n: u64,
    pub accuracy: f64,
    /// Support-weighted one-vs-rest precision, recall and F1.
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Unweighted means over classes occurring in truth or predictions.
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    /// Unweighted mean of the defined per-class AUCs.
    pub macro_auc: Option<f64>,
    pub per_class: [ClassMetrics; NUM_CLASSES],
    pub confusion: OvrConfusion,
    /// Classes whose precision, recall or F1 hit 0/0.
    pub zero_division_classes: Vec<usize>,
    /// Classes with undefined AUC (absent from, or the only class in, truth).
    pub auc_undefined_classes: Vec<usize>,
}

impl MetricReport {
    pub fn class_auc(&self) -> [Option<f64>; NUM_CLASSES] {
        std::array::from_fn(|k| self.per_class[k].auc)
    }
}

pub fn full_report(y_true: &[OutcomeClass], probabilities: &[[f64; NUM_CLASSES]]) -> Result<MetricReport> {
    check_aligned(y_true.len(), probabilities.len())?;
    if y_true.is_empty() {
        return Err(Error::invalid("metric report over zero rows"));
    }
    for (i, row) in probabilities.iter().enumerate() {
        let sum: f64 = row.iter().sum();
        if !row.iter().all(|p| p.is_finite()) || (sum - 1.0).abs() > 1e-6 {
            return Err(Error::invalid(format!("probability row {i} sums to {sum}")));
        }
    }
    let y_pred: Vec<OutcomeClass> = probabilities.iter().map(argmax).collect();
    let confusion = OvrConfusion::new(y_true, &y_pred)?;
    let n = y_true.len() as u64;
    let correct: u64 = confusion.classes.iter().map(|c| c.tp).sum();

    let mut zero_division_classes = Vec::new();
    let mut auc_undefined_classes = Vec::new();
    let mut per_class: Vec<ClassMetrics> = Vec::with_capacity(NUM_CLASSES);
    for k in 0..NUM_CLASSES {
        let c = &confusion.classes[k];
        let m = prf1(c);
        if m.zero_division {
            zero_division_classes.push(k);
        }
        let scores: Vec<f64> = probabilities.iter().map(|r| r[k]).collect();
        let truth: Vec<bool> = y_true.iter().map(|t| t.index() == k).collect();
        let auc = roc_auc(&scores, &truth)?;
        if auc.is_none() {
            auc_undefined_classes.push(k);
        }
        per_class.push(ClassMetrics {
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
            support: c.support(),
            auc,
        });
    }
    let per_class: [ClassMetrics; NUM_CLASSES] = per_class.try_into().expect("four classes");
    let supports: [u64; NUM_CLASSES] = std::array::from_fn(|k| per_class[k].support);
    let pick = |f: fn(&ClassMetrics) -> f64| -> [f64; NUM_CLASSES] { std::array::from_fn(|k| f(&per_class[k])) };

    let occurring: Vec<usize> = (0..NUM_CLASSES)
        .filter(|&k| confusion.classes[k].support() > 0 || confusion.classes[k].tp + confusion.classes[k].fp > 0)
        .collect();
    let macro_of = |v: [f64; NUM_CLASSES]| occurring.iter().map(|&k| v[k]).sum::<f64>() / occurring.len() as f64;

    let class_auc: [Option<f64>; NUM_CLASSES] = std::array::from_fn(|k| per_class[k].auc);
    Ok(MetricReport {
        n,
        accuracy: correct as f64 / n as f64,
        precision: weighted_average(&pick(|c| c.precision), &supports)?,
        recall: weighted_average(&pick(|c| c.recall), &supports)?,
        f1: weighted_average(&pick(|c| c.f1), &supports)?,
        macro_precision: macro_of(pick(|c| c.precision)),
        macro_recall: macro_of(pick(|c| c.recall)),
        macro_f1: macro_of(pick(|c| c.f1)),
        macro_auc: macro_auc(&class_auc),
        per_class,
        confusion,
        zero_division_classes,
        auc_undefined_classes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use OutcomeClass::*;

    fn classes(v: &[usize]) -> Vec<OutcomeClass> {
        v.iter().map(|&i| OutcomeClass::ALL[i]).collect()
    }

    #[test]
    fn confusion_examples() {
        let y = classes(&[0, 1, 2, 3]);
        let c = ovr_confusion(&y, &y, Win).unwrap();
        assert_eq!((c.tp, c.fp, c.tn, c.fn_), (1, 0, 3, 0));
        let c = ovr_confusion(&classes(&[0, 0, 1]), &classes(&[1, 0, 1]), Win).unwrap();
        assert_eq!((c.tp, c.fp, c.tn, c.fn_), (1, 0, 1, 1));
        assert!(ovr_confusion(&classes(&[0]), &classes(&[0, 1]), Win).is_err());
    }

    #[test]
    fn prf1_examples() {
        let perfect = prf1(&BinaryConfusion { tp: 1, fp: 0, tn: 3, fn_: 0 });
        assert_eq!((perfect.precision, perfect.recall, perfect.f1), (1.0, 1.0, 1.0));
        assert!(!perfect.zero_division);

        let none = prf1(&BinaryConfusion { tp: 0, fp: 0, tn: 3, fn_: 2 });
        assert_eq!(none.precision, 0.0);
        assert!(none.zero_division);

        let m = prf1(&BinaryConfusion { tp: 3, fp: 1, tn: 0, fn_: 2 });
        assert!((m.precision - 0.75).abs() < 1e-15);
        assert!((m.recall - 0.6).abs() < 1e-15);
        assert!((m.f1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn weighted_average_examples() {
        assert_eq!(weighted_average(&[1.0; 4], &[3, 0, 9, 1]).unwrap(), 1.0);
        let plain = weighted_average(&[0.1, 0.2, 0.3, 0.4], &[5; 4]).unwrap();
        assert!((plain - 0.25).abs() < 1e-15);
        assert!(weighted_average(&[1.0; 4], &[0; 4]).is_err());
    }

    #[test]
    fn auc_extremes() {
        let truth = [false, false, true, true];
        assert_eq!(roc_auc(&[0.1, 0.2, 0.8, 0.9], &truth).unwrap(), Some(1.0));
        assert_eq!(roc_auc(&[0.9, 0.8, 0.2, 0.1], &truth).unwrap(), Some(0.0));
        assert_eq!(roc_auc(&[0.5; 4], &truth).unwrap(), Some(0.5));
        assert_eq!(roc_auc(&[0.5; 3], &[true; 3]).unwrap(), None);
    }

    #[test]
    fn table_macro_auc() {
        let a = macro_auc(&[Some(0.9988), Some(0.8238), Some(0.8663), Some(0.8738)]).unwrap();
        assert!((a - 0.890675).abs() < 1e-12);
        let b = macro_auc(&[Some(0.9996), Some(0.9281), Some(0.9063), Some(0.9167)]).unwrap();
        assert!((b - 0.937675).abs() < 1e-12);
        assert_eq!(macro_auc(&[Some(0.5), None, Some(1.0), None]), Some(0.75));
    }

    #[test]
    fn report_flags_absent_class() {
        let y = classes(&[0, 0, 1, 1]);
        let p = vec![
            [0.7, 0.1, 0.1, 0.1],
            [0.4, 0.3, 0.2, 0.1],
            [0.2, 0.6, 0.1, 0.1],
            [0.5, 0.3, 0.1, 0.1],
        ];
        let r = full_report(&y, &p).unwrap();
        assert_eq!(r.auc_undefined_classes, vec![2, 3]);
        // class 0: 3 of 4 pairs ordered; class 1: 3 ordered + 1 tie
        assert_eq!(r.macro_auc, Some((0.75 + 0.875) / 2.0));
        assert_eq!(r.accuracy, 0.75);
        assert_eq!(r.zero_division_classes, vec![2, 3]);
    }

    #[test]
    fn report_rejects_unnormalized_rows() {
        let y = classes(&[0]);
        assert!(full_report(&y, &[[0.5, 0.1, 0.1, 0.1]]).is_err());
        assert!(full_report(&[], &[]).is_err());
    }

    proptest! {
        #[test]
        fn weighted_recall_is_accuracy(rows in proptest::collection::vec((0usize..4, proptest::array::uniform4(0.01f64..1.0)), 1..200)) {
            let y: Vec<OutcomeClass> = rows.iter().map(|(t, _)| OutcomeClass::ALL[*t]).collect();
            let p: Vec<[f64; 4]> = rows.iter().map(|(_, w)| {
                let s: f64 = w.iter().sum();
                std::array::from_fn(|k| w[k] / s)
            }).collect();
            let r = full_report(&y, &p).unwrap();
            prop_assert!((r.recall - r.accuracy).abs() <= 1e-12);
            for c in &r.confusion.classes {
                prop_assert_eq!(c.total(), y.len() as u64);
            }
        }

        #[test]
        fn auc_invariant_under_monotone_transform(
            rows in proptest::collection::vec((any::<bool>(), 0.0f64..1.0), 2..60)
        ) {
            let truth: Vec<bool> = rows.iter().map(|r| r.0).collect();
            let s: Vec<f64> = rows.iter().map(|r| (r.1 * 8.0).round() / 8.0).collect();
            let t: Vec<f64> = s.iter().map(|x| (3.0 * x).exp() - 7.0).collect();
            prop_assert_eq!(roc_auc(&s, &truth).unwrap(), roc_auc(&t, &truth).unwrap());
        }
    }
}
