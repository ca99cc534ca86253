mod common;

use rand::Rng;

use tender_risk::domain::OutcomeClass;
use tender_risk::metrics::{full_report, roc_auc, OvrConfusion};

use common::*;

#[test]
fn confusion_sums_over_random_vectors() {
    let mut r = rng(61);
    for _ in 0..1000 {
        let n = r.random_range(1..100);
        let y: Vec<OutcomeClass> = (0..n).map(|_| OutcomeClass::ALL[r.random_range(0..4)]).collect();
        let p: Vec<OutcomeClass> = (0..n).map(|_| OutcomeClass::ALL[r.random_range(0..4)]).collect();
        let conf = OvrConfusion::new(&y, &p).unwrap();
        let correct = y.iter().zip(&p).filter(|(a, b)| a == b).count() as u64;
        for (k, c) in conf.classes.iter().enumerate() {
            assert_eq!(c.tp + c.fp + c.tn + c.fn_, n as u64);
            let support = y.iter().filter(|l| l.index() == k).count() as u64;
            assert_eq!(c.tp + c.fn_, support);
        }
        assert_eq!(conf.classes.iter().map(|c| c.tp).sum::<u64>(), correct);
        assert_eq!(conf.classes.iter().map(|c| c.tp + c.fn_).sum::<u64>(), n as u64);
    }
}

#[test]
fn report_values_are_bounded_and_macro_auc_is_the_mean() {
    let mut r = rng(62);
    for _ in 0..200 {
        let n = r.random_range(8..150);
        let y: Vec<OutcomeClass> = (0..n).map(|i| OutcomeClass::ALL[(i + r.random_range(0..2)) % 4]).collect();
        let probs: Vec<[f64; 4]> = (0..n)
            .map(|_| {
                let raw: [f64; 4] = std::array::from_fn(|_| r.random_range(0.01..1.0));
                let s: f64 = raw.iter().sum();
                raw.map(|v| v / s)
            })
            .collect();
        let rep = full_report(&y, &probs).unwrap();
        for v in [rep.accuracy, rep.precision, rep.recall, rep.f1, rep.macro_precision, rep.macro_recall, rep.macro_f1] {
            assert!((0.0..=1.0).contains(&v));
        }
        assert!((rep.recall - rep.accuracy).abs() <= 1e-12);
        let aucs: Vec<f64> = rep.per_class.iter().filter_map(|c| c.auc).collect();
        if aucs.len() == 4 {
            let mean = aucs.iter().sum::<f64>() / 4.0;
            assert!((rep.macro_auc.unwrap() - mean).abs() <= 1e-12);
        }
    }
}

#[test]
fn six_row_auc_matches_both_oracles() {
    let scores = [0.9, 0.8, 0.8, 0.4, 0.3, 0.3];
    let truth = [true, false, true, false, true, false];
    let auc = roc_auc(&scores, &truth).unwrap().unwrap();
    // 9 pairs: the 0.9 positive beats all three negatives, the 0.8 one
    // beats two and ties one, the 0.3 one only ties
    assert!((auc - 6.0 / 9.0).abs() < 1e-12);
    assert!((auc - auc_pairs(&scores, &truth).unwrap()).abs() < 1e-9);
    assert!((auc - auc_trapezoid(&scores, &truth).unwrap()).abs() < 1e-9);
}
