mod common;

use rand::Rng;

use tender_risk::features::FeatureMatrix;
use tender_risk::gbdt::{feature_importance, fit, predict_proba, Ensemble, Node, Hyperparams};

use common::*;

fn hp(iterations: usize) -> Hyperparams {
    Hyperparams {
        num_iterations: iterations,
        ..Hyperparams::default()
    }
}

/// Walks each tree's node array directly and accumulates raw scores.
fn oracle_scores(model: &Ensemble, row: &[f64]) -> [f64; 4] {
    std::array::from_fn(|k| {
        let mut total = model.base_scores[k];
        for tree in &model.trees[k] {
            let mut at = 0usize;
            loop {
                match &tree.nodes[at] {
                    Node::Leaf { value, .. } => {
                        total += value;
                        break;
                    }
                    Node::Split { feature, threshold, left, right, .. } => {
                        let next = if row[*feature as usize] > *threshold { right } else { left };
                        at = *next as usize;
                    }
                }
            }
        }
        total
    })
}

fn argmax(x: &[f64; 4]) -> usize {
    (0..4).fold(0, |best, k| if x[k] > x[best] { k } else { best })
}

#[test]
fn argmax_matches_tree_walk_oracle() {
    let data = blobs(800, 6, 2.5, 41);
    let model = fit(&data, &vec![1.0; data.n_rows], &hp(40)).unwrap();
    let probe = blobs(100, 6, 3.0, 42);
    let probs = predict_proba(&model, &probe).unwrap();
    for i in 0..probe.n_rows {
        assert_eq!(argmax(&probs[i]), argmax(&oracle_scores(&model, probe.row(i))), "row {i}");
    }
}

#[test]
fn probabilities_sum_to_one_on_random_rows() {
    let data = blobs(600, 5, 2.0, 43);
    let model = fit(&data, &vec![1.0; data.n_rows], &hp(30)).unwrap();
    let mut r = rng(44);
    let rows: Vec<Vec<f64>> = (0..10_000).map(|_| (0..5).map(|_| r.random_range(-20.0..20.0)).collect()).collect();
    let names = ["x0", "x1", "x2", "x3", "x4"];
    let m = FeatureMatrix::from_rows(&names, &rows, vec![tender_risk::domain::OutcomeClass::Win; rows.len()]).unwrap();
    for p in predict_proba(&model, &m).unwrap() {
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn noise_features_are_split_on_less_than_signal() {
    for seed in 0..10 {
        // columns 4 and 5 carry no class information
        let data = blobs(600, 6, 2.0, 100 + seed);
        let model = fit(&data, &vec![1.0; data.n_rows], &hp(20)).unwrap();
        let imp = feature_importance(&model);
        let top = imp[..4].iter().map(|f| f.splits).max().unwrap();
        let noise = imp[4..].iter().map(|f| f.splits).max().unwrap();
        assert!(noise < top, "seed {seed}: noise {noise} vs top {top}");
        let internal: usize = model.trees.iter().flatten().map(|t| t.split_count()).sum();
        assert_eq!(imp.iter().map(|f| f.splits).sum::<u64>(), internal as u64);
    }
}

#[test]
fn more_leaves_fit_at_least_as_well() {
    let data = blobs(1000, 6, 2.5, 45);
    let w = vec![1.0; data.n_rows];
    let wide = fit(&data, &w, &Hyperparams { num_leaves: 31, ..hp(20) }).unwrap();
    let stump = fit(&data, &w, &Hyperparams { num_leaves: 2, ..hp(20) }).unwrap();
    assert!(wide.training_loss.last().unwrap() <= stump.training_loss.last().unwrap());
    assert!(wide.trees.iter().flatten().all(|t| t.leaf_count() <= 31));
    assert!(stump.trees.iter().flatten().all(|t| t.leaf_count() <= 2));
}

#[test]
fn thread_count_does_not_change_the_model() {
    let data = blobs(1500, 8, 2.0, 46);
    let weights: Vec<f64> = (0..data.n_rows).map(|i| 1.0 + (i % 3) as f64).collect();
    let train = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| fit(&data, &weights, &hp(25)).unwrap().to_bytes())
    };
    let one = train(1);
    assert_eq!(one, train(4));
    assert_eq!(one, train(8));
    let back = Ensemble::from_bytes(&one).unwrap();
    assert_eq!(back.to_bytes(), one);
}
