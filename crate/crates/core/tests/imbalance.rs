mod common;

use rand::Rng;

use tender_risk::domain::OutcomeClass;
use tender_risk::gbdt::{fit, Hyperparams};
use tender_risk::imbalance::{
    bayes_opt_with, compositions, grid_search_with, sample_weights, train_weighted, ClassWeights, RAW_MAX, RAW_MIN,
};

use common::*;

const TARGET: [f64; 4] = [0.4, 0.3, 0.2, 0.1];

fn bowl(w: &ClassWeights) -> tender_risk::Result<f64> {
    let n = w.normalized();
    Ok(-(0..4).map(|k| (n[k] - TARGET[k]).powi(2)).sum::<f64>())
}

#[test]
fn composition_counts_match_brute_force() {
    for r in 4..=10usize {
        let mut brute = Vec::new();
        for a in 1..=r {
            for b in 1..=r {
                for c in 1..=r {
                    for d in 1..=r {
                        if a + b + c + d == r {
                            brute.push([a, b, c, d]);
                        }
                    }
                }
            }
        }
        assert_eq!(compositions(r), brute, "r = {r}");
    }
    assert_eq!(compositions(4), vec![[1, 1, 1, 1]]);
    assert_eq!(compositions(8).len(), 35);
}

#[test]
fn coarsest_grid_is_the_uniform_vector() {
    let result = grid_search_with(4, bowl).unwrap();
    assert_eq!(result.trace.len(), 1);
    assert_eq!(result.best.normalized(), ClassWeights::uniform().normalized());
    let fine = grid_search_with(8, bowl).unwrap();
    assert_eq!(fine.trace.len(), 35);
    let uniform = bowl(&ClassWeights::uniform()).unwrap();
    assert!(fine.best_objective >= uniform);
    assert_eq!(fine.best_objective, fine.trace.iter().map(|t| t.objective).fold(f64::NEG_INFINITY, f64::max));
}

#[test]
fn bayes_beats_random_search_on_a_known_bowl() {
    let mut wins = 0;
    for seed in 0..10u64 {
        let bayes = bayes_opt_with(30, seed, bowl).unwrap();
        let running = bayes.running_best();
        assert!(running.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(*running.last().unwrap(), bayes.best_objective);

        let mut r = rng(1000 + seed);
        let random_best = (0..30)
            .map(|_| {
                let raw = std::array::from_fn(|_| r.random_range(RAW_MIN..RAW_MAX));
                bowl(&ClassWeights::new(raw).unwrap()).unwrap()
            })
            .fold(f64::NEG_INFINITY, f64::max);
        if bayes.best_objective >= random_best {
            wins += 1;
        }
    }
    assert!(wins >= 8, "Bayesian search beat random search in only {wins}/10 seeds");
}

#[test]
fn searches_are_deterministic() {
    let a = bayes_opt_with(20, 3, bowl).unwrap();
    let b = bayes_opt_with(20, 3, bowl).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.trace_csv(), b.trace_csv());
    let c = bayes_opt_with(20, 4, bowl).unwrap();
    assert_ne!(a.trace, c.trace);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    assert_eq!(pool.install(|| grid_search_with(8, bowl).unwrap()), grid_search_with(8, bowl).unwrap());
}

#[test]
fn uniform_weights_on_balanced_data_train_the_unweighted_model() {
    let data = blobs(800, 5, 2.0, 51);
    let hp = Hyperparams {
        num_iterations: 20,
        ..Hyperparams::default()
    };
    let weighted = train_weighted(&data, &ClassWeights::uniform(), &hp).unwrap();
    let plain = fit(&data, &vec![1.0; data.n_rows], &hp).unwrap();
    assert_eq!(weighted.to_bytes(), plain.to_bytes());
    let doubled = train_weighted(&data, &ClassWeights::new([0.2, 0.2, 0.2, 0.2]).unwrap(), &hp).unwrap();
    let halved = train_weighted(&data, &ClassWeights::new([0.1, 0.1, 0.1, 0.1]).unwrap(), &hp).unwrap();
    assert_eq!(doubled.to_bytes(), halved.to_bytes());
}

#[test]
fn uniform_weights_balance_class_frequencies() {
    // 60 / 25 / 10 / 5 split
    let counts = [60, 25, 10, 5];
    let labels: Vec<OutcomeClass> = (0..4).flat_map(|k| std::iter::repeat_n(OutcomeClass::ALL[k], counts[k])).collect();
    let w = sample_weights(&labels, &ClassWeights::uniform()).unwrap();
    let first = |k: usize| w[labels.iter().position(|l| l.index() == k).unwrap()];
    for k in 1..4 {
        let ratio = first(k) / first(0);
        assert!((ratio - counts[0] as f64 / counts[k] as f64).abs() < 1e-12, "class {k}: {ratio}");
    }
    // each class carries the same total weight
    for k in 0..4 {
        let total: f64 = labels.iter().zip(&w).filter(|(l, _)| l.index() == k).map(|(_, v)| v).sum();
        assert!((total - 25.0).abs() < 1e-9, "class {k}: {total}");
    }
}
