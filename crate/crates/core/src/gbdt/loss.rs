//! Weighted softmax cross-entropy and its diagonal second-order terms.

use crate::domain::NUM_CLASSES;

pub const HESSIAN_FLOOR: f64 = 1e-16;

pub fn softmax(scores: &[f64; NUM_CLASSES]) -> [f64; NUM_CLASSES] {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: [f64; NUM_CLASSES] = std::array::from_fn(|k| (scores[k] - max).exp());
    let total: f64 = exps.iter().sum();
    std::array::from_fn(|k| exps[k] / total)
}

/// `log(sum(exp(scores)))`, stabilized.
pub fn log_sum_exp(scores: &[f64; NUM_CLASSES]) -> f64 {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln()
}

/// `weight * -log(softmax(scores)[label])`.
pub fn cross_entropy(scores: &[f64; NUM_CLASSES], label: usize, weight: f64) -> f64 {
    weight * (log_sum_exp(scores) - scores[label])
}

/// Gradient and diagonal Hessian of the weighted cross-entropy with respect
/// to the raw scores:
///
/// `g_k = w (p_k - [k = y])`, `h_k = max(w p_k (1 - p_k), 1e-16)`.
pub fn softmax_grad_hess(
    scores: &[f64; NUM_CLASSES],
    label: usize,
    weight: f64,
) -> ([f64; NUM_CLASSES], [f64; NUM_CLASSES]) {
    let p = softmax(scores);
    let grad = std::array::from_fn(|k| weight * (p[k] - if k == label { 1.0 } else { 0.0 }));
    let hess = std::array::from_fn(|k| (weight * p[k] * (1.0 - p[k])).max(HESSIAN_FLOOR));
    (grad, hess)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_scores() {
        let (g, h) = softmax_grad_hess(&[0.0; 4], 0, 1.0);
        assert_eq!(g, [-0.75, 0.25, 0.25, 0.25]);
        assert_eq!(h, [0.1875; 4]);
    }

    #[test]
    fn linear_in_weight() {
        let s = [0.3, -1.2, 2.0, 0.1];
        let (g1, h1) = softmax_grad_hess(&s, 2, 1.0);
        let (g2, h2) = softmax_grad_hess(&s, 2, 2.0);
        for k in 0..4 {
            assert_eq!(g2[k], 2.0 * g1[k]);
            assert_eq!(h2[k], 2.0 * h1[k]);
        }
    }

    #[test]
    fn hessian_floor_applies() {
        let (_, h) = softmax_grad_hess(&[800.0, 0.0, 0.0, 0.0], 0, 1.0);
        assert_eq!(h[0], HESSIAN_FLOOR);
        assert!(h.iter().all(|&x| x >= HESSIAN_FLOOR));
    }

    // Central differences of the loss itself, independent of the closed form.
    #[test]
    fn finite_difference_agreement() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100 {
            let s: [f64; 4] = std::array::from_fn(|_| rng.random_range(-3.0..3.0));
            let y = rng.random_range(0..4);
            let w = rng.random_range(0.1..3.0);
            let (g, h) = softmax_grad_hess(&s, y, w);
            let eps = 1e-5;
            for k in 0..4 {
                let mut up = s;
                let mut dn = s;
                up[k] += eps;
                dn[k] -= eps;
                let fd = (cross_entropy(&up, y, w) - cross_entropy(&dn, y, w)) / (2.0 * eps);
                assert!((fd - g[k]).abs() <= 1e-6 * g[k].abs().max(1e-3), "grad {k}: {fd} vs {}", g[k]);
                let (gu, _) = softmax_grad_hess(&up, y, w);
                let (gd, _) = softmax_grad_hess(&dn, y, w);
                let fd2 = (gu[k] - gd[k]) / (2.0 * eps);
                assert!((fd2 - h[k]).abs() <= 1e-6 * h[k].abs().max(1e-3), "hess {k}: {fd2} vs {}", h[k]);
            }
        }
    }
}
