//! Gaussian-process surrogate with a Matérn-5/2 kernel and expected
//! improvement, on inputs in the unit box.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

const LENGTH_SCALES: [f64; 12] = [0.05, 0.08, 0.12, 0.18, 0.25, 0.35, 0.5, 0.7, 1.0, 1.4, 2.0, 3.0];
const SIGNAL_VARIANCES: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];
const NOISE_VARIANCES: [f64; 7] = [1e-6, 1e-4, 1e-3, 1e-2, 0.05, 0.1, 0.3];
const VARIANCE_FLOOR: f64 = 1e-12;

fn matern52(a: &[f64], b: &[f64], length: f64, signal: f64) -> f64 {
    let r = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let s = 5f64.sqrt() * r / length;
    signal * (1.0 + s + s * s / 3.0) * (-s).exp()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel {
    pub length: f64,
    pub signal: f64,
    pub noise: f64,
}

pub struct GaussianProcess {
    x: Vec<Vec<f64>>,
    kernel: Kernel,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    y_mean: f64,
    y_std: f64,
}

fn gram(x: &[Vec<f64>], k: &Kernel) -> DMatrix<f64> {
    let n = x.len();
    DMatrix::from_fn(n, n, |i, j| {
        matern52(&x[i], &x[j], k.length, k.signal) + if i == j { k.noise } else { 0.0 }
    })
}

fn log_marginal(chol: &Cholesky<f64, Dyn>, y: &DVector<f64>) -> (f64, DVector<f64>) {
    let alpha = chol.solve(y);
    let log_det: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
    let n = y.len() as f64;
    let lml = -0.5 * y.dot(&alpha) - log_det - 0.5 * n * (2.0 * std::f64::consts::PI).ln();
    (lml, alpha)
}

impl GaussianProcess {
    /// Fits on observations; outputs are standardized and the kernel is
    /// chosen by maximizing the log marginal likelihood over a fixed grid
    /// (first maximum in grid order wins).
    pub fn fit(x: &[Vec<f64>], y: &[f64]) -> Option<GaussianProcess> {
        let n = y.len();
        if n == 0 {
            return None;
        }
        let y_mean = y.iter().sum::<f64>() / n as f64;
        let var = y.iter().map(|v| (v - y_mean) * (v - y_mean)).sum::<f64>() / n as f64;
        let y_std = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        let ys = DVector::from_iterator(n, y.iter().map(|v| (v - y_mean) / y_std));

        let mut best: Option<(f64, Kernel, Cholesky<f64, Dyn>, DVector<f64>)> = None;
        for &length in &LENGTH_SCALES {
            for &signal in &SIGNAL_VARIANCES {
                for &noise in &NOISE_VARIANCES {
                    let kernel = Kernel { length, signal, noise };
                    let Some(chol) = Cholesky::new(gram(x, &kernel)) else { continue };
                    let (lml, alpha) = log_marginal(&chol, &ys);
                    if lml.is_finite() && best.as_ref().is_none_or(|b| lml > b.0) {
                        best = Some((lml, kernel, chol, alpha));
                    }
                }
            }
        }
        let (_, kernel, chol, alpha) = best?;
        Some(GaussianProcess {
            x: x.to_vec(),
            kernel,
            chol,
            alpha,
            y_mean,
            y_std,
        })
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    /// Posterior mean and standard deviation of the latent function, in the
    /// original output units.
    pub fn predict(&self, p: &[f64]) -> (f64, f64) {
        let k = &self.kernel;
        let ks = DVector::from_iterator(self.x.len(), self.x.iter().map(|xi| matern52(xi, p, k.length, k.signal)));
        let mean = ks.dot(&self.alpha);
        let v = self.chol.l().solve_lower_triangular(&ks).expect("Cholesky factor is invertible");
        let var = (k.signal - v.dot(&v)).max(VARIANCE_FLOOR);
        (self.y_mean + self.y_std * mean, self.y_std * var.sqrt())
    }

    /// Expected improvement over `best` for maximization, with exploration
    /// margin `xi` in standardized units.
    pub fn expected_improvement(&self, p: &[f64], best: f64, xi: f64) -> f64 {
        let (mu, sigma) = self.predict(p);
        let improve = mu - best - xi * self.y_std;
        let z = improve / sigma;
        (improve * normal_cdf(z) + sigma * normal_pdf(z)).max(0.0)
    }
}

fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2)
}
