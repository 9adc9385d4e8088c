//! Weighted L2-regularized logistic regression over sparse TF-IDF
//! features, trained by full-batch gradient descent.

use serde::{Deserialize, Serialize};

use super::layers::sigmoid;
use super::BinaryWeights;
use crate::error::{Error, Result};
use crate::features::FeatureVector;

/// Convergence threshold on the gradient infinity norm.
pub const GRAD_TOL: f64 = 1e-6;
/// Iteration cap for full-batch descent.
pub const MAX_ITERS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticRegression {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Iterations actually run and the final gradient infinity norm.
    pub iterations: usize,
    pub final_grad_norm: f64,
}

impl LogisticRegression {
    pub fn predict_proba(&self, x: &FeatureVector) -> f64 {
        sigmoid(x.dot(&self.weights) + self.bias)
    }

    pub fn predict(&self, x: &FeatureVector) -> u8 {
        if self.predict_proba(x) >= 0.5 {
            1
        } else {
            0
        }
    }
}

/// The full objective: mean weighted BCE plus (l2/2) * ||w||^2 with the
/// bias unregularized. Exposed for the finite-difference tests.
pub fn logreg_objective(
    xs: &[FeatureVector],
    ys: &[u8],
    class_weights: BinaryWeights,
    l2: f64,
    w: &[f64],
    b: f64,
) -> f64 {
    let n = xs.len() as f64;
    let mut loss = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        let p = sigmoid(x.dot(w) + b).clamp(super::PROB_CLAMP, 1.0 - super::PROB_CLAMP);
        let yf = y as f64;
        loss -= class_weights.of(y) * (yf * p.ln() + (1.0 - yf) * (1.0 - p).ln());
    }
    loss / n + 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>()
}

/// Analytic gradient of [`logreg_objective`]; returns (dw, db).
pub fn logreg_gradient(
    xs: &[FeatureVector],
    ys: &[u8],
    class_weights: BinaryWeights,
    l2: f64,
    w: &[f64],
    b: f64,
) -> (Vec<f64>, f64) {
    let n = xs.len() as f64;
    let mut dw = vec![0.0; w.len()];
    let mut db = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        let p = sigmoid(x.dot(w) + b);
        let err = class_weights.of(y) * (p - y as f64) / n;
        for &(i, v) in &x.pairs {
            dw[i] += err * v;
        }
        db += err;
    }
    for (dwi, wi) in dw.iter_mut().zip(w) {
        *dwi += l2 * wi;
    }
    (dw, db)
}

fn inf_norm(dw: &[f64], db: f64) -> f64 {
    dw.iter().fold(db.abs(), |acc, v| acc.max(v.abs()))
}

/// Trains from zero initialization until the gradient infinity norm drops
/// below 1e-6 or 10,000 iterations pass. The step size adapts
/// deterministically: grow by 5% after an improving step, halve and retry
/// after a worsening one.
pub fn train_logreg(
    xs: &[FeatureVector],
    ys: &[u8],
    class_weights: BinaryWeights,
    l2: f64,
) -> Result<LogisticRegression> {
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(Error::EmptyInput(format!(
            "{} feature vectors vs {} labels",
            xs.len(),
            ys.len()
        )));
    }
    let dim = xs[0].dim;
    if xs.iter().any(|x| x.dim != dim) {
        return Err(Error::DimMismatch("inconsistent feature dimensions".into()));
    }
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut lr = 1.0;
    let mut loss = logreg_objective(xs, ys, class_weights, l2, &w, b);
    let mut iterations = 0;
    let mut grad_norm = f64::INFINITY;
    for iter in 0..MAX_ITERS {
        iterations = iter + 1;
        let (dw, db) = logreg_gradient(xs, ys, class_weights, l2, &w, b);
        grad_norm = inf_norm(&dw, db);
        if grad_norm < GRAD_TOL {
            iterations = iter;
            break;
        }
        let prev = loss;
        let w_prev = w.clone();
        let b_prev = b;
        loop {
            for (wi, di) in w.iter_mut().zip(&dw) {
                *wi -= lr * di;
            }
            b -= lr * db;
            loss = logreg_objective(xs, ys, class_weights, l2, &w, b);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    iter,
                    detail: format!("loss {loss} at lr {lr}"),
                });
            }
            if loss <= prev || lr < 1e-30 {
                break;
            }
            // undo and retry with a smaller step
            w.copy_from_slice(&w_prev);
            b = b_prev;
            lr *= 0.5;
        }
        lr *= 1.05;
    }
    Ok(LogisticRegression {
        weights: w,
        bias: b,
        iterations,
        final_grad_norm: grad_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sparse(dense: &[f64]) -> FeatureVector {
        FeatureVector {
            pairs: dense
                .iter()
                .enumerate()
                .filter(|(_, &v)| v != 0.0)
                .map(|(i, &v)| (i, v))
                .collect(),
            dim: dense.len(),
        }
    }

    #[test]
    fn separable_points_are_fit_perfectly() {
        let xs = vec![sparse(&[1.0, 0.0]), sparse(&[0.0, 1.0])];
        let ys = vec![0u8, 1u8];
        let model = train_logreg(&xs, &ys, BinaryWeights::UNIT, 0.0).unwrap();
        assert_eq!(model.predict(&xs[0]), 0);
        assert_eq!(model.predict(&xs[1]), 1);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        // random 5x8 problem with nonzero weights and bias
        let xs: Vec<FeatureVector> = (0..5)
            .map(|_| {
                let dense: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
                sparse(&dense)
            })
            .collect();
        let ys: Vec<u8> = (0..5).map(|_| rng.random_range(0..2)).collect();
        let w: Vec<f64> = (0..8).map(|_| rng.random_range(-0.5..0.5)).collect();
        let b: f64 = rng.random_range(-0.5..0.5);
        let cw = BinaryWeights { w0: 0.8, w1: 1.3 };
        let l2 = 0.1;
        let (dw, db) = logreg_gradient(&xs, &ys, cw, l2, &w, b);
        let h = 1e-5;
        let mut max_rel: f64 = 0.0;
        for i in 0..8 {
            let mut wp = w.clone();
            wp[i] += h;
            let up = logreg_objective(&xs, &ys, cw, l2, &wp, b);
            wp[i] = w[i] - h;
            let down = logreg_objective(&xs, &ys, cw, l2, &wp, b);
            let numeric = (up - down) / (2.0 * h);
            let rel = (dw[i] - numeric).abs() / dw[i].abs().max(numeric.abs()).max(1e-8);
            max_rel = max_rel.max(rel);
        }
        let up = logreg_objective(&xs, &ys, cw, l2, &w, b + h);
        let down = logreg_objective(&xs, &ys, cw, l2, &w, b - h);
        let numeric = (up - down) / (2.0 * h);
        let rel = (db - numeric).abs() / db.abs().max(numeric.abs()).max(1e-8);
        max_rel = max_rel.max(rel);
        assert!(max_rel < 1e-5, "max relative error {max_rel}");
    }

    #[test]
    fn identical_labels_push_bias_toward_majority() {
        // strong l2 pins the weights near zero; only the bias can express
        // the all-positive prior
        let xs = vec![sparse(&[0.3]), sparse(&[-0.2]), sparse(&[0.1])];
        let ys = vec![1u8, 1, 1];
        let model = train_logreg(&xs, &ys, BinaryWeights::UNIT, 100.0).unwrap();
        assert!(model.bias > 0.0);
        // brute-force 1-D scan over the bias agrees on the sign
        let mut best_b = 0.0;
        let mut best = f64::INFINITY;
        for k in -400..=400 {
            let b = k as f64 * 0.05;
            let loss = logreg_objective(&xs, &ys, BinaryWeights::UNIT, 100.0, &[0.0], b);
            if loss < best {
                best = loss;
                best_b = b;
            }
        }
        assert!(best_b > 0.0);
        assert_eq!(model.bias > 0.0, best_b > 0.0);

        let ys = vec![0u8, 0, 0];
        let model = train_logreg(&xs, &ys, BinaryWeights::UNIT, 100.0).unwrap();
        assert!(model.bias < 0.0);
    }

    #[test]
    fn converged_gradient_is_small() {
        let xs = vec![
            sparse(&[1.0, 0.2]),
            sparse(&[0.9, 0.1]),
            sparse(&[0.1, 1.0]),
            sparse(&[0.0, 0.8]),
        ];
        let ys = vec![0u8, 0, 1, 1];
        let model = train_logreg(&xs, &ys, BinaryWeights::UNIT, 0.5).unwrap();
        assert!(
            model.final_grad_norm < GRAD_TOL,
            "grad norm {}",
            model.final_grad_norm
        );
        assert!(model.iterations < MAX_ITERS);
    }

    #[test]
    fn class_weights_shift_the_boundary() {
        // one ambiguous point at the origin with conflicting copies
        let xs = vec![sparse(&[0.0]), sparse(&[0.0])];
        let ys = vec![0u8, 1];
        let up = train_logreg(&xs, &ys, BinaryWeights { w0: 1.0, w1: 4.0 }, 1.0).unwrap();
        let down = train_logreg(&xs, &ys, BinaryWeights { w0: 4.0, w1: 1.0 }, 1.0).unwrap();
        assert!(up.predict_proba(&xs[0]) > 0.5);
        assert!(down.predict_proba(&xs[0]) < 0.5);
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(train_logreg(&[], &[], BinaryWeights::UNIT, 0.0).is_err());
    }
}
