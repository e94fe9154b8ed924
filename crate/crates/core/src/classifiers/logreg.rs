//! Multinomial logistic regression trained by full-batch gradient descent.

use serde::{Deserialize, Serialize};

use super::ClassifierError;
use crate::dataset::Dataset;

/// Weight matrix (classes x features) and per-class bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogregFit {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl LogregFit {
    pub fn zeros(n_classes: usize, n_features: usize) -> Self {
        Self { weights: vec![vec![0.0; n_features]; n_classes], bias: vec![0.0; n_classes] }
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(w, b)| b + w.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>())
            .collect()
    }
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Mean softmax cross-entropy plus `l2 / 2 * ||W||^2` (bias unpenalized),
/// and its exact gradient in the same shape as `fit`.
pub fn logreg_loss_grad(fit: &LogregFit, ds: &Dataset, l2: f64) -> Result<(f64, LogregFit), ClassifierError> {
    let k = fit.bias.len();
    let d = ds.n_features();
    if fit.weights.len() != k || fit.weights.iter().any(|w| w.len() != d) {
        return Err(ClassifierError::ShapeMismatch(format!(
            "weights must be {k} x {d} for this dataset"
        )));
    }
    if k < ds.n_classes() {
        return Err(ClassifierError::ShapeMismatch(format!(
            "{k} weight rows for {} classes",
            ds.n_classes()
        )));
    }
    if !(l2 >= 0.0) {
        return Err(ClassifierError::InvalidParams("l2 must be non-negative".into()));
    }
    let n = ds.n_rows() as f64;
    let mut grad = LogregFit::zeros(k, d);
    let mut loss = 0.0;
    for (x, &y) in ds.rows().iter().zip(ds.labels()) {
        let z = fit.logits(x);
        let lse = log_sum_exp(&z);
        loss += lse - z[y];
        for c in 0..k {
            let residual = (z[c] - lse).exp() - if c == y { 1.0 } else { 0.0 };
            grad.bias[c] += residual;
            for (g, xi) in grad.weights[c].iter_mut().zip(x) {
                *g += residual * xi;
            }
        }
    }
    loss /= n;
    let mut penalty = 0.0;
    for (gw, w) in grad.weights.iter_mut().zip(&fit.weights) {
        for (g, wi) in gw.iter_mut().zip(w) {
            *g = *g / n + l2 * wi;
            penalty += wi * wi;
        }
    }
    grad.bias.iter_mut().for_each(|g| *g /= n);
    Ok((loss + 0.5 * l2 * penalty, grad))
}

/// Upper bound on the gradient's Lipschitz constant:
/// `0.5 * mean(||x||^2 + 1) + l2`, since the softmax Hessian is bounded by
/// half the identity.
pub fn smoothness_bound(ds: &Dataset, l2: f64) -> f64 {
    let n = ds.n_rows() as f64;
    let sq: f64 = ds.rows().iter().map(|x| 1.0 + x.iter().map(|v| v * v).sum::<f64>()).sum();
    0.5 * sq / n + l2
}

/// Step size actually used: the requested rate, capped at `1 / L` so every
/// step decreases the loss.
pub fn effective_learning_rate(ds: &Dataset, learning_rate: f64, l2: f64) -> f64 {
    learning_rate.min(1.0 / smoothness_bound(ds, l2))
}

pub fn fit(ds: &Dataset, learning_rate: f64, l2: f64, iters: usize) -> LogregFit {
    fit_with_trace(ds, learning_rate, l2, iters).0
}

/// Trains from zero weights; also returns the loss before each step and
/// after the last.
pub fn fit_with_trace(ds: &Dataset, learning_rate: f64, l2: f64, iters: usize) -> (LogregFit, Vec<f64>) {
    let k = ds.n_classes();
    let d = ds.n_features();
    let lr = effective_learning_rate(ds, learning_rate, l2);
    let mut fit = LogregFit::zeros(k, d);
    let mut trace = Vec::with_capacity(iters + 1);
    for _ in 0..iters {
        let (loss, grad) = logreg_loss_grad(&fit, ds, l2).expect("shapes built from ds");
        trace.push(loss);
        for (w, g) in fit.weights.iter_mut().zip(&grad.weights) {
            for (wi, gi) in w.iter_mut().zip(g) {
                *wi -= lr * gi;
            }
        }
        for (b, g) in fit.bias.iter_mut().zip(&grad.bias) {
            *b -= lr * g;
        }
    }
    trace.push(logreg_loss_grad(&fit, ds, l2).expect("shapes built from ds").0);
    (fit, trace)
}
