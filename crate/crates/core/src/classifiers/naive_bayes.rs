//! Gaussian naive Bayes, evaluated in log space.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{ClassifierError, FittedPayload, ModelFamily, TrainedModel};
use crate::dataset::Dataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NbFit {
    pub priors: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
}

/// Variance floor: `smoothing * max_j var_j` over the whole training set.
/// When every feature is constant that maximum is zero and the floor falls
/// back to `smoothing` itself.
pub fn variance_floor(ds: &Dataset, smoothing: f64) -> f64 {
    let n = ds.n_rows() as f64;
    let mut max_var = 0.0f64;
    for j in 0..ds.n_features() {
        let col = ds.column(j);
        let m = col.iter().sum::<f64>() / n;
        let v = col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
        max_var = max_var.max(v);
    }
    if max_var > 0.0 {
        smoothing * max_var
    } else {
        smoothing
    }
}

pub fn fit(ds: &Dataset, smoothing: f64) -> NbFit {
    let k = ds.n_classes();
    let d = ds.n_features();
    let floor = variance_floor(ds, smoothing);
    let counts = ds.class_counts();
    let mut means = vec![vec![0.0; d]; k];
    for (x, &y) in ds.rows().iter().zip(ds.labels()) {
        for (m, v) in means[y].iter_mut().zip(x) {
            *m += v;
        }
    }
    for (c, m) in means.iter_mut().enumerate() {
        m.iter_mut().for_each(|v| *v /= counts[c] as f64);
    }
    let mut variances = vec![vec![0.0; d]; k];
    for (x, &y) in ds.rows().iter().zip(ds.labels()) {
        for ((s, v), m) in variances[y].iter_mut().zip(x).zip(&means[y]) {
            *s += (v - m) * (v - m);
        }
    }
    for (c, var) in variances.iter_mut().enumerate() {
        var.iter_mut().for_each(|v| *v = (*v / counts[c] as f64).max(floor));
    }
    let n = ds.n_rows() as f64;
    let priors = counts.iter().map(|&c| c as f64 / n).collect();
    NbFit { priors, means, variances }
}

impl NbFit {
    /// `ln P(c) + sum_j ln N(x_j; mu_cj, var_cj)` per class.
    pub fn log_joint(&self, x: &[f64]) -> Vec<f64> {
        self.priors
            .iter()
            .zip(self.means.iter().zip(&self.variances))
            .map(|(&p, (mu, var))| {
                let ll: f64 = x
                    .iter()
                    .zip(mu.iter().zip(var))
                    .map(|(&xi, (&m, &v))| -0.5 * (2.0 * PI * v).ln() - (xi - m) * (xi - m) / (2.0 * v))
                    .sum();
                p.ln() + ll
            })
            .collect()
    }

    pub fn posterior(&self, x: &[f64]) -> Vec<f64> {
        let lj = self.log_joint(x);
        let m = lj.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = lj.iter().map(|v| (v - m).exp()).collect();
        let z: f64 = w.iter().sum();
        w.into_iter().map(|v| v / z).collect()
    }
}

/// Class posterior for an already masked and standardized vector.
pub fn nb_class_posterior(model: &TrainedModel, x: &[f64]) -> Result<Vec<f64>, ClassifierError> {
    match &model.fitted {
        FittedPayload::GaussianNb(fit) => {
            if x.len() != model.mask.count() {
                return Err(ClassifierError::ArityMismatch { expected: model.mask.count(), found: x.len() });
            }
            Ok(fit.posterior(x))
        }
        _ => Err(ClassifierError::WrongFamily { expected: ModelFamily::GaussianNb, found: model.family }),
    }
}
