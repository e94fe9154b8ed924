//! Scoring: confusion matrices, accuracy, macro-F1 and evaluation records.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifiers::{ClassifierError, TrainedModel};
use crate::dataset::Dataset;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("{preds} predictions for {labels} labels")]
    LengthMismatch { preds: usize, labels: usize },
    #[error("class index {index} out of range for {n_classes} classes")]
    IndexOutOfRange { index: usize, n_classes: usize },
    #[error("nothing to evaluate")]
    Empty,
    #[error("dataset has {found} features, model expects {expected}")]
    ArityMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
}

/// `counts[t][p]`: examples of true class `t` predicted as `p`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn get(&self, truth: usize, predicted: usize) -> usize {
        self.counts[truth][predicted]
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> usize {
        (0..self.n_classes()).map(|c| self.counts[c][c]).sum()
    }

    pub fn row_sum(&self, truth: usize) -> usize {
        self.counts[truth].iter().sum()
    }

    pub fn col_sum(&self, predicted: usize) -> usize {
        self.counts.iter().map(|r| r[predicted]).sum()
    }
}

pub fn confusion(preds: &[usize], labels: &[usize], n_classes: usize) -> Result<ConfusionMatrix, EvalError> {
    if preds.len() != labels.len() {
        return Err(EvalError::LengthMismatch { preds: preds.len(), labels: labels.len() });
    }
    if preds.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut counts = vec![vec![0; n_classes]; n_classes];
    for (&p, &t) in preds.iter().zip(labels) {
        if let Some(&index) = [p, t].iter().find(|&&i| i >= n_classes) {
            return Err(EvalError::IndexOutOfRange { index, n_classes });
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

pub fn accuracy(cm: &ConfusionMatrix) -> f64 {
    cm.trace() as f64 / cm.total() as f64
}

/// Unweighted mean of per-class F1. Zero denominators in precision, recall
/// or F1 count as 0.
pub fn macro_f1(cm: &ConfusionMatrix) -> f64 {
    let k = cm.n_classes();
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let sum: f64 = (0..k)
        .map(|c| {
            let tp = cm.get(c, c);
            let p = ratio(tp, cm.col_sum(c));
            let r = ratio(tp, cm.row_sum(c));
            if p + r == 0.0 {
                0.0
            } else {
                2.0 * p * r / (p + r)
            }
        })
        .sum();
    sum / k as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Metric {
    #[default]
    #[serde(rename = "ACCURACY")]
    Accuracy,
    #[serde(rename = "MACRO_F1")]
    MacroF1,
}

impl Metric {
    pub fn score(self, cm: &ConfusionMatrix) -> f64 {
        match self {
            Metric::Accuracy => accuracy(cm),
            Metric::MacroF1 => macro_f1(cm),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Accuracy => "accuracy",
            Metric::MacroF1 => "macro_f1",
        })
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "accuracy" => Ok(Metric::Accuracy),
            "macro_f1" => Ok(Metric::MacroF1),
            other => Err(format!("unknown metric {other:?} (expected accuracy or macro_f1)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitName {
    Train,
    Valid,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub candidate_id: u64,
    pub split_name: SplitName,
    pub metric: Metric,
    pub score: f64,
    pub n_examples: usize,
}

pub fn predict_all(model: &TrainedModel, ds: &Dataset) -> Result<Vec<usize>, EvalError> {
    if ds.n_features() != model.n_input_features() {
        return Err(EvalError::ArityMismatch { expected: model.n_input_features(), found: ds.n_features() });
    }
    ds.rows().iter().map(|x| model.predict(x).map_err(EvalError::from)).collect()
}

/// Scores `model` on every row of `ds`.
pub fn evaluate(
    model: &TrainedModel,
    ds: &Dataset,
    metric: Metric,
    split_name: SplitName,
    candidate_id: u64,
) -> Result<EvaluationRecord, EvalError> {
    let preds = predict_all(model, ds)?;
    let cm = confusion(&preds, ds.labels(), model.n_classes)?;
    Ok(EvaluationRecord { candidate_id, split_name, metric, score: metric.score(&cm), n_examples: ds.n_rows() })
}
