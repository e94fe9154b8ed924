//! The classifier portfolio.
//!
//! Every family is trained through the same pipeline: project the dataset
//! by the candidate's feature mask, standardize with statistics fitted on the
//! projected training rows, then fit the family's learner. [`TrainedModel`]
//! replays the first two steps on raw input vectors at prediction time.

pub mod knn;
pub mod logreg;
pub mod naive_bayes;
pub mod tree;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{self, Dataset, DatasetError, FeatureMask, ScalerStats};
use crate::search::rng::RngStream;

pub use knn::{KnnFit, Weighting};
pub use logreg::LogregFit;
pub use naive_bayes::NbFit;
pub use tree::{Node, TreeFit};

#[derive(Debug, Error, PartialEq)]
pub enum ClassifierError {
    #[error("invalid hyperparameters: {0}")]
    InvalidParams(String),
    #[error("degenerate training data: {0}")]
    DegenerateData(String),
    #[error("input has {found} features, model expects {expected}")]
    ArityMismatch { expected: usize, found: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("operation requires a {expected} model, got {found}")]
    WrongFamily { expected: ModelFamily, found: ModelFamily },
    #[error("class counts sum to zero")]
    EmptyCounts,
    #[error("inconsistent model: {0}")]
    Inconsistent(String),
}

impl From<DatasetError> for ClassifierError {
    fn from(e: DatasetError) -> Self {
        ClassifierError::DegenerateData(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelFamily {
    #[serde(rename = "LOGREG")]
    Logreg,
    #[serde(rename = "GAUSSIAN_NB")]
    GaussianNb,
    #[serde(rename = "KNN")]
    Knn,
    #[serde(rename = "TREE")]
    Tree,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 4] =
        [ModelFamily::Logreg, ModelFamily::GaussianNb, ModelFamily::Knn, ModelFamily::Tree];

    pub fn tag(self) -> &'static str {
        match self {
            ModelFamily::Logreg => "LOGREG",
            ModelFamily::GaussianNb => "GAUSSIAN_NB",
            ModelFamily::Knn => "KNN",
            ModelFamily::Tree => "TREE",
        }
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for ModelFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "LOGREG" => Ok(ModelFamily::Logreg),
            "GAUSSIAN_NB" | "NB" => Ok(ModelFamily::GaussianNb),
            "KNN" => Ok(ModelFamily::Knn),
            "TREE" => Ok(ModelFamily::Tree),
            other => Err(format!("unknown model family {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum ParamValue {
    Real(f64),
    Int(i64),
    Cat(usize),
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Real(v) => write!(f, "{v}"),
            ParamValue::Int(v) => write!(f, "{v}"),
            ParamValue::Cat(v) => write!(f, "#{v}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct NamedValue {
    name: String,
    value: ParamValue,
}

/// Ordered (name, value) list.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "Vec<NamedValue>", into = "Vec<NamedValue>")]
pub struct HyperparamAssignment(Vec<(String, ParamValue)>);

impl From<Vec<NamedValue>> for HyperparamAssignment {
    fn from(v: Vec<NamedValue>) -> Self {
        Self(v.into_iter().map(|nv| (nv.name, nv.value)).collect())
    }
}

impl From<HyperparamAssignment> for Vec<NamedValue> {
    fn from(h: HyperparamAssignment) -> Self {
        h.0.into_iter().map(|(name, value)| NamedValue { name, value }).collect()
    }
}

impl HyperparamAssignment {
    pub fn new(values: Vec<(String, ParamValue)>) -> Self {
        Self(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &(String, ParamValue)> {
        self.0.iter()
    }

    pub fn get(&self, name: &str) -> Option<ParamValue> {
        self.0.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn real(&self, name: &str) -> Result<f64, ClassifierError> {
        match self.get(name) {
            Some(ParamValue::Real(v)) => Ok(v),
            _ => Err(ClassifierError::InvalidParams(format!("missing real parameter {name}"))),
        }
    }

    pub fn int(&self, name: &str) -> Result<i64, ClassifierError> {
        match self.get(name) {
            Some(ParamValue::Int(v)) => Ok(v),
            _ => Err(ClassifierError::InvalidParams(format!("missing integer parameter {name}"))),
        }
    }

    pub fn cat(&self, name: &str) -> Result<usize, ClassifierError> {
        match self.get(name) {
            Some(ParamValue::Cat(v)) => Ok(v),
            _ => Err(ClassifierError::InvalidParams(format!("missing categorical parameter {name}"))),
        }
    }
}

impl fmt::Display for HyperparamAssignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (n, v)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{n}={v}")?;
        }
        Ok(())
    }
}

/// Family-specific learner settings decoded from an assignment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LearnerParams {
    Logreg { learning_rate: f64, l2: f64, iters: usize },
    GaussianNb { smoothing: f64 },
    Knn { k: usize, weighting: Weighting },
    Tree { max_depth: usize, min_leaf: usize },
}

/// Decodes and sanity-checks `params` for `family`. Bounds of the search
/// space are checked by the search module; this only rejects values the
/// learner cannot run with.
pub fn validate_params(family: ModelFamily, params: &HyperparamAssignment) -> Result<LearnerParams, ClassifierError> {
    let invalid = |msg: String| Err(ClassifierError::InvalidParams(msg));
    let positive_int = |name: &str| -> Result<usize, ClassifierError> {
        let v = params.int(name)?;
        if v < 1 {
            return Err(ClassifierError::InvalidParams(format!("{name} must be at least 1")));
        }
        Ok(v as usize)
    };
    match family {
        ModelFamily::Logreg => {
            let learning_rate = params.real("learning_rate")?;
            let l2 = params.real("l2")?;
            if !(learning_rate > 0.0 && learning_rate.is_finite()) {
                return invalid("learning_rate must be positive".into());
            }
            if !(l2 >= 0.0 && l2.is_finite()) {
                return invalid("l2 must be non-negative".into());
            }
            Ok(LearnerParams::Logreg { learning_rate, l2, iters: positive_int("iters")? })
        }
        ModelFamily::GaussianNb => {
            let smoothing = params.real("smoothing")?;
            if !(smoothing > 0.0 && smoothing.is_finite()) {
                return invalid("smoothing must be positive".into());
            }
            Ok(LearnerParams::GaussianNb { smoothing })
        }
        ModelFamily::Knn => {
            let weighting = match params.cat("weighting")? {
                0 => Weighting::Uniform,
                1 => Weighting::InverseDistance,
                other => return invalid(format!("weighting option {other} does not exist")),
            };
            Ok(LearnerParams::Knn { k: positive_int("k")?, weighting })
        }
        ModelFamily::Tree => Ok(LearnerParams::Tree {
            max_depth: positive_int("max_depth")?,
            min_leaf: positive_int("min_leaf")?,
        }),
    }
}

/// Fitted state of one family.
#[derive(Debug, Clone, PartialEq)]
pub enum FittedPayload {
    Logreg(LogregFit),
    GaussianNb(NbFit),
    Knn(KnnFit),
    Tree(TreeFit),
}

impl FittedPayload {
    pub fn family(&self) -> ModelFamily {
        match self {
            FittedPayload::Logreg(_) => ModelFamily::Logreg,
            FittedPayload::GaussianNb(_) => ModelFamily::GaussianNb,
            FittedPayload::Knn(_) => ModelFamily::Knn,
            FittedPayload::Tree(_) => ModelFamily::Tree,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub family: ModelFamily,
    pub params: HyperparamAssignment,
    pub mask: FeatureMask,
    pub scaler: ScalerStats,
    pub fitted: FittedPayload,
    pub n_classes: usize,
    pub feature_names: Vec<String>,
    pub class_names: Vec<String>,
}

/// Index of the largest score; the lowest index wins ties.
pub(crate) fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Fits `family` on the masked, standardized view of `ds`.
///
/// None of the current learners draw random numbers; `stream` is part of the
/// contract so stochastic learners can be added without changing callers.
pub fn train(
    family: ModelFamily,
    params: &HyperparamAssignment,
    ds: &Dataset,
    mask: &FeatureMask,
    _stream: &mut RngStream,
) -> Result<TrainedModel, ClassifierError> {
    let learner = validate_params(family, params)?;
    if ds.n_classes() < 2 {
        return Err(ClassifierError::DegenerateData("fewer than 2 classes".into()));
    }
    if let Some(c) = ds.class_counts().iter().position(|&n| n == 0) {
        return Err(ClassifierError::DegenerateData(format!(
            "class {:?} absent from training data",
            ds.class_names()[c]
        )));
    }
    let projected = dataset::project(ds, mask)?;
    let scaler = dataset::fit_standardizer(&projected);
    let scaled = dataset::apply_standardizer(&projected, &scaler)?;
    let k = ds.n_classes();

    let fitted = match learner {
        LearnerParams::Logreg { learning_rate, l2, iters } => {
            FittedPayload::Logreg(logreg::fit(&scaled, learning_rate, l2, iters))
        }
        LearnerParams::GaussianNb { smoothing } => FittedPayload::GaussianNb(naive_bayes::fit(&scaled, smoothing)),
        LearnerParams::Knn { .. } => FittedPayload::Knn(knn::fit(&scaled)),
        LearnerParams::Tree { max_depth, min_leaf } => FittedPayload::Tree(tree::fit(&scaled, max_depth, min_leaf)),
    };
    Ok(TrainedModel {
        family,
        params: params.clone(),
        mask: mask.clone(),
        scaler,
        fitted,
        n_classes: k,
        feature_names: ds.feature_names().to_vec(),
        class_names: ds.class_names().to_vec(),
    })
}

impl TrainedModel {
    pub fn n_input_features(&self) -> usize {
        self.mask.len()
    }

    /// Masked and standardized view of a raw input vector.
    pub fn prepare(&self, x: &[f64]) -> Result<Vec<f64>, ClassifierError> {
        if x.len() != self.mask.len() {
            return Err(ClassifierError::ArityMismatch { expected: self.mask.len(), found: x.len() });
        }
        Ok(self.scaler.transform(&self.mask.apply(x)))
    }

    /// Class index for a raw, full-width feature vector.
    pub fn predict(&self, x: &[f64]) -> Result<usize, ClassifierError> {
        let z = self.prepare(x)?;
        Ok(self.predict_prepared(&z))
    }

    /// Prediction for an already masked and standardized vector.
    pub fn predict_prepared(&self, z: &[f64]) -> usize {
        match &self.fitted {
            FittedPayload::Logreg(fit) => argmax(&fit.logits(z)),
            FittedPayload::GaussianNb(fit) => argmax(&fit.log_joint(z)),
            FittedPayload::Knn(fit) => {
                let (k, weighting) = match validate_params(ModelFamily::Knn, &self.params) {
                    Ok(LearnerParams::Knn { k, weighting }) => (k, weighting),
                    _ => unreachable!("checked at construction"),
                };
                fit.predict(z, k, weighting, self.n_classes)
            }
            FittedPayload::Tree(fit) => fit.predict(z),
        }
    }

    /// Checks payload shapes against the mask, scaler and class count.
    pub fn check_consistency(&self) -> Result<(), ClassifierError> {
        let bad = |m: String| Err(ClassifierError::Inconsistent(m));
        if self.fitted.family() != self.family {
            return bad("payload family differs from model family".into());
        }
        validate_params(self.family, &self.params)?;
        let d = self.mask.count();
        let k = self.n_classes;
        if self.mask.count() == 0 {
            return bad("empty mask".into());
        }
        if self.feature_names.len() != self.mask.len() {
            return bad("feature_names length differs from mask length".into());
        }
        if self.class_names.len() != k || k < 2 {
            return bad("class_names length differs from n_classes".into());
        }
        if self.scaler.mean.len() != d || self.scaler.sd.len() != d {
            return bad("scaler arity differs from mask popcount".into());
        }
        if self.scaler.sd.iter().any(|&s| !(s >= 0.0)) {
            return bad("negative scaler sd".into());
        }
        let shape_ok = match &self.fitted {
            FittedPayload::Logreg(f) => {
                f.weights.len() == k && f.weights.iter().all(|w| w.len() == d) && f.bias.len() == k
            }
            FittedPayload::GaussianNb(f) => {
                f.priors.len() == k
                    && f.means.len() == k
                    && f.variances.len() == k
                    && f.means.iter().chain(&f.variances).all(|r| r.len() == d)
                    && f.variances.iter().flatten().all(|&v| v > 0.0)
                    && (f.priors.iter().sum::<f64>() - 1.0).abs() <= 1e-12
            }
            FittedPayload::Knn(f) => {
                !f.rows.is_empty()
                    && f.rows.len() == f.labels.len()
                    && f.rows.iter().all(|r| r.len() == d)
                    && f.labels.iter().all(|&l| l < k)
            }
            FittedPayload::Tree(f) => f.check(d, k),
        };
        if !shape_ok {
            return bad(format!("{} payload does not match {d} features and {k} classes", self.family));
        }
        Ok(())
    }
}

/// Gini impurity `1 - sum p_i^2` of a class histogram.
pub fn gini(counts: &[usize]) -> Result<f64, ClassifierError> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(ClassifierError::EmptyCounts);
    }
    let n = total as f64;
    Ok(1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>())
}
