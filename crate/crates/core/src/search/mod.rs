//! Candidate space: parameter sampling, local mutation and feature-mask
//! mutation.

pub mod rng;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifiers::{HyperparamAssignment, ModelFamily, ParamValue};
use crate::dataset::FeatureMask;
use rng::RngStream;

#[derive(Debug, Error, PartialEq)]
pub enum SearchError {
    #[error("uniform draw {0} outside [0, 1)")]
    UOutOfRange(f64),
    #[error("family {0} has no search space")]
    UnknownFamily(ModelFamily),
    #[error("invalid parent candidate: {0}")]
    InvalidParent(String),
    #[error("invalid search space: {0}")]
    InvalidSpace(String),
    #[error("invalid mutation config: {0}")]
    InvalidMutation(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParamKind {
    ContinuousLinear { lo: f64, hi: f64 },
    ContinuousLog { lo: f64, hi: f64 },
    IntegerRange { lo: i64, hi: i64 },
    Categorical { options: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: ParamKind,
}

impl ParamSpec {
    pub fn linear(name: &str, lo: f64, hi: f64) -> Self {
        Self { name: name.into(), kind: ParamKind::ContinuousLinear { lo, hi } }
    }

    pub fn log(name: &str, lo: f64, hi: f64) -> Self {
        Self { name: name.into(), kind: ParamKind::ContinuousLog { lo, hi } }
    }

    pub fn integer(name: &str, lo: i64, hi: i64) -> Self {
        Self { name: name.into(), kind: ParamKind::IntegerRange { lo, hi } }
    }

    pub fn categorical(name: &str, options: &[&str]) -> Self {
        Self {
            name: name.into(),
            kind: ParamKind::Categorical { options: options.iter().map(|s| s.to_string()).collect() },
        }
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        let bad = |msg: &str| Err(SearchError::InvalidSpace(format!("{}: {msg}", self.name)));
        match &self.kind {
            ParamKind::ContinuousLinear { lo, hi } if !(lo < hi && lo.is_finite() && hi.is_finite()) => {
                bad("requires finite lo < hi")
            }
            ParamKind::ContinuousLog { lo, hi } if !(*lo > 0.0 && lo < hi && hi.is_finite()) => {
                bad("requires 0 < lo < hi")
            }
            ParamKind::IntegerRange { lo, hi } if lo >= hi => bad("requires lo < hi"),
            ParamKind::Categorical { options } if options.len() < 2 => bad("requires at least 2 options"),
            _ => Ok(()),
        }
    }

    /// Whether `value` has this spec's kind and lies within its bounds.
    pub fn admits(&self, value: &ParamValue) -> bool {
        match (&self.kind, value) {
            (ParamKind::ContinuousLinear { lo, hi }, ParamValue::Real(v))
            | (ParamKind::ContinuousLog { lo, hi }, ParamValue::Real(v)) => v >= lo && v <= hi,
            (ParamKind::IntegerRange { lo, hi }, ParamValue::Int(v)) => v >= lo && v <= hi,
            (ParamKind::Categorical { options }, ParamValue::Cat(i)) => *i < options.len(),
            _ => false,
        }
    }
}

/// Per-family ordered parameter lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace(BTreeMap<ModelFamily, Vec<ParamSpec>>);

impl Default for SearchSpace {
    fn default() -> Self {
        let mut m = BTreeMap::new();
        m.insert(
            ModelFamily::Logreg,
            vec![
                ParamSpec::log("learning_rate", 1e-3, 1e0),
                ParamSpec::log("l2", 1e-6, 1e-1),
                ParamSpec::integer("iters", 50, 500),
            ],
        );
        m.insert(ModelFamily::GaussianNb, vec![ParamSpec::log("smoothing", 1e-9, 1e-3)]);
        m.insert(
            ModelFamily::Knn,
            vec![
                ParamSpec::integer("k", 1, 25),
                ParamSpec::categorical("weighting", &["uniform", "inverse_distance"]),
            ],
        );
        m.insert(
            ModelFamily::Tree,
            vec![ParamSpec::integer("max_depth", 1, 12), ParamSpec::integer("min_leaf", 1, 10)],
        );
        Self(m)
    }
}

impl SearchSpace {
    pub fn params(&self, family: ModelFamily) -> Result<&[ParamSpec], SearchError> {
        self.0.get(&family).map(Vec::as_slice).ok_or(SearchError::UnknownFamily(family))
    }

    /// Replaces one family's parameter list.
    pub fn set(&mut self, family: ModelFamily, params: Vec<ParamSpec>) {
        self.0.insert(family, params);
    }

    pub fn families(&self) -> impl Iterator<Item = ModelFamily> + '_ {
        self.0.keys().copied()
    }

    /// Checks every spec, name uniqueness, and that every portfolio family is
    /// present with the parameters its learner needs.
    pub fn validate(&self) -> Result<(), SearchError> {
        for family in ModelFamily::ALL {
            let specs = self.params(family)?;
            for (i, spec) in specs.iter().enumerate() {
                spec.validate()?;
                if specs[..i].iter().any(|s| s.name == spec.name) {
                    return Err(SearchError::InvalidSpace(format!("duplicate parameter {}", spec.name)));
                }
            }
            // the lowest corner of the space must be trainable
            let corner = HyperparamAssignment::new(
                specs.iter().map(|s| (s.name.clone(), sample_param(s, 0.0).unwrap())).collect(),
            );
            crate::classifiers::validate_params(family, &corner)
                .map_err(|e| SearchError::InvalidSpace(format!("{family}: {e}")))?;
        }
        Ok(())
    }

    pub fn admits(&self, family: ModelFamily, params: &HyperparamAssignment) -> Result<(), String> {
        let specs = self.params(family).map_err(|e| e.to_string())?;
        if specs.len() != params.len() {
            return Err(format!("expected {} parameters, got {}", specs.len(), params.len()));
        }
        for (spec, (name, value)) in specs.iter().zip(params.iter()) {
            if &spec.name != name {
                return Err(format!("expected parameter {}, got {name}", spec.name));
            }
            if !spec.admits(value) {
                return Err(format!("{name} = {value} outside its declared range"));
            }
        }
        Ok(())
    }
}

/// One point in the search space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSpec {
    pub id: u64,
    pub family: ModelFamily,
    pub params: HyperparamAssignment,
    pub mask: FeatureMask,
    pub parent_id: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MutationConfig {
    pub sigma_cont: f64,
    pub p_cat: f64,
    pub p_flip: f64,
    pub p_feature_search: f64,
}

impl Default for MutationConfig {
    fn default() -> Self {
        Self { sigma_cont: 0.15, p_cat: 0.2, p_flip: 0.1, p_feature_search: 0.5 }
    }
}

impl MutationConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        if !(self.sigma_cont > 0.0 && self.sigma_cont.is_finite()) {
            return Err(SearchError::InvalidMutation("sigma_cont must be positive".into()));
        }
        for (name, p) in [("p_cat", self.p_cat), ("p_flip", self.p_flip), ("p_feature_search", self.p_feature_search)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(SearchError::InvalidMutation(format!("{name} must lie in [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Maps a uniform draw onto a parameter value.
pub fn sample_param(spec: &ParamSpec, u: f64) -> Result<ParamValue, SearchError> {
    if !(0.0..1.0).contains(&u) {
        return Err(SearchError::UOutOfRange(u));
    }
    Ok(match &spec.kind {
        ParamKind::ContinuousLinear { lo, hi } => ParamValue::Real(lo + u * (hi - lo)),
        ParamKind::ContinuousLog { lo, hi } => {
            ParamValue::Real((lo.ln() + u * (hi.ln() - lo.ln())).exp())
        }
        ParamKind::IntegerRange { lo, hi } => {
            let span = (hi - lo + 1) as f64;
            ParamValue::Int((lo + (u * span).floor() as i64).min(*hi))
        }
        ParamKind::Categorical { options } => {
            ParamValue::Cat(((u * options.len() as f64).floor() as usize).min(options.len() - 1))
        }
    })
}

/// Fresh candidate: one draw per parameter in declared order, full mask.
pub fn sample_candidate(
    space: &SearchSpace,
    family: ModelFamily,
    n_features: usize,
    stream: &mut RngStream,
    id: u64,
) -> Result<CandidateSpec, SearchError> {
    let specs = space.params(family)?;
    let params = specs
        .iter()
        .map(|s| sample_param(s, stream.next_f64()).map(|v| (s.name.clone(), v)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CandidateSpec {
        id,
        family,
        params: HyperparamAssignment::new(params),
        mask: FeatureMask::all(n_features),
        parent_id: None,
    })
}

/// Position of a continuous value in [0, 1] along its (possibly log) axis.
fn to_unit(kind: &ParamKind, v: f64) -> f64 {
    match kind {
        ParamKind::ContinuousLinear { lo, hi } => (v - lo) / (hi - lo),
        ParamKind::ContinuousLog { lo, hi } => (v.ln() - lo.ln()) / (hi.ln() - lo.ln()),
        _ => unreachable!("not a continuous kind"),
    }
}

fn from_unit(kind: &ParamKind, t: f64) -> f64 {
    match kind {
        ParamKind::ContinuousLinear { lo, hi } => (lo + t * (hi - lo)).clamp(*lo, *hi),
        ParamKind::ContinuousLog { lo, hi } => (lo.ln() + t * (hi.ln() - lo.ln())).exp().clamp(*lo, *hi),
        _ => unreachable!("not a continuous kind"),
    }
}

/// Child of `parent` in the same family.
///
/// Draw order per parameter, in declared order: continuous and integer kinds
/// take one Gaussian (two uniforms); categorical kinds take two uniforms (the
/// resample test, then the new option). A final uniform decides whether the
/// mask is mutated.
pub fn mutate_candidate(
    parent: &CandidateSpec,
    space: &SearchSpace,
    cfg: &MutationConfig,
    stream: &mut RngStream,
    new_id: u64,
) -> Result<CandidateSpec, SearchError> {
    space.admits(parent.family, &parent.params).map_err(SearchError::InvalidParent)?;
    let specs = space.params(parent.family)?;
    let mut params = Vec::with_capacity(specs.len());
    for (spec, (name, value)) in specs.iter().zip(parent.params.iter()) {
        let child = match (&spec.kind, value) {
            (kind @ (ParamKind::ContinuousLinear { .. } | ParamKind::ContinuousLog { .. }), ParamValue::Real(v)) => {
                let t = (to_unit(kind, *v) + cfg.sigma_cont * stream.next_gaussian()).clamp(0.0, 1.0);
                ParamValue::Real(from_unit(kind, t))
            }
            (ParamKind::IntegerRange { lo, hi }, ParamValue::Int(v)) => {
                let step = (stream.next_gaussian() * (hi - lo) as f64 * cfg.sigma_cont).round() as i64;
                ParamValue::Int(v.saturating_add(step).clamp(*lo, *hi))
            }
            (ParamKind::Categorical { options }, ParamValue::Cat(i)) => {
                let resample = stream.next_f64() < cfg.p_cat;
                let pick = stream.next_index(options.len());
                ParamValue::Cat(if resample { pick } else { *i })
            }
            _ => return Err(SearchError::InvalidParent(format!("{name} has the wrong kind"))),
        };
        params.push((name.clone(), child));
    }
    let mask = if stream.next_f64() < cfg.p_feature_search {
        mutate_mask(&parent.mask, cfg.p_flip, stream)
    } else {
        parent.mask.clone()
    };
    Ok(CandidateSpec {
        id: new_id,
        family: parent.family,
        params: HyperparamAssignment::new(params),
        mask,
        parent_id: Some(parent.id),
    })
}

/// Flips each bit with probability `p_flip`; an all-zero result gets one
/// uniformly chosen bit set.
pub fn mutate_mask(mask: &FeatureMask, p_flip: f64, stream: &mut RngStream) -> FeatureMask {
    let mut bits: Vec<bool> = mask.bits().iter().map(|&b| if stream.next_f64() < p_flip { !b } else { b }).collect();
    if !bits.iter().any(|&b| b) {
        let i = stream.next_index(bits.len());
        bits[i] = true;
    }
    FeatureMask::new(bits).expect("mask has a set bit")
}
