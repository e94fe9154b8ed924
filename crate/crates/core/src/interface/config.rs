//! JSON run-config files and the default < file < flag layering.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Deserialize;

use super::InterfaceError;
use crate::classifiers::ModelFamily;
use crate::evaluator::Metric;
use crate::optimizer::OptimizerConfig;
use crate::search::ParamSpec;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MutationOverrides {
    pub sigma_cont: Option<f64>,
    pub p_cat: Option<f64>,
    pub p_flip: Option<f64>,
    pub p_feature_search: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitOverrides {
    pub train_fraction: Option<f64>,
    pub valid_fraction: Option<f64>,
    pub test_fraction: Option<f64>,
    pub seed: Option<u64>,
    pub stratified: Option<bool>,
}

/// Every field optional; absent fields keep the value from the layer below.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    pub seed: Option<u64>,
    pub rounds: Option<usize>,
    pub population: Option<usize>,
    pub survivors: Option<usize>,
    #[serde(alias = "fresh")]
    pub fresh_per_round: Option<usize>,
    pub families: Option<Vec<String>>,
    pub metric: Option<String>,
    pub feature_search: Option<bool>,
    pub patience: Option<usize>,
    pub min_delta: Option<f64>,
    pub mutation: Option<MutationOverrides>,
    pub split: Option<SplitOverrides>,
    /// Replaces the parameter list of each named family.
    pub search_space: Option<BTreeMap<String, Vec<ParamSpec>>>,
}

impl ConfigOverrides {
    pub fn from_file(path: &Path) -> Result<Self, InterfaceError> {
        let text = fs::read_to_string(path)
            .map_err(|e| InterfaceError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| InterfaceError::Config(format!("{}: {e}", path.display())))
    }

    /// Later layers win: `self` is applied on top of `cfg`.
    pub fn apply(&self, cfg: &mut OptimizerConfig, split_seed_set: &mut bool) -> Result<(), InterfaceError> {
        macro_rules! take {
            ($src:expr => $dst:expr) => {
                if let Some(v) = $src.clone() {
                    $dst = v;
                }
            };
        }
        take!(self.seed => cfg.master_seed);
        take!(self.rounds => cfg.rounds);
        take!(self.population => cfg.population);
        take!(self.survivors => cfg.survivors);
        take!(self.fresh_per_round => cfg.fresh_per_round);
        if let Some(fams) = &self.families {
            cfg.families = parse_families(fams.iter().map(String::as_str))?;
        }
        if let Some(m) = &self.metric {
            cfg.metric = m.parse::<Metric>().map_err(InterfaceError::Config)?;
        }
        if self.patience.is_some() {
            cfg.patience = self.patience;
        }
        take!(self.min_delta => cfg.min_delta);
        if let Some(m) = &self.mutation {
            take!(m.sigma_cont => cfg.mutation.sigma_cont);
            take!(m.p_cat => cfg.mutation.p_cat);
            take!(m.p_flip => cfg.mutation.p_flip);
            take!(m.p_feature_search => cfg.mutation.p_feature_search);
        }
        if self.feature_search == Some(false) {
            cfg.mutation.p_feature_search = 0.0;
        }
        if let Some(s) = &self.split {
            take!(s.train_fraction => cfg.split.train_fraction);
            take!(s.valid_fraction => cfg.split.valid_fraction);
            take!(s.test_fraction => cfg.split.test_fraction);
            take!(s.stratified => cfg.split.stratified);
            if let Some(seed) = s.seed {
                cfg.split.seed = seed;
                *split_seed_set = true;
            }
        }
        if let Some(space) = &self.search_space {
            for (name, params) in space {
                let fam: ModelFamily = name.parse().map_err(InterfaceError::Config)?;
                cfg.search_space.set(fam, params.clone());
            }
        }
        Ok(())
    }
}

pub fn parse_families<'a>(names: impl Iterator<Item = &'a str>) -> Result<Vec<ModelFamily>, InterfaceError> {
    names
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.parse::<ModelFamily>().map_err(InterfaceError::Config))
        .collect()
}
