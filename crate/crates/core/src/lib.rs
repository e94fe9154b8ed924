//! Racing optimizer for tabular classification.
//!
//! A population of candidates (model family, hyperparameters, feature mask)
//! is trained in parallel on a training split, scored on a validation split,
//! and the best performers are kept and mutated over a fixed or adaptive
//! number of rounds. The winner is refit on train plus validation and scored
//! once on a held-out test split.

pub mod classifiers;
pub mod dataset;
pub mod evaluator;
pub mod interface;
pub mod optimizer;
pub mod search;

pub use classifiers::{ModelFamily, TrainedModel};
pub use dataset::{Dataset, FeatureMask, SplitSpec};
pub use evaluator::{EvaluationRecord, Metric};
pub use optimizer::{run, OptimizerConfig, RunReport};
