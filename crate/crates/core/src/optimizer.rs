//! The racing loop: populate, train every candidate, score on the
//! validation split, keep the best, refill by sampling and mutation, repeat,
//! then refit the winner and score it once on the test split.
//!
//! Within a round every candidate gets a pre-derived RNG stream and read-only
//! access to the splits, so candidates train in any order or in parallel.
//! Results are keyed by candidate id and everything downstream orders by id,
//! which makes the run independent of scheduling and worker count.

use std::collections::HashMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifiers::{self, ClassifierError, ModelFamily, TrainedModel};
use crate::dataset::{self, Dataset, DatasetError, SplitSpec};
use crate::evaluator::{self, EvalError, EvaluationRecord, Metric, SplitName};
use crate::search::rng::{derive_stream, RngStream};
use crate::search::{self, CandidateSpec, MutationConfig, SearchError, SearchSpace};

/// Round tag for the streams handed to `train`, disjoint from the loop's
/// round numbers.
const TRAIN_STREAM_ROUND: u64 = u64::MAX;

#[derive(Debug, Error)]
pub enum OptimizerError {
    #[error("infeasible configuration: {0}")]
    InfeasibleConfig(String),
    #[error("k = {k} exceeds {available} records")]
    KTooLarge { k: usize, available: usize },
    #[error(transparent)]
    Data(#[from] DatasetError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub master_seed: u64,
    pub rounds: usize,
    pub population: usize,
    pub survivors: usize,
    pub fresh_per_round: usize,
    pub families: Vec<ModelFamily>,
    pub metric: Metric,
    pub mutation: MutationConfig,
    pub split: SplitSpec,
    pub patience: Option<usize>,
    pub min_delta: f64,
    pub search_space: SearchSpace,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            master_seed: 0,
            rounds: 5,
            population: 16,
            survivors: 4,
            fresh_per_round: 4,
            families: ModelFamily::ALL.to_vec(),
            metric: Metric::Accuracy,
            mutation: MutationConfig::default(),
            split: SplitSpec::default(),
            patience: None,
            min_delta: 0.0,
            search_space: SearchSpace::default(),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), OptimizerError> {
        let infeasible = |m: &str| Err(OptimizerError::InfeasibleConfig(m.to_string()));
        if self.rounds < 1 {
            return infeasible("rounds must be at least 1");
        }
        if self.population < 2 {
            return infeasible("population must be at least 2");
        }
        if self.survivors < 1 || self.survivors >= self.population {
            return infeasible("survivors must lie in [1, population)");
        }
        if self.survivors + self.fresh_per_round > self.population {
            return infeasible("survivors + fresh_per_round exceeds population");
        }
        if self.families.is_empty() {
            return infeasible("families must not be empty");
        }
        if (1..self.families.len()).any(|i| self.families[..i].contains(&self.families[i])) {
            return infeasible("families must not repeat");
        }
        if self.patience == Some(0) {
            return infeasible("patience must be at least 1");
        }
        if !(self.min_delta >= 0.0 && self.min_delta.is_finite()) {
            return infeasible("min_delta must be non-negative");
        }
        self.mutation.validate().map_err(|e| OptimizerError::InfeasibleConfig(e.to_string()))?;
        self.split.validate().map_err(|e| OptimizerError::InfeasibleConfig(e.to_string()))?;
        self.search_space.validate().map_err(|e| OptimizerError::InfeasibleConfig(e.to_string()))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub round: usize,
    pub candidates: Vec<CandidateSpec>,
    pub records: Vec<EvaluationRecord>,
    pub survivors: Vec<u64>,
    pub best_score_so_far: f64,
    pub wall_time_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Winner {
    pub candidate: CandidateSpec,
    pub validation_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: OptimizerConfig,
    pub rounds: Vec<GenerationResult>,
    pub winner: Winner,
    pub final_test: EvaluationRecord,
    pub warnings: Vec<String>,
}

/// Ids of the top `k` records ordered by (score desc, id asc).
pub fn select_survivors(records: &[EvaluationRecord], k: usize) -> Result<Vec<u64>, OptimizerError> {
    if k < 1 || k > records.len() {
        return Err(OptimizerError::KTooLarge { k, available: records.len() });
    }
    let mut ranked: Vec<&EvaluationRecord> = records.iter().collect();
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.candidate_id.cmp(&b.candidate_id)));
    Ok(ranked[..k].iter().map(|r| r.candidate_id).collect())
}

/// Hands out run-wide sequential candidate ids.
#[derive(Debug, Clone, Default)]
pub struct IdAllocator(u64);

impl IdAllocator {
    pub fn starting_at(first: u64) -> Self {
        Self(first)
    }

    pub fn next_id(&mut self) -> u64 {
        let id = self.0;
        self.0 += 1;
        id
    }
}

/// Family of each round-0 slot. With at least two slots per family,
/// families fill contiguous blocks of ceil(population / |families|) slots;
/// below that they alternate slot by slot.
pub fn initial_families(cfg: &OptimizerConfig) -> Vec<ModelFamily> {
    let f = cfg.families.len();
    if cfg.population < 2 * f {
        (0..cfg.population).map(|i| cfg.families[i % f]).collect()
    } else {
        let per = cfg.population.div_ceil(f);
        cfg.families.iter().flat_map(|&fam| std::iter::repeat_n(fam, per)).take(cfg.population).collect()
    }
}

pub fn initial_population(
    cfg: &OptimizerConfig,
    n_features: usize,
    ids: &mut IdAllocator,
) -> Result<Vec<CandidateSpec>, OptimizerError> {
    initial_families(cfg)
        .into_iter()
        .enumerate()
        .map(|(slot, fam)| {
            let mut stream = derive_stream(cfg.master_seed, 0, slot as u64);
            Ok(search::sample_candidate(&cfg.search_space, fam, n_features, &mut stream, ids.next_id())?)
        })
        .collect()
}

/// Population for `round` (>= 1): the ranked survivors unchanged, then
/// `fresh_per_round` new samples with families taken round-robin, then
/// mutated children cycling over the survivors in rank order. Slot `i`
/// draws from `derive_stream(master_seed, round, i)`.
pub fn next_generation(
    survivors: &[CandidateSpec],
    cfg: &OptimizerConfig,
    space: &SearchSpace,
    round: usize,
    master_seed: u64,
    n_features: usize,
    ids: &mut IdAllocator,
) -> Result<Vec<CandidateSpec>, OptimizerError> {
    if survivors.is_empty() {
        return Err(OptimizerError::InfeasibleConfig("no survivors to breed from".into()));
    }
    let fresh = cfg.fresh_per_round.min(cfg.population.saturating_sub(survivors.len()));
    let mut population: Vec<CandidateSpec> = survivors.to_vec();
    let stream_for = |slot: usize| derive_stream(master_seed, round as u64, slot as u64);
    for i in 0..fresh {
        let fam = cfg.families[i % cfg.families.len()];
        let mut stream = stream_for(population.len());
        population.push(search::sample_candidate(space, fam, n_features, &mut stream, ids.next_id())?);
    }
    let mut parent = 0;
    while population.len() < cfg.population {
        let mut stream = stream_for(population.len());
        let child = search::mutate_candidate(&survivors[parent], space, &cfg.mutation, &mut stream, ids.next_id())?;
        population.push(child);
        parent = (parent + 1) % survivors.len();
    }
    Ok(population)
}

/// True once `cfg.rounds` rounds have run, or when each of the last
/// `patience` rounds improved the best score by less than `min_delta`.
pub fn should_stop(history: &[f64], cfg: &OptimizerConfig) -> bool {
    if history.len() >= cfg.rounds {
        return true;
    }
    match cfg.patience {
        Some(p) if history.len() > p => history[history.len() - p - 1..]
            .windows(2)
            .all(|w| w[1] - w[0] < cfg.min_delta),
        _ => false,
    }
}

fn train_stream(cfg: &OptimizerConfig, id: u64) -> RngStream {
    derive_stream(cfg.master_seed, TRAIN_STREAM_ROUND, id)
}

fn train_candidate(cfg: &OptimizerConfig, c: &CandidateSpec, ds: &Dataset) -> Result<TrainedModel, OptimizerError> {
    Ok(classifiers::train(c.family, &c.params, ds, &c.mask, &mut train_stream(cfg, c.id))?)
}

/// Runs the loop on the current rayon pool.
pub fn run(cfg: &OptimizerConfig, ds: &Dataset) -> Result<(TrainedModel, RunReport), OptimizerError> {
    run_observed(cfg, ds, |_| {})
}

/// Runs the loop on a dedicated pool of `threads` workers. Results do not
/// depend on `threads`.
pub fn run_with_threads(
    cfg: &OptimizerConfig,
    ds: &Dataset,
    threads: usize,
    on_round: impl FnMut(&GenerationResult) + Send,
) -> Result<(TrainedModel, RunReport), OptimizerError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| OptimizerError::ThreadPool(e.to_string()))?;
    pool.install(|| run_observed(cfg, ds, on_round))
}

/// [`run`], calling `on_round` after each round is scored.
pub fn run_observed(
    cfg: &OptimizerConfig,
    ds: &Dataset,
    mut on_round: impl FnMut(&GenerationResult),
) -> Result<(TrainedModel, RunReport), OptimizerError> {
    cfg.validate()?;
    let (train, valid, test) = dataset::split_three_way(ds, &cfg.split)?;
    let n_features = ds.n_features();

    let mut warnings = Vec::new();
    if cfg.population < 2 * cfg.families.len() {
        let present = initial_families(cfg);
        let absent: Vec<String> =
            cfg.families.iter().filter(|f| !present.contains(f)).map(|f| f.to_string()).collect();
        let mut w = format!(
            "population {} is below twice the family count {}; round-0 families assigned round-robin",
            cfg.population,
            cfg.families.len()
        );
        if !absent.is_empty() {
            w.push_str(&format!("; absent from round 0: {}", absent.join(", ")));
        }
        warnings.push(w);
    }

    let mut ids = IdAllocator::default();
    let mut population = initial_population(cfg, n_features, &mut ids)?;
    // Training is deterministic, so a carried-over elite keeps its score.
    let mut scored: HashMap<u64, EvaluationRecord> = HashMap::new();
    let mut rounds: Vec<GenerationResult> = Vec::new();
    let mut history: Vec<f64> = Vec::new();

    for round in 0.. {
        let started = Instant::now();
        let pending: Vec<&CandidateSpec> = population.iter().filter(|c| !scored.contains_key(&c.id)).collect();
        let fresh: Vec<EvaluationRecord> = pending
            .par_iter()
            .map(|c| {
                let model = train_candidate(cfg, c, &train)?;
                Ok(evaluator::evaluate(&model, &valid, cfg.metric, SplitName::Valid, c.id)?)
            })
            .collect::<Result<_, OptimizerError>>()?;
        for r in fresh {
            scored.insert(r.candidate_id, r);
        }
        let records: Vec<EvaluationRecord> = population.iter().map(|c| scored[&c.id].clone()).collect();
        let survivors = select_survivors(&records, cfg.survivors)?;
        let round_best = scored[&survivors[0]].score;
        let best = history.last().map_or(round_best, |&b: &f64| b.max(round_best));
        history.push(best);

        let result = GenerationResult {
            round,
            candidates: population.clone(),
            records,
            survivors: survivors.clone(),
            best_score_so_far: best,
            wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
        };
        on_round(&result);
        rounds.push(result);

        if should_stop(&history, cfg) {
            break;
        }
        let by_id: HashMap<u64, &CandidateSpec> = population.iter().map(|c| (c.id, c)).collect();
        let elite: Vec<CandidateSpec> = survivors.iter().map(|id| by_id[id].clone()).collect();
        population =
            next_generation(&elite, cfg, &cfg.search_space, round + 1, cfg.master_seed, n_features, &mut ids)?;
    }

    let last = rounds.last().expect("at least one round");
    let winner_id = last.survivors[0];
    let winner_spec = last.candidates.iter().find(|c| c.id == winner_id).expect("survivor in population").clone();
    let winner = Winner { validation_score: scored[&winner_id].score, candidate: winner_spec };

    let refit_data = train.concat(&valid)?;
    let model = train_candidate(cfg, &winner.candidate, &refit_data)?;
    let final_test = evaluator::evaluate(&model, &test, cfg.metric, SplitName::Test, winner_id)?;

    Ok((model, RunReport { config: cfg.clone(), rounds, winner, final_test, warnings }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: u64, score: f64) -> EvaluationRecord {
        EvaluationRecord { candidate_id: id, split_name: SplitName::Valid, metric: Metric::Accuracy, score, n_examples: 10 }
    }

    #[test]
    fn survivors_ordered_by_score_then_id() {
        let rs = vec![rec(1, 0.9), rec(2, 0.7), rec(3, 0.8)];
        assert_eq!(select_survivors(&rs, 2).unwrap(), vec![1, 3]);
        let flat = vec![rec(5, 0.5), rec(2, 0.5), rec(9, 0.5)];
        assert_eq!(select_survivors(&flat, 2).unwrap(), vec![2, 5]);
        assert!(matches!(select_survivors(&flat, 4), Err(OptimizerError::KTooLarge { k: 4, available: 3 })));
        assert!(select_survivors(&flat, 0).is_err());
    }

    #[test]
    fn survivors_match_full_sort_oracle() {
        let mut s = RngStream::from_seed(100);
        let records: Vec<EvaluationRecord> =
            (0..100).map(|i| rec(i * 3 % 101, (s.next_index(20) as f64) / 20.0)).collect();
        let mut oracle: Vec<(f64, u64)> = records.iter().map(|r| (r.score, r.candidate_id)).collect();
        // stable sort by id, then stable sort by score descending
        oracle.sort_by_key(|&(_, id)| id);
        oracle.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        for k in 1..=100 {
            let want: Vec<u64> = oracle[..k].iter().map(|&(_, id)| id).collect();
            assert_eq!(select_survivors(&records, k).unwrap(), want);
        }
    }

    #[test]
    fn stopping_rule() {
        let cfg = OptimizerConfig { rounds: 3, ..OptimizerConfig::default() };
        assert!(should_stop(&[0.1, 0.2, 0.3], &cfg));
        assert!(!should_stop(&[0.1, 0.2], &cfg));
        let cfg = OptimizerConfig { rounds: 10, patience: Some(2), min_delta: 0.01, ..OptimizerConfig::default() };
        assert!(should_stop(&[0.80, 0.801, 0.802], &cfg));
        assert!(!should_stop(&[0.80, 0.801], &cfg));
        assert!(!should_stop(&[0.70, 0.80, 0.801], &cfg));
        assert!(should_stop(&[0.70, 0.80, 0.801, 0.801], &cfg));
    }

    #[test]
    fn generation_composition() {
        let cfg = OptimizerConfig { population: 4, survivors: 2, fresh_per_round: 0, ..OptimizerConfig::default() };
        let mut ids = IdAllocator::default();
        let pop0 = initial_population(&cfg, 3, &mut ids).unwrap();
        let elite = vec![pop0[2].clone(), pop0[0].clone()];
        let next = next_generation(&elite, &cfg, &cfg.search_space, 1, cfg.master_seed, 3, &mut ids).unwrap();
        assert_eq!(next.len(), 4);
        assert_eq!(&next[..2], &elite[..]);
        assert_eq!(next[2].parent_id, Some(pop0[2].id));
        assert_eq!(next[3].parent_id, Some(pop0[0].id));
        assert_eq!((next[2].id, next[3].id), (4, 5));

        let cfg = OptimizerConfig { population: 6, survivors: 2, fresh_per_round: 4, ..OptimizerConfig::default() };
        let next = next_generation(&elite, &cfg, &cfg.search_space, 1, 0, 3, &mut IdAllocator::starting_at(10)).unwrap();
        assert_eq!(next.len(), 6);
        assert!(next[2..].iter().all(|c| c.parent_id.is_none()));
        let fams: Vec<ModelFamily> = next[2..].iter().map(|c| c.family).collect();
        assert_eq!(fams, ModelFamily::ALL.to_vec());
    }

    #[test]
    fn initial_family_layout() {
        let cfg = OptimizerConfig { population: 10, ..OptimizerConfig::default() };
        let fams = initial_families(&cfg);
        use ModelFamily::*;
        assert_eq!(fams, vec![Logreg, Logreg, Logreg, GaussianNb, GaussianNb, GaussianNb, Knn, Knn, Knn, Tree]);
        let cfg = OptimizerConfig { population: 6, survivors: 2, fresh_per_round: 0, ..OptimizerConfig::default() };
        assert_eq!(initial_families(&cfg), vec![Logreg, GaussianNb, Knn, Tree, Logreg, GaussianNb]);
    }

    #[test]
    fn infeasible_configs() {
        let base = OptimizerConfig::default();
        for bad in [
            OptimizerConfig { rounds: 0, ..base.clone() },
            OptimizerConfig { population: 1, survivors: 0, fresh_per_round: 0, ..base.clone() },
            OptimizerConfig { survivors: 16, ..base.clone() },
            OptimizerConfig { survivors: 10, fresh_per_round: 7, ..base.clone() },
            OptimizerConfig { families: vec![], ..base.clone() },
            OptimizerConfig { families: vec![ModelFamily::Knn, ModelFamily::Knn], ..base.clone() },
            OptimizerConfig { patience: Some(0), ..base.clone() },
            OptimizerConfig { min_delta: -1.0, ..base.clone() },
        ] {
            assert!(matches!(bad.validate(), Err(OptimizerError::InfeasibleConfig(_))), "{bad:?}");
        }
        base.validate().unwrap();
    }
}
