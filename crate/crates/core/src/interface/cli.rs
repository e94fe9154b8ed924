//! `raceopt optimize | predict | inspect`.
//!
//! Exit codes: 0 ok, 1 usage, 2 data, 3 internal.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use super::config::{parse_families, ConfigOverrides};
use super::persist::{self, write_atomic};
use super::InterfaceError;
use crate::classifiers::{ClassifierError, ModelFamily};
use crate::dataset::{Dataset, DatasetError, Table};
use crate::evaluator::{self, EvalError, Metric};
use crate::optimizer::{self, GenerationResult, OptimizerConfig, OptimizerError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "raceopt", version, about = "Race a portfolio of classifiers and keep the best model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Search models and write the winner plus a run report
    Optimize(OptimizeArgs),
    /// Predict class names for the rows of a CSV file
    Predict(PredictArgs),
    /// Describe a saved model
    Inspect(InspectArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    Accuracy,
    #[value(name = "macro_f1")]
    MacroF1,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Accuracy => Metric::Accuracy,
            MetricArg::MacroF1 => Metric::MacroF1,
        }
    }
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub label: String,
    /// Master seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// [default: 5]
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub rounds: Option<u64>,
    /// [default: 16]
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
    pub population: Option<u64>,
    /// [default: 4]
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub survivors: Option<u64>,
    /// Fresh samples per round [default: 4]
    #[arg(long)]
    pub fresh: Option<u64>,
    /// Comma-separated subset of logreg,gaussian_nb,knn,tree [default: all]
    #[arg(long)]
    pub families: Option<String>,
    /// [default: accuracy]
    #[arg(long, value_enum)]
    pub metric: Option<MetricArg>,
    /// [default: on]
    #[arg(long = "feature-search", value_enum)]
    pub feature_search: Option<Switch>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub patience: Option<u64>,
    #[arg(long = "min-delta")]
    pub min_delta: Option<f64>,
    /// JSON run-config file; flags take precedence over it
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "model.json")]
    pub out: PathBuf,
    #[arg(long, default_value = "report.json")]
    pub report: PathBuf,
    /// Worker threads [default: all cores]; does not affect results
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub threads: Option<u64>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Label column; when present the score is printed
    #[arg(long)]
    pub label: Option<String>,
    #[arg(long, value_enum, default_value = "accuracy")]
    pub metric: MetricArg,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub model: PathBuf,
}

/// A failure tagged with the exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(m: impl ToString) -> Self {
        Self { code: EXIT_USAGE, message: m.to_string() }
    }

    fn data(m: impl ToString) -> Self {
        Self { code: EXIT_DATA, message: m.to_string() }
    }

    fn internal(m: impl ToString) -> Self {
        Self { code: EXIT_INTERNAL, message: m.to_string() }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        CliError::data(e)
    }
}

impl From<OptimizerError> for CliError {
    fn from(e: OptimizerError) -> Self {
        match e {
            OptimizerError::InfeasibleConfig(_) | OptimizerError::KTooLarge { .. } => CliError::usage(e),
            OptimizerError::Data(_) | OptimizerError::Classifier(_) | OptimizerError::Eval(_) => CliError::data(e),
            OptimizerError::Search(_) | OptimizerError::ThreadPool(_) => CliError::internal(e),
        }
    }
}

fn read_error(e: InterfaceError) -> CliError {
    match e {
        InterfaceError::Internal(_) => CliError::internal(e),
        _ => CliError::data(e),
    }
}

fn write_error(e: InterfaceError) -> CliError {
    CliError::internal(e)
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().ansi().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{text}");
                    EXIT_USAGE
                }
            };
        }
    };
    let result = match cli.command {
        Command::Optimize(a) => optimize(&a, out),
        Command::Predict(a) => predict(&a, out),
        Command::Inspect(a) => inspect(&a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message);
            e.code
        }
    }
}

/// Defaults, then the config file, then flags.
pub fn build_config(args: &OptimizeArgs) -> Result<OptimizerConfig, CliError> {
    let mut cfg = OptimizerConfig::default();
    let mut split_seed_set = false;
    if let Some(path) = &args.config {
        ConfigOverrides::from_file(path)
            .and_then(|o| o.apply(&mut cfg, &mut split_seed_set))
            .map_err(CliError::usage)?;
    }
    let as_usize = |v: Option<u64>| v.map(|x| x as usize);
    let flags = ConfigOverrides {
        seed: args.seed,
        rounds: as_usize(args.rounds),
        population: as_usize(args.population),
        survivors: as_usize(args.survivors),
        fresh_per_round: as_usize(args.fresh),
        families: None,
        metric: None,
        feature_search: args.feature_search.map(|s| s == Switch::On),
        patience: as_usize(args.patience),
        min_delta: args.min_delta,
        mutation: None,
        split: None,
        search_space: None,
    };
    flags.apply(&mut cfg, &mut split_seed_set).map_err(CliError::usage)?;
    if let Some(list) = &args.families {
        cfg.families = parse_families(list.split(',')).map_err(CliError::usage)?;
    }
    if let Some(m) = args.metric {
        cfg.metric = m.into();
    }
    if !split_seed_set {
        cfg.split.seed = cfg.master_seed;
    }
    cfg.validate().map_err(CliError::usage)?;
    Ok(cfg)
}

fn round_line(r: &GenerationResult) -> String {
    let best = r.records.iter().find(|rec| rec.candidate_id == r.survivors[0]).expect("survivor scored");
    let family = r.candidates.iter().find(|c| c.id == best.candidate_id).map(|c| c.family);
    format!(
        "round {}: {} candidates, round best {:.4} (id {}, {}), best so far {:.4}, {:.0} ms",
        r.round,
        r.records.len(),
        best.score,
        best.candidate_id,
        family.map_or("?", ModelFamily::tag),
        r.best_score_so_far,
        r.wall_time_ms
    )
}

fn optimize(args: &OptimizeArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = build_config(args)?;
    let ds = Dataset::load_csv(&args.data, &args.label)?;
    let threads = args
        .threads
        .map(|t| t as usize)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let mut lines = Vec::new();
    let (model, report) = optimizer::run_with_threads(&cfg, &ds, threads, |r| lines.push(round_line(r)))?;
    for l in &lines {
        writeln!(out, "{l}").map_err(CliError::internal)?;
    }
    persist::save_model(&model, &args.out).map_err(write_error)?;
    persist::write_report(&report, &args.report).map_err(write_error)?;
    let w = &report.winner;
    let included: Vec<&str> = w.candidate.mask.indices().iter().map(|&j| ds.feature_names()[j].as_str()).collect();
    writeln!(
        out,
        "winner: id {} {} [{}] features [{}] validation {} {:.4} test {} {:.4}",
        w.candidate.id,
        w.candidate.family,
        w.candidate.params,
        included.join(","),
        cfg.metric,
        w.validation_score,
        cfg.metric,
        report.final_test.score
    )
    .map_err(CliError::internal)?;
    Ok(())
}

fn predict(args: &PredictArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let model = persist::load_model(&args.model).map_err(read_error)?;
    let table = Table::read(&args.data)?;
    let cols = model
        .feature_names
        .iter()
        .map(|name| {
            table
                .column_index(name)
                .map_err(|_| CliError::data(InterfaceError::ColumnMismatch(format!("missing feature column {name:?}"))))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let rows = table.parse_columns(&cols)?;
    let preds = rows
        .iter()
        .map(|x| model.predict(x))
        .collect::<Result<Vec<_>, ClassifierError>>()
        .map_err(CliError::data)?;

    let mut csv_text = String::from("prediction\n");
    for &p in &preds {
        csv_text.push_str(&model.class_names[p]);
        csv_text.push('\n');
    }
    write_atomic(&args.out, &csv_text).map_err(write_error)?;

    if let Some(label) = &args.label {
        let li = table.column_index(label)?;
        let labels = table
            .records
            .iter()
            .enumerate()
            .map(|(i, rec)| {
                model.class_names.iter().position(|c| c == &rec[li]).ok_or_else(|| {
                    CliError::data(format!("row {}: label {:?} is not a class of this model", i + 1, rec[li]))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let metric: Metric = args.metric.into();
        let cm = evaluator::confusion(&preds, &labels, model.n_classes).map_err(|e: EvalError| CliError::data(e))?;
        writeln!(out, "{metric}: {}", metric.score(&cm)).map_err(CliError::internal)?;
    }
    Ok(())
}

fn inspect(args: &InspectArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let model = persist::load_model(&args.model).map_err(read_error)?;
    let included: Vec<&str> = model.mask.indices().iter().map(|&j| model.feature_names[j].as_str()).collect();
    let text = format!(
        "family: {}\nparams: {}\nfeatures: {}\nclasses: {}\n",
        model.family,
        model.params,
        included.join(", "),
        model.class_names.join(", ")
    );
    out.write_all(text.as_bytes()).map_err(CliError::internal)?;
    Ok(())
}
