//! Command implementations behind the `dpl` binary.
//!
//! Every command is a pure function of its inputs and `--seed`; JSON outputs
//! use sorted keys and 17-significant-digit floats, so reruns are byte-stable.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use dpl_core::data::{load_dataset, split_dataset, DataError, Dataset};
use dpl_core::inference::BpOptions;
use dpl_core::json::to_canonical_string;
use dpl_core::learning::{fit, EmOptions, EmTrace, LearnError};
use dpl_core::logic::{parse_rules, validate_program, Program};
use dpl_core::metrics::{evaluate, sample_precision, EvalReport};
use dpl_core::prediction::{decide, Classifier, ClassifierKind, ModelFile, TrainOptions};
use dpl_core::synth::{generate, SynthSpec};

/// Sample size used for the sampled-precision estimate in reports.
pub const PRECISION_SAMPLE: usize = 100;

/// Cumulative rule subsets evaluated by `ablate`.
pub const ABLATION_ROWS: [&[&str]; 3] = [&["DS"], &["DS", "DP"], &["DS", "DP", "JI"]];

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, missing or malformed inputs. Exit code 2.
    #[error("{0}")]
    Config(String),
    /// Failures while running an otherwise valid configuration. Exit code 1.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<LearnError> for CliError {
    fn from(e: LearnError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn write_error(path: &Path, e: io::Error) -> CliError {
    CliError::Runtime(format!("cannot write {}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "dpl", version, about = "Weak supervision with weighted logic rules and variational EM")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic benchmark dataset from a JSON spec.
    Synth(SynthArgs),
    /// Fit a classifier with variational EM and write model, trace and report.
    Train(TrainArgs),
    /// Fit once per cumulative tag subset DS, DS+DP, DS+DP+JI and tabulate test metrics.
    Ablate(TrainArgs),
    /// Label a dataset with a trained model.
    Infer(InferArgs),
    /// Print grounding statistics for a program over a dataset.
    Stats(StatsArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Also split off a test set, keeping coupled instances together.
    #[arg(long)]
    pub test_out: Option<PathBuf>,
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ClassifierChoice {
    Logreg,
    Mlp1,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub program: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 3)]
    pub em_iters: usize,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 50)]
    pub bp_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub bp_tol: f64,
    #[arg(long, default_value_t = 0.3)]
    pub damping: f64,
    #[arg(long, default_value_t = 10)]
    pub weight_steps: usize,
    /// Classifier learning rate.
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.1)]
    pub weight_lr: f64,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub l2: f64,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[arg(long, value_enum, default_value_t = ClassifierChoice::Logreg)]
    pub classifier: ClassifierChoice,
    /// Hidden units for mlp1.
    #[arg(long, default_value_t = 16)]
    pub hidden: usize,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Predictions file (JSONL of {id, label, p1}).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub program: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
}

/// Everything a fit needs, resolved from flags.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub program_path: PathBuf,
    pub data_path: PathBuf,
    pub test_path: Option<PathBuf>,
    pub em: EmOptions,
    pub classifier: ClassifierKind,
    pub seed: u64,
    pub threshold: f64,
    pub output_dir: PathBuf,
}

impl TryFrom<&TrainArgs> for RunConfig {
    type Error = CliError;

    fn try_from(a: &TrainArgs) -> Result<Self, CliError> {
        if a.em_iters == 0 {
            return Err(CliError::Config("--em-iters must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&a.threshold) {
            return Err(CliError::Config("--threshold must lie in [0, 1]".into()));
        }
        let bp = BpOptions { max_iterations: a.bp_iters, tolerance: a.bp_tol, damping: a.damping };
        bp.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let train =
            TrainOptions { epochs: a.epochs, learning_rate: a.lr, batch_size: a.batch_size, seed: a.seed, l2: a.l2 };
        if !(a.lr > 0.0) || a.batch_size == 0 || !(a.l2 >= 0.0) || !(a.weight_lr > 0.0) {
            return Err(CliError::Config("learning rates and batch size must be positive, l2 non-negative".into()));
        }
        let classifier = match a.classifier {
            ClassifierChoice::Logreg => ClassifierKind::Logreg,
            ClassifierChoice::Mlp1 if a.hidden == 0 => return Err(CliError::Config("--hidden must be positive".into())),
            ClassifierChoice::Mlp1 => ClassifierKind::Mlp1 { hidden: a.hidden },
        };
        Ok(RunConfig {
            program_path: a.program.clone(),
            data_path: a.data.clone(),
            test_path: a.test.clone(),
            em: EmOptions {
                em_iterations: a.em_iters,
                bp,
                train,
                weight_steps: a.weight_steps,
                weight_learning_rate: a.weight_lr,
                line_search: true,
            },
            classifier,
            seed: a.seed,
            threshold: a.threshold,
            output_dir: a.out.clone(),
        })
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Train(a) => cmd_train(&RunConfig::try_from(&a)?).map(|_| ()),
        Command::Ablate(a) => {
            let table = cmd_ablate(&RunConfig::try_from(&a)?)?;
            print!("{}", table.render());
            Ok(())
        }
        Command::Infer(a) => cmd_infer(&a.model, &a.data, &a.out, a.threshold).map(|_| ()),
        Command::Stats(a) => {
            let ds = read_dataset(&a.data, "data")?;
            let program = read_program(&a.program, &ds)?;
            let g = dpl_core::grounding::ground(&program, &ds, None).map_err(|e| CliError::Runtime(e.to_string()))?;
            println!("{}", canonical(&dpl_core::grounding::graph_stats(&g))?);
            Ok(())
        }
    }
}

fn canonical<T: Serialize>(value: &T) -> Result<String, CliError> {
    to_canonical_string(value).map_err(|e| CliError::Runtime(format!("serialization failed: {e}")))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = canonical(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| write_error(path, e))
}

fn read_dataset(path: &Path, what: &str) -> Result<Dataset, CliError> {
    if !path.exists() {
        return Err(CliError::Config(format!("{what} not found: {}", path.display())));
    }
    load_dataset(path).map_err(|e| match e {
        DataError::Io(e) => CliError::Runtime(format!("cannot read {}: {e}", path.display())),
        other => CliError::Config(format!("{}: {other}", path.display())),
    })
}

fn read_program(path: &Path, ds: &Dataset) -> Result<Program, CliError> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => CliError::Config(format!("program not found: {}", path.display())),
        _ => CliError::Runtime(format!("cannot read {}: {e}", path.display())),
    })?;
    let rules = parse_rules(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    validate_program(rules, ds.schema()).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn cmd_synth(a: &SynthArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&a.spec)
        .map_err(|e| CliError::Config(format!("cannot read spec {}: {e}", a.spec.display())))?;
    let spec: SynthSpec =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("invalid spec {}: {e}", a.spec.display())))?;
    let ds = generate(&spec).map_err(|e| CliError::Config(e.to_string()))?;
    match &a.test_out {
        None => write_dataset(&a.out, &ds),
        Some(test_out) => {
            let (train, test) =
                split_dataset(&ds, 1.0 - a.test_fraction, spec.seed).map_err(|e| CliError::Config(e.to_string()))?;
            write_dataset(&a.out, &train)?;
            write_dataset(test_out, &test)
        }
    }
}

/// Sidecar path holding `{id, gold}` lines next to a dataset file.
pub fn gold_path(data: &Path) -> PathBuf {
    let mut name = data.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".gold.jsonl");
    data.with_file_name(name)
}

#[derive(Serialize)]
struct GoldLine<'a> {
    id: &'a str,
    gold: u8,
}

fn write_dataset(path: &Path, ds: &Dataset) -> Result<(), CliError> {
    let file = fs::File::create(path).map_err(|e| write_error(path, e))?;
    let mut out = BufWriter::new(file);
    ds.write_jsonl(&mut out).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
    out.flush().map_err(|e| write_error(path, e))?;

    let sidecar = gold_path(path);
    let file = fs::File::create(&sidecar).map_err(|e| write_error(&sidecar, e))?;
    let mut out = BufWriter::new(file);
    for inst in ds.instances() {
        if let Some(gold) = inst.gold {
            writeln!(out, "{}", canonical(&GoldLine { id: &inst.id, gold })?).map_err(|e| write_error(&sidecar, e))?;
        }
    }
    out.flush().map_err(|e| write_error(&sidecar, e))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct TrainTrace {
    #[serde(flatten)]
    pub trace: EmTrace,
    pub learned_weights: std::collections::BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct TestReport {
    pub threshold: f64,
    pub instances: usize,
    pub evaluation: EvalReport,
}

pub struct TrainOutcome {
    pub classifier: Classifier,
    pub trace: TrainTrace,
    pub report: Option<TestReport>,
}

fn evaluate_on(c: &Classifier, test: &Dataset, threshold: f64, seed: u64) -> Result<TestReport, CliError> {
    let gold = test.gold().ok_or_else(|| CliError::Config("test set lacks gold labels".into()))?;
    let p1 = c.predict_dataset(test).map_err(|e| CliError::Config(e.to_string()))?;
    let pred: Vec<u8> = p1.iter().map(|&p| decide(p, threshold)).collect();
    let mut evaluation = evaluate(&pred, &gold).map_err(|e| CliError::Runtime(e.to_string()))?;
    let positives: Vec<usize> = (0..pred.len()).filter(|&i| pred[i] == 1).collect();
    if !positives.is_empty() {
        let sample = PRECISION_SAMPLE.min(positives.len());
        let est = sample_precision(&positives, sample, seed, |&i| gold[i] == 1)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        evaluation.sample_precision = Some(est.sample_precision);
        evaluation.absolute_recall = Some(est.absolute_recall);
    }
    Ok(TestReport { threshold, instances: test.len(), evaluation })
}

fn load_inputs(cfg: &RunConfig) -> Result<(Program, Dataset, Option<Dataset>), CliError> {
    let ds = read_dataset(&cfg.data_path, "data")?;
    let program = read_program(&cfg.program_path, &ds)?;
    let test = match &cfg.test_path {
        Some(p) => {
            let test = read_dataset(p, "test data")?;
            if !test.is_empty() && test.dim() != ds.dim() {
                return Err(CliError::Config(format!(
                    "test set has {} features, training set {}",
                    test.dim(),
                    ds.dim()
                )));
            }
            Some(test)
        }
        None => None,
    };
    if ds.is_empty() {
        return Err(CliError::Config(format!("{}: training set is empty", cfg.data_path.display())));
    }
    Ok((program, ds, test))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| write_error(dir, e))
}

/// Writes `model.json`, `trace.json` and, with a test set, `report.json`.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainOutcome, CliError> {
    let (program, ds, test) = load_inputs(cfg)?;
    let result = fit(&program, &ds, cfg.classifier, &cfg.em, cfg.seed)?;
    let trace = TrainTrace { trace: result.trace, learned_weights: result.program.learned_weights() };
    let report = test.as_ref().map(|t| evaluate_on(&result.classifier, t, cfg.threshold, cfg.seed)).transpose()?;

    create_dir(&cfg.output_dir)?;
    write_json(&cfg.output_dir.join("model.json"), &ModelFile::from(&result.classifier))?;
    write_json(&cfg.output_dir.join("trace.json"), &trace)?;
    if let Some(r) = &report {
        write_json(&cfg.output_dir.join("report.json"), r)?;
        log::info!("test f1 {:.4}, accuracy {:.4}", r.evaluation.f1, r.evaluation.accuracy);
    }
    Ok(TrainOutcome { classifier: result.classifier, trace, report })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct AblationRow {
    pub label: String,
    pub tags: Vec<String>,
    pub rules: usize,
    pub evaluation: EvalReport,
    pub learned_weights: std::collections::BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct AblationTable {
    pub seed: u64,
    pub threshold: f64,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn render(&self) -> String {
        let mut out = format!("{:<10} {:>6} {:>8} {:>8} {:>8} {:>8}\n", "rules", "count", "acc", "f1", "prec", "rec");
        for r in &self.rows {
            let e = &r.evaluation;
            out.push_str(&format!(
                "{:<10} {:>6} {:>8.4} {:>8.4} {:>8.4} {:>8.4}\n",
                r.label, r.rules, e.accuracy, e.f1, e.precision, e.recall
            ));
        }
        out
    }
}

/// Runs [`fit`] once per row of [`ABLATION_ROWS`] with the same seed and
/// writes `ablation.json` and `ablation.txt`. Untagged rules appear in every row.
pub fn cmd_ablate(cfg: &RunConfig) -> Result<AblationTable, CliError> {
    let (program, ds, test) = load_inputs(cfg)?;
    let test = test.ok_or_else(|| CliError::Config("ablate needs --test".into()))?;
    let mut rows = Vec::new();
    for tags in ABLATION_ROWS {
        let subset = program.with_tags(tags);
        let result = fit(&subset, &ds, cfg.classifier, &cfg.em, cfg.seed)?;
        let report = evaluate_on(&result.classifier, &test, cfg.threshold, cfg.seed)?;
        log::info!("{}: f1 {:.4}", tags.join("+"), report.evaluation.f1);
        rows.push(AblationRow {
            label: tags.join("+"),
            tags: tags.iter().map(|t| t.to_string()).collect(),
            rules: subset.len(),
            evaluation: report.evaluation,
            learned_weights: result.program.learned_weights(),
        });
    }
    let table = AblationTable { seed: cfg.seed, threshold: cfg.threshold, rows };
    create_dir(&cfg.output_dir)?;
    write_json(&cfg.output_dir.join("ablation.json"), &table)?;
    let txt = cfg.output_dir.join("ablation.txt");
    fs::write(&txt, table.render()).map_err(|e| write_error(&txt, e))?;
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub id: String,
    pub label: u8,
    pub p1: f64,
}

/// Writes one `{id, label, p1}` line per instance; returns the predictions.
pub fn cmd_infer(model: &Path, data: &Path, out: &Path, threshold: f64) -> Result<Vec<Prediction>, CliError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(CliError::Config("--threshold must lie in [0, 1]".into()));
    }
    let text = fs::read_to_string(model).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => CliError::Config(format!("model not found: {}", model.display())),
        _ => CliError::Runtime(format!("cannot read {}: {e}", model.display())),
    })?;
    let file: ModelFile =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("invalid model {}: {e}", model.display())))?;
    let classifier = Classifier::try_from(file).map_err(|e| CliError::Config(e.to_string()))?;
    let ds = read_dataset(data, "data")?;
    if !ds.is_empty() && ds.dim() != classifier.dim() {
        return Err(CliError::Config(format!(
            "dimension mismatch: model expects {} features, data has {}",
            classifier.dim(),
            ds.dim()
        )));
    }
    let p1 = classifier.predict_dataset(&ds).map_err(|e| CliError::Config(e.to_string()))?;
    let predictions: Vec<Prediction> = ds
        .instances()
        .iter()
        .zip(p1)
        .map(|(inst, p)| Prediction { id: inst.id.clone(), label: decide(p, threshold), p1: p })
        .collect();
    let f = fs::File::create(out).map_err(|e| write_error(out, e))?;
    let mut w = BufWriter::new(f);
    for p in &predictions {
        writeln!(w, "{}", canonical(p)?).map_err(|e| write_error(out, e))?;
    }
    w.flush().map_err(|e| write_error(out, e))?;
    Ok(predictions)
}
