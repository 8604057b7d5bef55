use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use treeinf::data_io::{encode_with, fit_encoding, load_csv, load_schema, read_csv, to_json_string, write_report_dir, EncodingMeta, RawTable};
use treeinf::gbdt::{train, Dataset, GbdtModel, LossFamily, TaskKind, TrainConfig};
use treeinf::harness::datasets::bundled_csv;
use treeinf::harness::synth::{generate, to_csv};
use treeinf::harness::{affinity_histogram, correlation_matrix, run_experiment, runtime_bench, ExperimentSpec, Generator, Protocol, SynthSpec};
use treeinf::influence::output::{read_influence, write_csv, write_json, InfluenceDocument};
use treeinf::influence::{EstimatorKind, EstimatorOptions, Explainer, Retrainer, SignConvention, Target};

#[derive(Debug, Parser)]
#[command(name = "treeinf", version, about = "Training-data influence for gradient-boosted trees")]
struct Cli {
    /// Drop lambda from the LeafInfluence and LeafInfSP denominators.
    #[arg(long, global = true)]
    paper_exact_denominators: bool,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model on a CSV file.
    Train(TrainArgs),
    /// Influence of every training row on one or more targets.
    Influence(InfluenceArgs),
    /// Run an evaluation protocol from a JSON spec.
    Experiment(ExperimentArgs),
    /// Correlate influence files from different estimators.
    Correlate(CorrelateArgs),
    /// Count trees sharing the target's leaf for each training row.
    Affinity(AffinityArgs),
    /// Time estimator fitting and one-target influence.
    Bench(BenchArgs),
    /// Write a synthetic dataset as CSV.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct DataArgs {
    /// CSV path, or `bundled:<name>` for a built-in dataset.
    #[arg(long)]
    data: String,
    /// JSON object mapping column names to numeric, binary, categorical or target.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Target column (default: schema, then the last column).
    #[arg(long)]
    target: Option<String>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// TrainConfig JSON; missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Force the task instead of inferring it from the target column.
    #[arg(long)]
    task: Option<String>,
    /// Output path, `-` for stdout.
    #[arg(long)]
    out: String,
}

#[derive(Debug, Args)]
struct InfluenceArgs {
    /// Model written by `train`.
    #[arg(long)]
    model: PathBuf,
    /// The training data the model was fitted on.
    #[arg(long)]
    data: String,
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long)]
    estimator: EstimatorKind,
    /// Target rows, comma separated; rows of --target-file if given, else of --data.
    #[arg(long, value_delimiter = ',')]
    target_id: Vec<usize>,
    /// CSV of target rows in the training layout; every row is a target
    /// unless --target-id selects some.
    #[arg(long)]
    target_file: Option<PathBuf>,
    /// Replace each training label with this value (label-edit influence).
    #[arg(long)]
    y_star: Option<f64>,
    /// EstimatorOptions JSON.
    #[arg(long)]
    options: Option<PathBuf>,
    /// Seed for the random baselines.
    #[arg(long)]
    seed: Option<u64>,
    /// csv or json (default: from the --out extension, csv for stdout).
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    out: String,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    #[arg(long)]
    protocol: Protocol,
    /// ExperimentSpec JSON; `protocol` may be omitted from it.
    #[arg(long)]
    spec: PathBuf,
    /// Output directory for CSV, plot data and summary.json; `-` prints the summary.
    #[arg(long)]
    out: String,
}

#[derive(Debug, Args)]
struct CorrelateArgs {
    /// Influence files (CSV or JSON), comma separated or repeated.
    #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
    influence_files: Vec<PathBuf>,
    #[arg(long)]
    out: String,
}

#[derive(Debug, Args)]
struct AffinityArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: String,
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long)]
    target_id: usize,
    /// Take the target from this CSV instead of --data.
    #[arg(long)]
    target_file: Option<PathBuf>,
    #[arg(long)]
    out: String,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', required = true)]
    estimators: Vec<EstimatorKind>,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    /// Row of --data used as the target.
    #[arg(long, default_value_t = 0)]
    target_id: usize,
    #[arg(long)]
    out: String,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    generator: Generator,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fraction of labels flipped by the `flipped` generator.
    #[arg(long, default_value_t = 0.1)]
    flip_fraction: f64,
    #[arg(long)]
    out: String,
}

/// A trained model with the encoding of its training table.
#[derive(Debug, Serialize, Deserialize)]
struct ModelBundle {
    encoding: EncodingMeta,
    model: GbdtModel,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let exact = cli.paper_exact_denominators;
    match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Influence(a) => cmd_influence(a, exact),
        Command::Experiment(a) => cmd_experiment(a, exact),
        Command::Correlate(a) => cmd_correlate(a),
        Command::Affinity(a) => cmd_affinity(a),
        Command::Bench(a) => cmd_bench(a, exact),
        Command::Synth(a) => cmd_synth(a),
    }
}

fn emit(out: &str, text: &str) -> Result<()> {
    if out == "-" {
        io::stdout().write_all(text.as_bytes())?;
    } else {
        fs::write(out, text).with_context(|| format!("writing {out}"))?;
    }
    Ok(())
}

fn read_table(data: &str, schema: Option<&Path>, target: Option<&str>) -> Result<RawTable> {
    let schema = schema.map(load_schema).transpose()?;
    let table = match data.strip_prefix("bundled:") {
        Some(name) => read_csv(bundled_csv(name)?.as_bytes(), schema.as_ref(), target.or(Some("target")))?,
        None => load_csv(Path::new(data), schema.as_ref(), target).with_context(|| format!("reading {data}"))?,
    };
    Ok(table)
}

fn read_config(path: Option<&Path>) -> Result<TrainConfig> {
    match path {
        None => Ok(TrainConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?)
        }
    }
}

fn parse_task(task: Option<&str>) -> Result<Option<TaskKind>> {
    Ok(match task {
        None => None,
        Some("regression") => Some(TaskKind::Regression),
        Some("binary") => Some(TaskKind::Binary),
        Some("multiclass") => Some(TaskKind::Multiclass),
        Some(other) => bail!("unknown task `{other}`; valid tasks: regression, binary, multiclass"),
    })
}

fn load_bundle(path: &Path) -> Result<ModelBundle> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing model {}", path.display()))
}

/// Encodes `data` with the bundle's encoding and checks it is the training set.
fn training_data(bundle: &ModelBundle, data: &str, schema: Option<&Path>) -> Result<Dataset> {
    let raw = read_table(data, schema, Some(&bundle.encoding.target.name))?;
    let dataset = encode_with(&raw, &bundle.encoding)?;
    bundle.model.check_trained_on(&dataset)?;
    Ok(dataset)
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let raw = read_table(&a.data.data, a.data.schema.as_deref(), a.data.target.as_deref())?;
    let encoding = fit_encoding(&raw, parse_task(a.task.as_deref())?)?;
    let dataset = encode_with(&raw, &encoding)?;
    let config = read_config(a.config.as_deref())?;
    let model = train(&dataset, &config, LossFamily::for_task(dataset.task()))?;
    log::info!("trained {} iterations on {} rows", model.n_iterations(), dataset.n_rows());
    emit(&a.out, &to_json_string(&ModelBundle { encoding, model })?)
}

fn cmd_influence(a: InfluenceArgs, exact: bool) -> Result<()> {
    let bundle = load_bundle(&a.model)?;
    let dataset = Arc::new(training_data(&bundle, &a.data, a.schema.as_deref())?);
    let pool = match &a.target_file {
        Some(p) => {
            let raw = read_table(&p.to_string_lossy(), a.schema.as_deref(), Some(&bundle.encoding.target.name))?;
            encode_with(&raw, &bundle.encoding)?
        }
        None => (*dataset).clone(),
    };
    let ids: Vec<usize> = if a.target_id.is_empty() {
        if a.target_file.is_none() {
            bail!("give --target-id, --target-file or both");
        }
        (0..pool.n_rows()).collect()
    } else {
        a.target_id.clone()
    };
    if let Some(&bad) = ids.iter().find(|&&i| i >= pool.n_rows()) {
        bail!("target id {bad} out of range for {} rows", pool.n_rows());
    }
    let targets: Vec<Target> = ids.iter().map(|&i| Target::from_row(&pool, i)).collect();

    let mut options: EstimatorOptions = match &a.options {
        Some(p) => serde_json::from_str(&fs::read_to_string(p)?).with_context(|| format!("parsing {}", p.display()))?,
        None => EstimatorOptions::default(),
    };
    options.paper_exact_denominators |= exact;
    if let Some(s) = a.seed {
        options.seed = s;
    }
    let model = Arc::new(bundle.model);
    let retrainer = Retrainer::new(dataset.clone(), model.config.clone(), model.loss).with_env_disk_cache();
    let explainer = Explainer::fit(a.estimator, model.clone(), &retrainer, &options)?;
    let vectors = match a.y_star {
        None => explainer.influence_many(&targets)?,
        Some(y) => targets
            .iter()
            .map(|t| explainer.edit_influence(t, y))
            .collect::<treeinf::Result<Vec<_>>>()?,
    };

    let json = match a.format.as_deref() {
        Some("json") => true,
        Some("csv") => false,
        Some(other) => bail!("unknown format `{other}`; valid formats: csv, json"),
        None => a.out.ends_with(".json"),
    };
    let mut buf = Vec::new();
    if json {
        let doc = InfluenceDocument {
            estimator: a.estimator,
            convention: SignConvention::ProponentPositive,
            model_fingerprint: model.train_fingerprint.clone(),
            options,
            vectors,
        };
        write_json(&mut buf, &doc)?;
    } else {
        write_csv(&mut buf, &vectors)?;
    }
    emit(&a.out, &String::from_utf8(buf)?)
}

fn cmd_experiment(a: ExperimentArgs, exact: bool) -> Result<()> {
    let text = fs::read_to_string(&a.spec).with_context(|| format!("reading {}", a.spec.display()))?;
    let mut value: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", a.spec.display()))?;
    let obj = value.as_object_mut().context("experiment spec must be a JSON object")?;
    if let Some(p) = obj.get("protocol") {
        let named: Protocol = serde_json::from_value(p.clone())?;
        if named != a.protocol {
            bail!("--protocol {} disagrees with the spec's protocol {named}", a.protocol);
        }
    }
    obj.insert("protocol".into(), serde_json::to_value(a.protocol)?);
    let mut spec: ExperimentSpec = serde_json::from_value(value).with_context(|| format!("parsing {}", a.spec.display()))?;
    spec.estimator_options.paper_exact_denominators |= exact;
    spec.validate()?;
    let report = run_experiment(&spec)?;
    if let Some(table) = &report.ranking {
        for e in &table.entries {
            log::info!(
                "{}: mean rank {:?}, relative magnitude {:?}",
                e.estimator,
                e.mean_rank,
                e.relative_magnitude
            );
        }
    }
    for r in &report.audit {
        log::warn!("skipped: {} ({:?}, target {:?})", r.message, r.estimator, r.target_id);
    }
    if a.out == "-" {
        return emit("-", &to_json_string(&report)?);
    }
    let written = write_report_dir(&report, Path::new(&a.out))?;
    for p in written {
        log::info!("wrote {}", p.display());
    }
    Ok(())
}

fn cmd_correlate(a: CorrelateArgs) -> Result<()> {
    let mut sets = Vec::new();
    for p in &a.influence_files {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        let vectors = read_influence(&text).with_context(|| format!("parsing {}", p.display()))?;
        let name = vectors
            .first()
            .map(|v| v.estimator.name().to_string())
            .with_context(|| format!("{} holds no influence vectors", p.display()))?;
        if sets.iter().any(|(n, _): &(String, _)| *n == name) {
            bail!("two files hold `{name}` values");
        }
        sets.push((name, vectors));
    }
    let report = correlation_matrix(&sets)?;
    emit(&a.out, &to_json_string(&report)?)
}

fn cmd_affinity(a: AffinityArgs) -> Result<()> {
    let bundle = load_bundle(&a.model)?;
    let dataset = training_data(&bundle, &a.data, a.schema.as_deref())?;
    let pool = match &a.target_file {
        Some(p) => encode_with(
            &read_table(&p.to_string_lossy(), a.schema.as_deref(), Some(&bundle.encoding.target.name))?,
            &bundle.encoding,
        )?,
        None => dataset.clone(),
    };
    if a.target_id >= pool.n_rows() {
        bail!("target id {} out of range for {} rows", a.target_id, pool.n_rows());
    }
    let report = affinity_histogram(&bundle.model, &dataset, &Target::from_row(&pool, a.target_id))?;
    emit(&a.out, &to_json_string(&report)?)
}

fn cmd_bench(a: BenchArgs, exact: bool) -> Result<()> {
    let raw = read_table(&a.data.data, a.data.schema.as_deref(), a.data.target.as_deref())?;
    let dataset = encode_with(&raw, &fit_encoding(&raw, None)?)?;
    if a.target_id >= dataset.n_rows() {
        bail!("target id {} out of range for {} rows", a.target_id, dataset.n_rows());
    }
    let target = Target::from_row(&dataset, a.target_id);
    let config = read_config(a.config.as_deref())?;
    let loss = LossFamily::for_task(dataset.task());
    let retrainer = Retrainer::new(Arc::new(dataset), config, loss);
    let model = Arc::new(retrainer.train_full()?);
    let options = EstimatorOptions {
        paper_exact_denominators: exact,
        ..EstimatorOptions::default()
    };
    let report = runtime_bench(&a.estimators, &retrainer, model, &target, a.repeats, &options)?;
    emit(&a.out, &to_json_string(&report)?)
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let spec = SynthSpec {
        generator: a.generator,
        n: a.n,
        seed: a.seed,
        flip_fraction: a.flip_fraction,
    };
    emit(&a.out, &to_csv(&generate(&spec)?.dataset))
}
