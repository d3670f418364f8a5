use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use rulsearch_core::configspace::define_space;
use rulsearch_core::dataset::{
    generate_synthetic, label_rul, load_cmapss, load_cmapss_series, load_long_csv, write_long_csv, CsvSchema,
    RunToFailureDataset, TestInstance,
};
use rulsearch_core::ensemble::{EnsembleSettings, FittedEnsemble};
use rulsearch_core::pipeline::FittedPipeline;
use rulsearch_core::report::{run_seed, seed_metrics, summarize, SeedMetrics};
use rulsearch_core::search::{compute_regret, write_regret_csv, SearchBudget, SearchOptions};
use rulsearch_core::Error;

#[derive(Parser)]
#[command(name = "rulsearch", version, about = "Pipeline search for remaining-useful-life regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Search, ensemble and evaluate once per seed.
    Fit(FitArgs),
    /// Predict the RUL of every series in a file with a saved model.
    Predict(PredictArgs),
    /// Write the configuration space manifest as JSON.
    Space {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic run-to-failure fleet as long CSV plus schema.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum DataFormat {
    Cmapss,
    Csv,
}

#[derive(Args, Debug, Clone)]
struct DataArgs {
    #[arg(long, value_enum, default_value = "cmapss", env = "RULSEARCH_DATA_FORMAT")]
    data_format: DataFormat,
    #[arg(long, env = "RULSEARCH_TRAIN")]
    train: PathBuf,
    #[arg(long, env = "RULSEARCH_TEST")]
    test: Option<PathBuf>,
    /// True RUL per test unit, one value per line.
    #[arg(long, env = "RULSEARCH_RUL")]
    rul: Option<PathBuf>,
    /// JSON column-role mapping for the csv format.
    #[arg(long, env = "RULSEARCH_SCHEMA")]
    schema: Option<PathBuf>,
    #[arg(long, env = "RULSEARCH_RUL_CAP")]
    rul_cap: Option<f64>,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 3600.0, env = "RULSEARCH_WALLTIME_SECONDS")]
    walltime_seconds: f64,
    #[arg(long, default_value_t = 300.0, env = "RULSEARCH_TRIAL_TIMEOUT_SECONDS")]
    trial_timeout_seconds: f64,
    #[arg(long, default_value_t = 81, env = "RULSEARCH_MAX_BUDGET")]
    max_budget: usize,
    #[arg(long, default_value_t = 3, env = "RULSEARCH_ETA")]
    eta: usize,
    #[arg(long, env = "RULSEARCH_WORKERS")]
    workers: Option<usize>,
    /// Stop after this many trials even if walltime remains.
    #[arg(long, env = "RULSEARCH_MAX_TRIALS")]
    max_trials: Option<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0", env = "RULSEARCH_SEEDS")]
    seeds: Vec<u64>,
    /// Bag size of the greedy ensemble.
    #[arg(long, default_value_t = 25, env = "RULSEARCH_ENSEMBLE_SIZE")]
    ensemble_size: usize,
    #[arg(long, default_value_t = 10, env = "RULSEARCH_ENSEMBLE_MAX_DISTINCT")]
    ensemble_max_distinct: usize,
    #[arg(long, env = "RULSEARCH_OUT")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PredictArgs {
    /// Ensemble directory or single pipeline bundle.
    #[arg(long, env = "RULSEARCH_BUNDLE")]
    bundle: PathBuf,
    #[arg(long, value_enum, default_value = "cmapss", env = "RULSEARCH_DATA_FORMAT")]
    data_format: DataFormat,
    #[arg(long, env = "RULSEARCH_DATA")]
    data: PathBuf,
    #[arg(long, env = "RULSEARCH_SCHEMA")]
    schema: Option<PathBuf>,
    /// Output CSV; standard output when absent.
    #[arg(long, env = "RULSEARCH_OUT")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value_t = 30)]
    instances: usize,
    #[arg(long, default_value_t = 3)]
    dim: usize,
    #[arg(long, default_value_t = 200)]
    base_length: usize,
    #[arg(long, default_value_t = 0.05)]
    noise_sd: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory receiving data.csv and schema.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DatasetSpec {
    format: DataFormat,
    train: PathBuf,
    test: Option<PathBuf>,
    rul: Option<PathBuf>,
    schema: Option<PathBuf>,
    rul_cap: Option<f64>,
}

/// Everything a fit run depends on; written next to the results.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct RunConfig {
    dataset: DatasetSpec,
    budget: SearchBudget,
    seeds: Vec<u64>,
    ensemble: EnsembleSettings,
    out: PathBuf,
}

impl RunConfig {
    fn from_args(a: FitArgs) -> anyhow::Result<Self> {
        let mut budget = SearchBudget {
            total_walltime_seconds: a.walltime_seconds,
            per_trial_timeout_seconds: a.trial_timeout_seconds,
            max_budget: a.max_budget,
            eta: a.eta,
            max_trials: a.max_trials,
            ..SearchBudget::default()
        };
        if let Some(w) = a.workers {
            budget.n_workers = w;
        }
        budget.validate()?;
        if a.seeds.is_empty() {
            bail!("at least one seed is required");
        }
        if a.ensemble_size == 0 || a.ensemble_max_distinct == 0 {
            bail!("ensemble size and distinct-member cap must be at least 1");
        }
        Ok(Self {
            dataset: DatasetSpec {
                format: a.data.data_format,
                train: a.data.train,
                test: a.data.test,
                rul: a.data.rul,
                schema: a.data.schema,
                rul_cap: a.data.rul_cap,
            },
            budget,
            seeds: a.seeds,
            ensemble: EnsembleSettings {
                max_distinct: a.ensemble_max_distinct,
                rounds: a.ensemble_size,
                ..EnsembleSettings::default()
            },
            out: a.out,
        })
    }
}

fn read_schema(path: Option<&Path>) -> anyhow::Result<CsvSchema> {
    let path = path.context("--schema is required for the csv format")?;
    CsvSchema::from_json_file(path).with_context(|| format!("reading schema {}", path.display()))
}

fn read_rul_lines(path: &Path) -> anyhow::Result<Vec<f64>> {
    fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            l.trim()
                .parse::<f64>()
                .with_context(|| format!("{}: line {}", path.display(), i + 1))
        })
        .collect()
}

/// Whole series as prediction inputs; the RUL is the last label when known.
fn as_test_instances(ds: &RunToFailureDataset, truth: Option<&[f64]>) -> anyhow::Result<Vec<TestInstance>> {
    if let Some(t) = truth {
        if t.len() != ds.len() {
            bail!("{} series but {} RUL values", ds.len(), t.len());
        }
    }
    Ok(ds
        .instances
        .iter()
        .enumerate()
        .map(|(i, inst)| TestInstance {
            id: inst.id.clone(),
            values: inst.values.clone(),
            true_rul: truth
                .map(|t| t[i])
                .or_else(|| inst.rul.as_ref().and_then(|r| r.last().copied()))
                .unwrap_or(f64::NAN),
            symbols: ds.symbols.clone(),
        })
        .collect())
}

/// Labelled training data and test instances (empty when no test data).
fn load_data(spec: &DatasetSpec) -> anyhow::Result<(RunToFailureDataset, Vec<TestInstance>)> {
    let (train, test) = match spec.format {
        DataFormat::Cmapss => match (&spec.test, &spec.rul) {
            (Some(test), Some(rul)) => load_cmapss(&spec.train, test, rul)?,
            (None, None) => (load_cmapss_series(&spec.train)?, Vec::new()),
            _ => bail!("--test and --rul go together for the cmapss format"),
        },
        DataFormat::Csv => {
            let schema = read_schema(spec.schema.as_deref())?;
            let train = load_long_csv(&spec.train, &schema)?;
            let test = match &spec.test {
                Some(path) => {
                    let ds = load_long_csv(path, &schema)?;
                    let truth = spec.rul.as_deref().map(read_rul_lines).transpose()?;
                    let t = as_test_instances(&ds, truth.as_deref())?;
                    if t.iter().any(|x| !(x.true_rul >= 0.0)) {
                        bail!("csv test data needs a target column or --rul file");
                    }
                    t
                }
                None => Vec::new(),
            };
            (train, test)
        }
    };
    let labelled = if train.instances.iter().all(|i| i.rul.is_some()) && spec.rul_cap.is_none() {
        train
    } else {
        label_rul(&train, spec.rul_cap)
    };
    if !test.is_empty() && test[0].values.nrows() != labelled.dim() {
        bail!(
            "test data has {} channels, training data {}",
            test[0].values.nrows(),
            labelled.dim()
        );
    }
    Ok((labelled, test))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn cmd_fit(config: &RunConfig) -> anyhow::Result<bool> {
    fs::create_dir_all(&config.out).with_context(|| format!("creating {}", config.out.display()))?;
    write_json(&config.out.join("run_config.json"), config)?;
    let (dataset, test) = load_data(&config.dataset)?;
    log::info!("{} training series, {} test series, d = {}", dataset.len(), test.len(), dataset.dim());
    let space = define_space();
    let mut per_seed: Vec<SeedMetrics> = Vec::new();
    let mut failed = Vec::new();
    for &seed in &config.seeds {
        let dir = config.out.join(seed.to_string());
        fs::create_dir_all(&dir)?;
        match run_seed(
            &space,
            &dataset,
            &test,
            &config.budget,
            &config.ensemble,
            &SearchOptions::default(),
            seed,
        ) {
            Ok(run) => {
                let history = &run.outcome.history;
                history.write_jsonl(&dir.join("history.jsonl"))?;
                let best = history.incumbent().and_then(|r| r.val_rmse).unwrap_or(f64::NAN);
                write_regret_csv(&compute_regret(history, best), &dir.join("regret.csv"))?;
                run.ensemble.save(&dir.join("ensemble"))?;
                let mut pred = csv::Writer::from_path(dir.join("test_predictions.csv"))?;
                pred.write_record(["instance_id", "predicted_rul", "true_rul"])?;
                for (t, p) in test.iter().zip(&run.test_predictions) {
                    pred.write_record([t.id.clone(), p.to_string(), t.true_rul.to_string()])?;
                }
                pred.flush()?;
                let metrics = seed_metrics(
                    seed,
                    history,
                    &run.ensemble.ensemble,
                    config.budget.max_budget,
                    run.test_rmse,
                );
                write_json(&dir.join("metrics.json"), &metrics)?;
                match run.test_rmse {
                    Some(r) => log::info!("seed {seed}: test rmse {r:.4}"),
                    None => log::info!("seed {seed}: done (no test data)"),
                }
                per_seed.push(metrics);
            }
            Err(Error::SearchFailed { history }) => {
                history.write_jsonl(&dir.join("history.jsonl"))?;
                log::error!("seed {seed}: no successful trial in {} attempts", history.len());
                failed.push(seed);
            }
            Err(e) => {
                log::error!("seed {seed}: {e}");
                failed.push(seed);
            }
        }
    }
    let summary = summarize(per_seed, failed);
    write_json(&config.out.join("summary.json"), &summary)?;
    if let (Some(m), Some(s)) = (summary.test_rmse_mean, summary.test_rmse_std) {
        println!("test rmse {m:.4} ± {s:.4} over {} seed(s)", summary.seeds.len());
    }
    Ok(!summary.seeds.is_empty())
}

enum Model {
    Ensemble(FittedEnsemble),
    Single(FittedPipeline),
}

impl Model {
    fn load(path: &Path) -> anyhow::Result<Self> {
        if path.join("ensemble.json").exists() {
            Ok(Model::Ensemble(FittedEnsemble::load(path)?))
        } else if path.join("manifest.json").exists() {
            Ok(Model::Single(FittedPipeline::load_bundle(path)?))
        } else {
            bail!("{} is neither an ensemble nor a pipeline bundle", path.display())
        }
    }

    fn predict(&self, t: &TestInstance) -> rulsearch_core::Result<f64> {
        match self {
            Model::Ensemble(e) => e.predict(t),
            Model::Single(p) => p.predict_rul(t),
        }
    }
}

fn cmd_predict(a: &PredictArgs) -> anyhow::Result<()> {
    let model = Model::load(&a.bundle)?;
    let ds = match a.data_format {
        DataFormat::Cmapss => load_cmapss_series(&a.data)?,
        DataFormat::Csv => load_long_csv(&a.data, &read_schema(a.schema.as_deref())?)?,
    };
    let rows = as_test_instances(&ds, None)?;
    let out: Box<dyn std::io::Write> = match &a.out {
        Some(p) => Box::new(fs::File::create(p)?),
        None => Box::new(std::io::stdout()),
    };
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["instance_id", "predicted_rul"])?;
    for t in &rows {
        let p = model.predict(t).with_context(|| format!("predicting {}", t.id))?;
        w.write_record([t.id.clone(), p.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_synth(a: &SynthArgs) -> anyhow::Result<()> {
    fs::create_dir_all(&a.out)?;
    let ds = generate_synthetic(a.instances, a.dim, a.base_length, a.noise_sd, a.seed)?;
    let schema = write_long_csv(&ds, &a.out.join("data.csv"))?;
    write_json(&a.out.join("schema.json"), &schema)
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Fit(args) => cmd_fit(&RunConfig::from_args(args)?),
        Command::Predict(args) => cmd_predict(&args).map(|_| true),
        Command::Space { out } => {
            let manifest = serde_json::to_string_pretty(&define_space().manifest())? + "\n";
            match out {
                Some(p) => fs::write(p, manifest)?,
                None => print!("{manifest}"),
            }
            Ok(true)
        }
        Command::Synth(args) => cmd_synth(&args).map(|_| true),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
