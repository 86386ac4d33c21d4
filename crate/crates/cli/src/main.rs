//! `lanepred`: command-line front end of the lateral motion prediction
//! pipeline.

mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lanepred::artifact::{self, Artifact};
use lanepred::data_model::validate;
use lanepred::ingest::{
    discover_recordings, load_directory, normalize_direction, parse_recording, RecordingFiles,
};
use lanepred::labeling::BalancedSet;
use lanepred::pipeline::{
    balanced_training_set, context_report, evaluate, predict, prepare, train_models, Dataset,
    PredictionTable, TrainedModels,
};
use lanepred::report::{table_checksum, write_context, write_evaluation};
use lanepred::synth::generate_corpus;
use serde::{Deserialize, Serialize};

use config::{Config, Overrides};

const DATASET: &str = "dataset.json";
const MODELS: &str = "models.json";
const PREDICTIONS: &str = "predictions.json";
const INGEST_REPORT: &str = "ingest_report.tsv";

/// Lateral motion prediction for highway traffic.
///
/// Stages communicate through artifacts in the output directory:
/// `prepare` writes dataset.json, `train` models.json, `predict`
/// predictions.json; `evaluate` and `context-report` read the predictions,
/// or compute them from dataset and models when absent.
///
/// The config file is TOML with the sections [corpus], [synth], [prepare],
/// [train] and [evaluation]; `lanepred defaults` prints every key with its
/// default value. Unknown keys are rejected.
#[derive(Debug, Parser)]
#[command(name = "lanepred", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML config file; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed [config default: 0].
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for artifacts, reports and run manifests.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Evaluation fold, 1-based [config default: 6].
    #[arg(long, global = true)]
    fold: Option<u8>,
    /// Prediction and labeling horizon in seconds [config default: 5.0].
    #[arg(long, global = true)]
    horizon: Option<f64>,
    /// Density bin width in veh/(km lane) [config default: 1.0].
    #[arg(long, global = true)]
    density_bin_width: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic highD-format corpus with its ground-truth manifest.
    Synth,
    /// Parse, normalize and validate a highD-format directory.
    Ingest {
        #[arg(long)]
        data: PathBuf,
    },
    /// Features, labels, folds and the balanced training set.
    Prepare {
        #[arg(long)]
        data: PathBuf,
    },
    /// Train the gate and the three experts.
    Train,
    /// Batch prediction over the evaluation fold.
    Predict,
    /// ROC/AUC, balanced accuracy, time gain and lateral errors.
    Evaluate,
    /// Errors and lane-change statistics against traffic density.
    ContextReport,
    /// Print the default config.
    Defaults,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Ingest { .. } => "ingest",
            Command::Prepare { .. } => "prepare",
            Command::Train => "train",
            Command::Predict => "predict",
            Command::Evaluate => "evaluate",
            Command::ContextReport => "context-report",
            Command::Defaults => "defaults",
        }
    }
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Core(lanepred::Error),
}

impl From<lanepred::Error> for CliError {
    fn from(e: lanepred::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn kind(&self) -> &'static str {
        use lanepred::Error as E;
        match self {
            CliError::Config(_) => "config",
            CliError::Core(e) => match e {
                E::Io { .. } => "io",
                E::MissingColumn { .. } | E::Parse { .. } | E::Csv { .. } => "format",
                E::InvalidInput(_) | E::DimensionMismatch { .. } => "invalid_input",
                E::SchemaMismatch(_) => "schema_mismatch",
                E::NonFiniteLoss { .. } | E::SingularCovariance { .. } | E::Numerical(_) => {
                    "numerical"
                }
                E::MissingArtifact(_) => "missing_artifact",
                E::Artifact(_) => "artifact",
            },
        }
    }

    fn message(&self) -> String {
        let m = match self {
            CliError::Config(m) => m.clone(),
            CliError::Core(e) => e.to_string(),
        };
        m.split_whitespace().collect::<Vec<_>>().join(" ")
    }
}

type CliResult<T> = Result<T, CliError>;

/// Written next to the artifacts by every run.
#[derive(Debug, Serialize, Deserialize)]
struct RunManifest {
    subcommand: String,
    version: String,
    config_hash: String,
    seed: u64,
    synth_seed: u64,
    config: String,
    artifacts: Vec<String>,
}

/// Dataset plus the balanced training set of its evaluation fold.
#[derive(Debug, Serialize, Deserialize)]
struct Prepared {
    eval_fold: u8,
    bin_width: f64,
    dataset: Dataset,
    balanced: BalancedSet,
}

struct Run {
    config: Config,
    hash: String,
    out: PathBuf,
}

impl Run {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn save<T: Serialize>(&self, name: &str, kind: &str, payload: &T) -> CliResult<PathBuf> {
        let p = self.path(name);
        artifact::save(&p, kind, &self.hash, self.config.seed, payload)?;
        Ok(p)
    }

    fn load<T: serde::de::DeserializeOwned>(
        &self,
        name: &str,
        kind: &str,
    ) -> CliResult<Artifact<T>> {
        let a: Artifact<T> = artifact::load(&self.path(name), kind)?;
        if a.config_hash != self.hash {
            log::warn!(
                "{name} was produced under config {}, current is {}",
                a.config_hash,
                self.hash
            );
        }
        Ok(a)
    }

    fn prepared(&self) -> CliResult<Prepared> {
        let p = self.load::<Prepared>(DATASET, "dataset")?.payload;
        if p.eval_fold != self.config.evaluation.fold {
            return Err(CliError::Config(format!(
                "dataset was balanced for fold {}, not {}; re-run prepare",
                p.eval_fold, self.config.evaluation.fold
            )));
        }
        Ok(p)
    }

    fn predictions(&self) -> CliResult<PredictionTable> {
        if self.path(PREDICTIONS).exists() {
            return Ok(self
                .load::<PredictionTable>(PREDICTIONS, "predictions")?
                .payload);
        }
        let models = self.load::<TrainedModels>(MODELS, "models")?.payload;
        let prepared = self.prepared()?;
        Ok(predict(
            &prepared.dataset,
            &models,
            self.config.evaluation.fold,
        )?)
    }
}

fn run(cli: Cli) -> CliResult<Vec<PathBuf>> {
    if let Command::Defaults = cli.command {
        print!("{}", Config::default().to_toml());
        return Ok(Vec::new());
    }
    let c = &cli.common;
    let base = match &c.config {
        Some(p) => Config::load(p).map_err(CliError::Config)?,
        None => Config::default(),
    };
    let config = base.apply(Overrides {
        seed: c.seed,
        fold: c.fold,
        horizon: c.horizon,
        density_bin_width: c.density_bin_width,
    });
    config.validate().map_err(CliError::Config)?;
    let run = Run {
        hash: config.hash(),
        config,
        out: c.out.clone(),
    };
    std::fs::create_dir_all(&run.out)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", run.out.display())))?;
    let cfg = &run.config;
    let seed = cfg.seed;
    let artifacts = match &cli.command {
        Command::Defaults => unreachable!(),
        Command::Synth => {
            let summary = generate_corpus(&cfg.synth, cfg.corpus.recordings, &run.out)?;
            println!(
                "synth: {} recordings, {} tracks, {} lane changes",
                summary.recordings.len(),
                summary.tracks,
                summary.events
            );
            vec![run.out.clone()]
        }
        Command::Ingest { data } => vec![ingest(&run, data)?],
        Command::Prepare { data } => {
            let recordings = load_directory(data)?;
            let dataset = prepare(&recordings, &cfg.prepare, seed)?;
            let fold = cfg.evaluation.fold;
            let (_, balanced) = balanced_training_set(&dataset, fold, cfg.prepare.bin_width, seed)?;
            println!(
                "prepare: {} samples, {} lane changes, {} balanced training samples",
                dataset.samples.len(),
                dataset.events.len(),
                balanced.indices.len()
            );
            let prepared = Prepared {
                eval_fold: fold,
                bin_width: cfg.prepare.bin_width,
                dataset,
                balanced,
            };
            vec![run.save(DATASET, "dataset", &prepared)?]
        }
        Command::Train => {
            let p = run.prepared()?;
            let pool = p.dataset.training_samples(p.eval_fold);
            let models = train_models(
                &pool,
                &p.balanced,
                &p.dataset.schema,
                &p.dataset.grid,
                &cfg.train,
                seed,
            )?;
            let k: Vec<usize> = models.experts.iter().map(|e| e.mixture.len()).collect();
            println!(
                "train: gate on {} samples, expert components {k:?}",
                p.balanced.indices.len()
            );
            vec![run.save(MODELS, "models", &models)?]
        }
        Command::Predict => {
            let models = run.load::<TrainedModels>(MODELS, "models")?.payload;
            let p = run.prepared()?;
            let table = predict(&p.dataset, &models, p.eval_fold)?;
            println!("predict: {} rows", table.rows.len());
            vec![run.save(PREDICTIONS, "predictions", &table)?]
        }
        Command::Evaluate => {
            let table = run.predictions()?;
            let report = evaluate(&table, cfg.evaluation.rule())?;
            for c in &report.classes {
                println!("evaluate: {} AUC {:.4}", c.maneuver, c.roc.auc);
            }
            println!("evaluate: BACC {:.4}", report.bacc.value);
            write_evaluation(&run.out, &report, &run.hash, &table_checksum(&table)?)?
        }
        Command::ContextReport => {
            let table = run.predictions()?;
            let ctx = context_report(&table, cfg.evaluation.density_bin_width)?;
            println!(
                "context-report: {} density cells, {} lane-change bins",
                ctx.density_errors.len(),
                ctx.lane_changes.len()
            );
            write_context(&run.out, &ctx, &run.hash, &table_checksum(&table)?)?
        }
    };
    let manifest = RunManifest {
        subcommand: cli.command.name().to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: run.hash.clone(),
        seed,
        synth_seed: cfg.synth.seed,
        config: cfg.to_toml(),
        artifacts: artifacts.iter().map(|p| p.display().to_string()).collect(),
    };
    run.save(
        &format!("run_{}.json", cli.command.name()),
        "run",
        &manifest,
    )?;
    Ok(artifacts)
}

/// Validates raw and direction-normalized recordings; writes one line per
/// violation.
fn ingest(run: &Run, data: &Path) -> CliResult<PathBuf> {
    let mut report = format!("# config_hash={}\nrecording\tstage\tviolation\n", run.hash);
    let (mut tracks, mut violations) = (0, 0);
    let ids = discover_recordings(data)?;
    for &id in &ids {
        let raw = parse_recording(&RecordingFiles::in_dir(data, id))?;
        let normalized = normalize_direction(&raw)?;
        tracks += raw.tracks.len();
        for (stage, rec) in [("raw", &raw), ("normalized", &normalized)] {
            for v in validate(rec) {
                violations += 1;
                let _ = writeln!(report, "{id}\t{stage}\t{v}");
            }
        }
    }
    println!(
        "ingest: {} recordings, {tracks} tracks, {violations} violations",
        ids.len()
    );
    let path = run.path(INGEST_REPORT);
    std::fs::write(&path, report)
        .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.kind(), e.message());
            ExitCode::FAILURE
        }
    }
}
