use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vfboost::crypto::HeMode;
use vfboost::experiment::{self, ExperimentConfig, Overrides, UnlearnKind};
use vfboost::metrics::ForgetfulnessReport;
use vfboost::unlearning::UnlearnRequest;
use vfboost::{Epsilon, Error};

#[derive(Parser)]
#[command(name = "vfboost", version, about = "Vertical federated boosting with unlearning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write per-party shard files and a manifest.
    Partition(Common),
    /// Train the original model.
    Train(Common),
    /// Unlearn from the trained model.
    Unlearn {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "instances")]
        kind: UnlearnKind,
        /// JSON request file instead of the configured fractions.
        #[arg(long)]
        request: Option<PathBuf>,
    },
    /// Train the reference model on the post-deletion data.
    Retrain {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "instances")]
        kind: UnlearnKind,
        #[arg(long)]
        request: Option<PathBuf>,
    },
    /// Test accuracy of a saved model (the original by default).
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Forgetfulness report for saved original, unlearned and retrained models.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "instances")]
        kind: UnlearnKind,
    },
    /// Train, unlearn, retrain and compare in one go.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Only this kind; both when absent.
        #[arg(long)]
        kind: Option<UnlearnKind>,
    },
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long, short)]
    config: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    he_mode: Option<HeMode>,
    #[arg(long)]
    he_bits: Option<usize>,
    /// `0.05`, `rel:0.05` or `abs:0.1`.
    #[arg(long)]
    epsilon: Option<Epsilon>,
    #[arg(long)]
    neighborhood_width: Option<usize>,
    #[arg(long)]
    trees: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    bucket_size: Option<usize>,
    #[arg(long)]
    extra_rounds: Option<usize>,
    #[arg(long)]
    no_bucket_tree: bool,
    #[arg(long)]
    no_robust_features: bool,
    #[arg(long)]
    no_neighborhood: bool,
    /// Record protocol transcripts while training.
    #[arg(long)]
    transcript: bool,
}

impl Common {
    fn load(&self) -> vfboost::Result<ExperimentConfig> {
        let mut config = ExperimentConfig::load(&self.config)?;
        config.apply(&Overrides {
            seed: self.seed,
            he_mode: self.he_mode,
            he_bits: self.he_bits,
            epsilon: self.epsilon,
            neighborhood_width: self.neighborhood_width,
            trees: self.trees,
            depth: self.depth,
            bucket_size: self.bucket_size,
            extra_rounds: self.extra_rounds,
            no_bucket_tree: self.no_bucket_tree,
            no_robust_features: self.no_robust_features,
            no_neighborhood: self.no_neighborhood,
            transcript: self.transcript,
            output: self.output.clone(),
        });
        config.validate()?;
        Ok(config)
    }
}

fn read_request(path: &Option<PathBuf>) -> vfboost::Result<Option<UnlearnRequest>> {
    path.as_ref()
        .map(|p| {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            UnlearnRequest::from_json(&text)
        })
        .transpose()
}

fn json<T: serde::Serialize>(v: &T) -> vfboost::Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn run(cli: Cli) -> vfboost::Result<()> {
    match cli.command {
        Command::Partition(c) => json(&experiment::cmd_partition(&c.load()?)?),
        Command::Train(c) => json(&experiment::cmd_train(&c.load()?)?),
        Command::Unlearn { common, kind, request } => {
            let run = experiment::cmd_unlearn(&common.load()?, kind, read_request(&request)?)?;
            eprintln!("{} nodes changed", run.nodes_changed);
            json(&run)
        }
        Command::Retrain { common, kind, request } => {
            json(&experiment::cmd_retrain(&common.load()?, kind, read_request(&request)?)?)
        }
        Command::Evaluate { common, model } => {
            let config = common.load()?;
            let dir = model.unwrap_or_else(|| config.original_dir());
            println!("{:.6}", experiment::cmd_evaluate(&config, &dir)?);
            Ok(())
        }
        Command::Compare { common, kind } => {
            let report = experiment::cmd_compare(&common.load()?, kind)?;
            println!("{}\n{report}", ForgetfulnessReport::header());
            Ok(())
        }
        Command::Bench { common, kind } => {
            let kinds = kind.map_or(UnlearnKind::ALL.to_vec(), |k| vec![k]);
            let rows = experiment::cmd_bench(&common.load()?, &kinds)?;
            println!("{}", ForgetfulnessReport::header());
            for r in rows {
                println!("{r}");
            }
            Ok(())
        }
    }
}

/// Exit status per failure class.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidParameter { .. } | Error::InvalidFraction(_) | Error::KeyTooSmall(_) => 2,
        Error::Io { .. } | Error::Csv(_) | Error::Json(_) | Error::Malformed { .. } => 3,
        Error::DuplicateId(_)
        | Error::MissingColumn(_)
        | Error::UnassignedColumn(_)
        | Error::EmptyParty(_)
        | Error::InvalidPartition(_)
        | Error::EmptyIntersection
        | Error::DegenerateDataset(_)
        | Error::UnsupportedLabel(_)
        | Error::EmptyInput(_) => 4,
        Error::UnknownRecord(_) | Error::UnknownFeature(_) | Error::AllFeaturesDeleted | Error::FeatureSetMismatch => 5,
        _ => 1,
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let class = match exit_code(&e) {
                2 => "config",
                3 => "io",
                4 => "data",
                5 => "request",
                _ => "internal",
            };
            eprintln!("error[{class}]: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
