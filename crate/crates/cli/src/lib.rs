//! Command-line driver: one subcommand per pipeline stage plus `all`.

pub mod config;
pub mod plots;
pub mod stages;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use steward_core::cohort::Polarity;
use steward_core::embed::RemoteConfig;
use steward_core::pipeline::Representation;
use steward_core::{Error, Result};

use config::RunConfig;
use stages::{Runner, Stage};

#[derive(Debug, Parser)]
#[command(
    name = "steward",
    version,
    about = "Antibiotic susceptibility prediction from ED tables"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Write a synthetic cohort to the input directory.
    Synth,
    /// Load tables, build labels, apply inclusion criteria and split.
    Ingest,
    /// Render labelled visits as pseudo-notes.
    Serialize,
    /// Build the feature matrix for the chosen representation.
    Embed,
    /// Fit one boosted-tree model per antibiotic.
    Train,
    /// Score the test partition with bootstrap intervals.
    Evaluate,
    /// Cluster note embeddings and write the similarity matrix.
    Cluster,
    /// Combine evaluations into tables and ROC/PR plots.
    Report,
    /// Run every stage in order.
    All,
}

/// Flags override the config file.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "DIR")]
    pub workdir: Option<PathBuf>,
    /// Raw table directory (default: <workdir>/data).
    #[arg(long, global = true, value_name = "DIR")]
    pub input: Option<PathBuf>,
    /// tabular, bow, word2vec or remote:<model_id>.
    #[arg(long, global = true, value_parser = parse_representation)]
    pub representation: Option<Representation>,
    /// Seed for every stochastic stage.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub patients: Option<usize>,
    #[arg(long, global = true)]
    pub test_fraction: Option<f64>,
    #[arg(long, global = true, value_parser = parse_polarity)]
    pub polarity: Option<Polarity>,
    #[arg(long, global = true)]
    pub token_budget: Option<usize>,
    #[arg(long, global = true)]
    pub trees: Option<usize>,
    #[arg(long, global = true)]
    pub learning_rate: Option<f64>,
    /// Bootstrap resamples.
    #[arg(long, global = true)]
    pub n_boot: Option<usize>,
    /// Base URL of the embedding service for remote representations.
    #[arg(long, global = true, value_name = "URL")]
    pub endpoint: Option<String>,
    /// Only warnings and errors on stderr.
    #[arg(long, short, global = true)]
    pub quiet: bool,
}

fn parse_representation(s: &str) -> std::result::Result<Representation, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_polarity(s: &str) -> std::result::Result<Polarity, String> {
    match s {
        "susceptible" => Ok(Polarity::Susceptible),
        "resistant" => Ok(Polarity::Resistant),
        _ => Err(format!("expected susceptible or resistant, got {s:?}")),
    }
}

impl Overrides {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = &self.workdir {
            c.workdir = v.clone();
        }
        if let Some(v) = &self.input {
            c.input = Some(v.clone());
        }
        if let Some(v) = &self.representation {
            c.representation = v.clone();
        }
        if let Some(v) = self.seed {
            c.set_seed(v);
        }
        if let Some(v) = self.patients {
            c.synth.patients = v;
        }
        if let Some(v) = self.test_fraction {
            c.cohort.test_fraction = v;
        }
        if let Some(v) = self.polarity {
            c.cohort.polarity = v;
        }
        if let Some(v) = self.token_budget {
            c.features.token_budget = v;
        }
        if let Some(v) = self.trees {
            c.train.num_trees = v;
        }
        if let Some(v) = self.learning_rate {
            c.train.learning_rate = v;
        }
        if let Some(v) = self.n_boot {
            c.eval.n_resamples = v;
        }
        if let Some(v) = &self.endpoint {
            let mut remote = c.features.remote.clone().unwrap_or_default();
            remote.endpoint = v.clone();
            c.features.remote = Some(remote);
        } else if matches!(c.representation, Representation::Remote(_))
            && c.features.remote.is_none()
        {
            c.features.remote = Some(RemoteConfig::default());
        }
        Ok(c)
    }
}

fn stages_for(command: Command, runner: &Runner) -> Vec<Stage> {
    match command {
        Command::Synth => vec![Stage::Synth],
        Command::Ingest => vec![Stage::Ingest],
        Command::Serialize => vec![Stage::Serialize],
        Command::Embed => vec![Stage::Embed],
        Command::Train => vec![Stage::Train],
        Command::Evaluate => vec![Stage::Evaluate],
        Command::Cluster => vec![Stage::Cluster],
        Command::Report => vec![Stage::Report],
        Command::All => runner.all_stages(),
    }
}

fn set_threads() -> Result<()> {
    let Ok(v) = std::env::var("STEWARD_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|n| *n > 0).ok_or_else(|| {
        Error::Config(format!(
            "STEWARD_THREADS must be a positive integer, got {v:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Single-line JSON error record, always the last line on stderr.
pub fn error_tail(stage: Option<Stage>, err: &Error) -> String {
    serde_json::json!({
        "status": "error",
        "stage": stage.map(|s| s.name()),
        "kind": err.kind(),
        "message": err.to_string().replace('\n', " "),
    })
    .to_string()
}

pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = if cli.overrides.quiet {
        tracing::Level::WARN
    } else {
        tracing::Level::INFO
    };
    let _ = tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_max_level(level)
        .with_ansi(std::io::IsTerminal::is_terminal(&std::io::stderr()))
        .with_target(false)
        .without_time()
        .try_init();

    let mut current = None;
    let result = (|| -> Result<()> {
        set_threads()?;
        let runner = Runner::new(cli.overrides.resolve()?)?;
        for stage in stages_for(cli.command, &runner) {
            current = Some(stage);
            runner.run(stage)?;
        }
        Ok(())
    })();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_tail(current, &e));
            ExitCode::from(1)
        }
    }
}
