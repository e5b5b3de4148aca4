use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use diffaudit::classify::VoteMode;
use diffaudit::config::RunConfig;
use diffaudit::pipeline;

#[derive(Parser)]
#[command(
    name = "diffaudit",
    version,
    about = "Differential privacy-practice auditing over captured network trace corpora"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse traces, mine raw keys, and write the dataset summary.
    Ingest(StageArgs),
    /// Classify distinct raw keys into ontology categories.
    Classify(StageArgs),
    /// Categorize destinations, build flows, and run the differential audit.
    ///
    /// Exits 0 when the audit is clean, 2 when findings exist, 1 on error.
    Audit(StageArgs),
    /// Linkability counts, largest/most-common sets, and ATS rankings.
    Linkability(StageArgs),
    /// Score the configured classifier against a hand-labeled sample.
    ValidateClassifier {
        #[command(flatten)]
        stage: StageArgs,
        /// Labeled sample file: JSON array of {"key", "label"} objects.
        #[arg(long)]
        sample: PathBuf,
    },
    /// Run ingest, classify, audit, and linkability in sequence.
    RunAll(StageArgs),
}

#[derive(Args)]
struct StageArgs {
    /// Run configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Override the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replay recorded classifier fixtures from this directory (offline).
    #[arg(long)]
    replay: Option<PathBuf>,
    /// Override the confidence threshold.
    #[arg(long)]
    threshold: Option<f64>,
    /// Override the vote mode.
    #[arg(long, value_parser = parse_vote)]
    vote: Option<VoteMode>,
}

fn parse_vote(s: &str) -> Result<VoteMode, String> {
    match s {
        "max" => Ok(VoteMode::MajorityMax),
        "avg" => Ok(VoteMode::MajorityAvg),
        other => Err(format!("expected \"max\" or \"avg\", got {other:?}")),
    }
}

impl StageArgs {
    fn load_config(&self) -> anyhow::Result<RunConfig> {
        let mut config = RunConfig::load(&self.config)
            .with_context(|| format!("loading config {}", self.config.display()))?;
        if let Some(out) = &self.out {
            config.out_dir = out.clone();
        }
        if let Some(replay) = &self.replay {
            config.classifier.replay_dir = Some(replay.clone());
        }
        if let Some(threshold) = self.threshold {
            anyhow::ensure!(
                (0.0..=1.0).contains(&threshold),
                "--threshold must be within [0, 1]"
            );
            config.classifier.threshold = threshold;
        }
        if let Some(vote) = self.vote {
            config.classifier.vote_mode = vote;
        }
        config.validate()?;
        Ok(config)
    }
}

fn run() -> anyhow::Result<u8> {
    let cli = Cli::parse();
    match cli.command {
        Command::Ingest(stage) => {
            let config = stage.load_config()?;
            let summary = pipeline::cmd_ingest(&config)?;
            println!(
                "ingested {} requests, {} raw keys across {} services -> {}",
                summary.requests,
                summary.raw_keys,
                summary.services.len(),
                config.out_dir.display()
            );
            Ok(0)
        }
        Command::Classify(stage) => {
            let config = stage.load_config()?;
            let summary = pipeline::cmd_classify(&config)?;
            println!(
                "classified {} distinct keys: {} labeled, {} residual (cache hits {}, remote calls {})",
                summary.distinct_keys,
                summary.labeled,
                summary.unlabeled,
                summary.cache_hits,
                summary.remote_calls
            );
            Ok(0)
        }
        Command::Audit(stage) => {
            let config = stage.load_config()?;
            let summary = pipeline::cmd_audit(&config)?;
            println!("{} flows, {} findings", summary.flows, summary.findings);
            Ok(if summary.findings > 0 { 2 } else { 0 })
        }
        Command::Linkability(stage) => {
            let config = stage.load_config()?;
            pipeline::cmd_linkability(&config)?;
            println!(
                "linkability reports written to {}",
                pipeline::reports_dir(&config).display()
            );
            Ok(0)
        }
        Command::ValidateClassifier { stage, sample } => {
            let config = stage.load_config()?;
            let report = pipeline::cmd_validate_classifier(&config, &sample)?;
            print!("{}", report.render_text());
            Ok(0)
        }
        Command::RunAll(stage) => {
            let config = stage.load_config()?;
            let summary = pipeline::run_all(&config)?;
            println!("{} flows, {} findings", summary.flows, summary.findings);
            Ok(if summary.findings > 0 { 2 } else { 0 })
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
