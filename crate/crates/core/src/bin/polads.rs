//! Command-line entry point for the staged ad-classification pipeline.
//!
//! Each subcommand runs one stage against an output directory. Options
//! come from a JSON config file (`--config`), overridden by flags; the
//! output directory additionally honors the POLADS_OUT environment
//! variable (flag beats environment beats config).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use polads::corpus::Task;
use polads::error::Error;
use polads::pipeline::{self, RunConfig, StageSummary};

#[derive(Parser)]
#[command(
    name = "polads",
    version,
    about = "Corpus construction, classification, and lexical analysis for political ad images"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Read raw ads and sponsors, quarantining malformed records
    Ingest(StageArgs),
    /// Deduplicate, filter by language, and attach task labels
    Label(StageArgs),
    /// Assign chronological train/dev/test splits per task
    Split(StageArgs),
    /// Tokenize text views and normalize images
    Preprocess(StageArgs),
    /// Train the selected model per seed, then score the test split
    Train(StageArgs),
    /// Score the selected model (or the majority baseline) on the test split
    Evaluate(StageArgs),
    /// Correlate unigram frequencies with the task label
    Analyze(StageArgs),
    /// Render metrics and correlations as plain-text tables
    Report(StageArgs),
}

impl Command {
    fn args(&self) -> &StageArgs {
        match self {
            Command::Ingest(a)
            | Command::Label(a)
            | Command::Split(a)
            | Command::Preprocess(a)
            | Command::Train(a)
            | Command::Evaluate(a)
            | Command::Analyze(a)
            | Command::Report(a) => a,
        }
    }
}

#[derive(Args)]
struct StageArgs {
    /// JSON run configuration; flags below override its fields
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Raw ads file (JSON lines)
    #[arg(long, value_name = "PATH")]
    ads: Option<PathBuf>,
    /// Sponsor registry CSV
    #[arg(long, value_name = "PATH")]
    sponsors: Option<PathBuf>,
    /// Person-name gazetteer, one name per line
    #[arg(long, value_name = "PATH")]
    gazetteer: Option<PathBuf>,
    /// Output directory for all stage artifacts
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Prediction task: ideology or sponsor_type
    #[arg(long, value_parser = parse_task)]
    task: Option<Task>,
    /// Model selector, e.g. logreg_itd, fusion_itd, majority
    #[arg(long)]
    model: Option<String>,
    /// Training seeds, comma separated
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// L2 strength for the logistic-regression models
    #[arg(long)]
    l2: Option<f64>,
    /// Language code to keep, or "none" to disable the filter
    #[arg(long)]
    language: Option<String>,
    /// Significance threshold for correlation ranking
    #[arg(long)]
    alpha: Option<f64>,
    /// Rows per class in correlations.csv
    #[arg(long)]
    top: Option<usize>,
    /// Split the analyze stage reads: all, train, dev, or test
    #[arg(long, value_parser = parse_analysis_split)]
    analysis_split: Option<pipeline::AnalysisSplit>,
}

fn parse_task(s: &str) -> Result<Task, String> {
    Task::parse(s).ok_or_else(|| format!("unknown task `{s}`; valid: ideology, sponsor_type"))
}

fn parse_analysis_split(s: &str) -> Result<pipeline::AnalysisSplit, String> {
    match s {
        "all" => Ok(pipeline::AnalysisSplit::All),
        "train" => Ok(pipeline::AnalysisSplit::Train),
        "dev" => Ok(pipeline::AnalysisSplit::Dev),
        "test" => Ok(pipeline::AnalysisSplit::Test),
        _ => Err(format!("unknown split `{s}`; valid: all, train, dev, test")),
    }
}

impl StageArgs {
    fn to_config(&self) -> Result<RunConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(p) = &self.ads {
            cfg.ads = p.clone();
        }
        if let Some(p) = &self.sponsors {
            cfg.sponsors = p.clone();
        }
        if let Some(p) = &self.gazetteer {
            cfg.gazetteer = Some(p.clone());
        }
        match (&self.out, std::env::var_os("POLADS_OUT")) {
            (Some(p), _) => cfg.out_dir = p.clone(),
            (None, Some(env)) => cfg.out_dir = PathBuf::from(env),
            (None, None) => {}
        }
        if let Some(t) = self.task {
            cfg.task = t;
        }
        if let Some(m) = &self.model {
            cfg.model = m.clone();
        }
        if let Some(seeds) = &self.seeds {
            cfg.schedule.seeds = seeds.clone();
        }
        if let Some(l2) = self.l2 {
            cfg.l2 = l2;
        }
        if let Some(lang) = &self.language {
            cfg.language = (lang != "none").then(|| lang.clone());
        }
        if let Some(a) = self.alpha {
            cfg.alpha = a;
        }
        if let Some(k) = self.top {
            cfg.top_k = k;
        }
        if let Some(s) = self.analysis_split {
            cfg.analysis_split = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn print_summary(summary: &StageSummary) {
    let counts: Vec<String> = summary
        .rows
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect();
    println!("{}: {}", summary.stage, counts.join("  "));
}

fn run(cli: Cli) -> Result<(), Error> {
    let cfg = cli.command.args().to_config()?;
    match &cli.command {
        Command::Ingest(_) => print_summary(&pipeline::cmd_ingest(&cfg)?),
        Command::Label(_) => print_summary(&pipeline::cmd_label(&cfg)?),
        Command::Split(_) => print_summary(&pipeline::cmd_split(&cfg)?),
        Command::Preprocess(_) => print_summary(&pipeline::cmd_preprocess(&cfg)?),
        Command::Train(_) => {
            print_summary(&pipeline::cmd_train(&cfg)?);
            print_summary(&pipeline::cmd_evaluate(&cfg)?);
        }
        Command::Evaluate(_) => print_summary(&pipeline::cmd_evaluate(&cfg)?),
        Command::Analyze(_) => print_summary(&pipeline::cmd_analyze(&cfg)?),
        Command::Report(_) => print!("{}", pipeline::cmd_report(&cfg)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::UnknownModel { .. }) => {
            eprintln!("error: {e}");
            // clap's conventional exit code for usage errors
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
