//! `pcpo`: preference-pair curation pipeline.
//!
//! Subcommands: `select` (curate pairs from a response corpus),
//! `stats` (rank-distribution report over a pairs file), `loss-check`
//! (gradient and reduction-identity verification over a pairs file),
//! and `validate` (schema check of a corpus).
//!
//! Exit codes: 0 success, 2 schema error, 3 I/O error, 4 internal
//! error. Diagnostics go to stderr; data only to the output paths.

mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pcpo_core::pipeline::{LossCheckConfig, PipelineConfig};
use pcpo_core::Error;

const EXIT_SCHEMA: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_INTERNAL: u8 = 4;

#[derive(Parser)]
#[command(name = "pcpo", version, about = "Probability-consistent preference pair curation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct SelectArgs {
    /// Corpus file (line-delimited JSON prompt records)
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output pairs file (line-delimited JSON)
    #[arg(long)]
    output: Option<PathBuf>,
    /// Candidates kept per rejected response
    #[arg(long)]
    k: Option<usize>,
    /// Drop pairs scoring below this threshold
    #[arg(long = "min-s-w")]
    min_s_w: Option<f64>,
    /// Tie-break policy (rank-then-index)
    #[arg(long = "tie-break")]
    tie_break: Option<String>,
    /// Optional rank-distribution report path
    #[arg(long)]
    report: Option<PathBuf>,
    /// Worker threads
    #[arg(long)]
    jobs: Option<usize>,
    /// Config file with the same keys; flags override
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Curate preference pairs from a response corpus
    Select(SelectArgs),
    /// Rank-distribution report over a selected-pairs file
    Stats {
        /// Pairs file
        #[arg(long)]
        input: PathBuf,
        /// Report path; stdout when omitted
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Verify loss gradients and the DPO reduction over a pairs file
    LossCheck {
        /// Pairs file
        #[arg(long)]
        input: PathBuf,
        /// Toy-model init seed
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Validate a corpus file against the record schema
    Validate {
        /// Corpus file
        #[arg(long)]
        input: PathBuf,
    },
}

fn exit_for(err: &Error) -> u8 {
    if err.is_schema() {
        EXIT_SCHEMA
    } else if err.is_io() {
        EXIT_IO
    } else {
        EXIT_INTERNAL
    }
}

fn run_select(args: SelectArgs) -> Result<(), (u8, String)> {
    let cfg: PipelineConfig = config::resolve_select(args)
        .map_err(|msg| (EXIT_SCHEMA, msg))?;
    let summary =
        pcpo_core::run_select(&cfg).map_err(|e| (exit_for(&e), e.to_string()))?;
    eprintln!(
        "prompts: {} | all-correct skips: {} | all-wrong skips: {} | \
         below-threshold skips: {} | pairs emitted: {}",
        summary.prompts,
        summary.all_correct_skips,
        summary.all_wrong_skips,
        summary.below_threshold_skips,
        summary.pairs_emitted
    );
    Ok(())
}

fn run_stats(input: PathBuf, output: Option<PathBuf>) -> Result<(), (u8, String)> {
    let report = pcpo_core::run_stats(&input, output.as_deref())
        .map_err(|e| (exit_for(&e), e.to_string()))?;
    if output.is_none() {
        let json = serde_json::to_string_pretty(&report)
            .map_err(|e| (EXIT_INTERNAL, e.to_string()))?;
        println!("{json}");
    }
    eprintln!("total pairs: {}", report.total_pairs);
    Ok(())
}

fn run_loss_check(input: PathBuf, seed: u64) -> Result<(), (u8, String)> {
    let cfg = LossCheckConfig {
        seed,
        ..LossCheckConfig::default()
    };
    let report = pcpo_core::run_loss_check(&input, &cfg)
        .map_err(|e| (exit_for(&e), e.to_string()))?;
    let json =
        serde_json::to_string_pretty(&report).map_err(|e| (EXIT_INTERNAL, e.to_string()))?;
    println!("{json}");
    if report.pass() {
        eprintln!("loss check passed over {} pairs", report.pairs_checked);
        Ok(())
    } else {
        Err((
            EXIT_INTERNAL,
            format!(
                "loss check failed: {} gradient, {} reduction failures",
                report.gradient_failures, report.reduction_failures
            ),
        ))
    }
}

fn run_validate(input: PathBuf) -> Result<(), (u8, String)> {
    let file = std::fs::File::open(&input).map_err(|e| (EXIT_IO, e.to_string()))?;
    let records = pcpo_core::parse_corpus(std::io::BufReader::new(file))
        .map_err(|e| (exit_for(&e), e.to_string()))?;
    eprintln!("{} records valid", records.len());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Select(args) => run_select(args),
        Command::Stats { input, output } => run_stats(input, output),
        Command::LossCheck { input, seed } => run_loss_check(input, seed),
        Command::Validate { input } => run_validate(input),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, message)) => {
            eprintln!("error: {message}");
            ExitCode::from(code)
        }
    }
}
