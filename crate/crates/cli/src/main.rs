//! `abss`: score, rank and evaluate diffusion seeds from attention tensors.
//!
//! Exit codes: 0 success, 1 `validate` found problems, 2 usage or input
//! error, 3 internal invariant violation.

mod eval;
mod files;
mod nfe;
mod output;
mod rank;
mod score;
mod synth;
mod validate;

use std::path::PathBuf;
use std::process::ExitCode;

use abss_core::{Error, Result, ScoringConfig, TokenCategory};
use clap::{Args, Parser, Subcommand};

use output::Format;

#[derive(Debug, Parser)]
#[command(name = "abss", version, about = "Attention-based seed screening")]
struct Cli {
    /// Worker threads; overrides ABSS_THREADS (0 = one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Score every seed pool of a manifest.
    Score(score::ScoreArgs),
    /// Rank scored seeds and keep the top K.
    Rank(rank::RankArgs),
    /// Coarse NFE per reported image for ABSS or a baseline.
    Nfe(nfe::NfeArgs),
    /// Ranking agreement, statistics and experiment drivers.
    Eval(eval::EvalArgs),
    /// Generate synthetic pools and the fixture suite.
    Synth(synth::SynthArgs),
    /// Check every manifest record against its tensor.
    Validate(validate::ValidateArgs),
}

/// Scoring parameters shared by every command that scores.
#[derive(Debug, Clone, Args)]
pub struct ScoringArgs {
    /// Softmax temperature.
    #[arg(long, default_value_t = 100.0)]
    beta: f64,
    /// Gaussian kernel radius.
    #[arg(long = "k", default_value_t = 1)]
    kernel_radius: usize,
    /// Gaussian standard deviation.
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    /// Allow BOS/EOS indices in U-Net token sets.
    #[arg(long)]
    include_special: bool,
    /// Token set to score: core, adjectives, verbs or prepositions.
    #[arg(long, default_value = "core", value_parser = parse_category)]
    token_category: TokenCategory,
}

impl ScoringArgs {
    pub fn config(&self) -> ScoringConfig {
        ScoringConfig {
            beta: self.beta,
            kernel_radius: self.kernel_radius,
            sigma: self.sigma,
            include_special_tokens: self.include_special,
        }
    }
}

/// Output destination and format.
#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Output file (written atomically); stdout when omitted.
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

fn parse_category(s: &str) -> std::result::Result<TokenCategory, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn configure_threads(flag: Option<usize>) -> Result<()> {
    let threads = match flag {
        Some(n) => n,
        None => match std::env::var("ABSS_THREADS") {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| Error::Usage(format!("ABSS_THREADS must be a non-negative integer, got {v:?}")))?,
            Err(_) => 0,
        },
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::Internal(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> Result<ExitCode> {
    configure_threads(cli.threads)?;
    match cli.command {
        Command::Score(a) => score::run(a),
        Command::Rank(a) => rank::run(a),
        Command::Nfe(a) => nfe::run(a),
        Command::Eval(a) => eval::run(a),
        Command::Synth(a) => synth::run(a),
        Command::Validate(a) => validate::run(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 3 })
        }
    }
}
