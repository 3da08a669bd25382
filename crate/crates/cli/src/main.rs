mod commands;
mod overrides;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use splatpose::ErrorKind;

/// Pose and joint-angle recovery for an articulated instrument by
/// differentiable Gaussian splatting.
///
/// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
/// Log verbosity is read from SPLATPOSE_LOG (e.g. `info`, `debug`).
#[derive(Parser)]
#[command(name = "splatpose", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic data with exact ground truth.
    #[command(subcommand)]
    Synth(Synth),
    /// Estimate a trajectory from an image sequence.
    Track(TrackArgs),
    /// Score trajectories against ground truth.
    Eval(EvalArgs),
    /// Fit Gaussian appearance to canonical-configuration views.
    Fit(FitArgs),
    /// Compare analytic gradients against central differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Subcommand)]
enum Synth {
    /// Still views over sampled joint configurations and cameras.
    Dataset(SynthArgs),
    /// A smooth random motion in front of a fixed camera.
    Sequence(SynthArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// TOML spec; omitted keys take their defaults.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Tool model TOML; the built-in model when omitted.
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Args)]
struct TrackArgs {
    /// Dataset directory or its manifest.jsonl.
    #[arg(long)]
    frames: PathBuf,
    #[arg(long)]
    model: Option<PathBuf>,
    /// TOML config; flags below override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output trajectory CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, required_unless_present = "batch", requires = "gt")]
    est: Option<PathBuf>,
    #[arg(long, requires = "est")]
    gt: Option<PathBuf>,
    /// JSONL of {"est": path, "gt": path}, relative to the manifest.
    #[arg(long, conflicts_with_all = ["est", "gt", "curves"])]
    batch: Option<PathBuf>,
    /// Also write the report here.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Per-frame signed error curves as CSV.
    #[arg(long)]
    curves: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    init: Option<PathBuf>,
    /// Dataset directory or manifest; canonical records are used.
    #[arg(long)]
    views: PathBuf,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 64)]
    size: usize,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Lib(splatpose::Error),
    GradientMismatch(usize),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Lib(e) => write!(f, "{e}"),
            CliError::GradientMismatch(n) => write!(f, "{n} gradient blocks disagree with finite differences"),
        }
    }
}

impl From<splatpose::Error> for CliError {
    fn from(e: splatpose::Error) -> Self {
        CliError::Lib(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Lib(e) => match e.kind() {
                ErrorKind::Usage => 1,
                ErrorKind::Data => 2,
                ErrorKind::Numerical => 3,
            },
            CliError::GradientMismatch(_) => 3,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SPLATPOSE_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cmd = Cli::command().mut_subcommand("track", overrides::add_args);
    let matches = match cmd.try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let cli = Cli::from_arg_matches(&matches).expect("matches come from the same command");
    let result = match cli.command {
        Command::Synth(Synth::Dataset(a)) => commands::synth_dataset(&a),
        Command::Synth(Synth::Sequence(a)) => commands::synth_sequence(&a),
        Command::Track(a) => {
            let sub = matches.subcommand_matches("track").expect("track was parsed");
            commands::track(&a, sub)
        }
        Command::Eval(a) => commands::eval(&a),
        Command::Fit(a) => commands::fit(&a),
        Command::Gradcheck(a) => commands::gradcheck(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
