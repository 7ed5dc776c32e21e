use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use designgap::cli;

#[derive(Parser)]
#[command(
    name = "designgap",
    about = "Spectral gaps, design-formation depth bounds, and verification \
             suites for random quantum circuits",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Spectral gap of the configured architecture's repeating unit.
    Gap(CommonArgs),
    /// Closed-form depth bounds plus the empirical formation depth.
    Depth(CommonArgs),
    /// Inequality verification suite; nonzero exit on any failure.
    Verify(CommonArgs),
    /// Gate-set gap and radius sweep over moment orders.
    Sweep(CommonArgs),
    /// Monte Carlo frame potential against the exact reference.
    Frame(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Overrides the config's base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Exit cleanly even when a budget truncation occurred.
    #[arg(long)]
    allow_truncation: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

fn run(name: &str, args: &CommonArgs) -> Result<bool, String> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| format!("cannot read config {}: {e}", args.config.display()))?;
    let outcome = cli::execute(name, &text, args.seed).map_err(|e| e.to_string())?;
    let body = match args.format {
        Format::Csv => outcome.report.to_csv(),
        Format::Json => outcome.report.to_json(),
    };
    match &args.out {
        Some(path) => {
            std::fs::write(path, body.as_bytes())
                .map_err(|e| format!("cannot write {}: {e}", path.display()))?;
        }
        None => {
            std::io::stdout()
                .write_all(body.as_bytes())
                .map_err(|e| format!("cannot write stdout: {e}"))?;
        }
    }
    Ok(outcome.exit_ok(args.allow_truncation))
}

fn main() -> ExitCode {
    let parsed = Cli::parse();
    let (name, args) = match &parsed.command {
        Command::Gap(a) => ("gap", a),
        Command::Depth(a) => ("depth", a),
        Command::Verify(a) => ("verify", a),
        Command::Sweep(a) => ("sweep", a),
        Command::Frame(a) => ("frame", a),
    };
    match run(name, args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(msg) => {
            eprintln!("designgap: {msg}");
            ExitCode::from(2)
        }
    }
}
