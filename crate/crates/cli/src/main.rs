//! `rbench`: list tasks, run and evaluate policies, train the CEM baseline,
//! and build reports from episode logs.
//!
//! Exit codes: 0 ok, 1 other failure, 2 usage or configuration error,
//! 3 robot/transport error, 4 policy error.

mod commands;
mod setup;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rbench_core::config::BackendKind;
use rbench_core::TaskVariant;

#[derive(Parser)]
#[command(name = "rbench", version, about = "Robot-learning benchmark runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the task catalog.
    List {
        #[arg(long)]
        json: bool,
    },
    /// Run episodes and write one JSON Lines log per episode.
    Run(RunArgs),
    /// Run episodes and summarize success and safety.
    Eval(RunArgs),
    /// Train a linear policy with the cross-entropy method.
    Train(TrainArgs),
    /// Rebuild success and safety tables from episode logs alone.
    Report(ReportArgs),
}

/// Flags mirror the run-file fields and override them.
#[derive(Args, Debug, Clone, Default)]
pub struct RunFlags {
    /// TOML run file; flags given on the command line win.
    #[arg(long)]
    pub config: Option<std::path::PathBuf>,
    #[arg(long)]
    pub task: Option<TaskVariant>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub episodes: Option<usize>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long, value_enum)]
    pub backend: Option<BackendArg>,
    /// Serial device for the hardware backend.
    #[arg(long)]
    pub device: Option<String>,
    #[arg(long)]
    pub baud: Option<u32>,
    /// Actuator profile (control table and safety limits), TOML.
    #[arg(long)]
    pub profile: Option<String>,
    /// Joint-limit margin for position violations, degrees.
    #[arg(long)]
    pub epsilon_deg: Option<f64>,
    /// Output directory.
    #[arg(long, short)]
    pub output: Option<std::path::PathBuf>,
}

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
pub enum BackendArg {
    Sim,
    Hardware,
}

impl From<BackendArg> for BackendKind {
    fn from(b: BackendArg) -> Self {
        match b {
            BackendArg::Sim => BackendKind::Sim,
            BackendArg::Hardware => BackendKind::Hardware,
        }
    }
}

#[derive(Args, Debug)]
pub struct RunArgs {
    #[command(flatten)]
    pub flags: RunFlags,
    /// zero, hold, goal, or the path of a policy file.
    #[arg(long)]
    pub policy: Option<String>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub flags: RunFlags,
    #[arg(long)]
    pub population: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub elite_fraction: Option<f64>,
    #[arg(long)]
    pub init_std: Option<f64>,
    #[arg(long)]
    pub episodes_per_candidate: Option<usize>,
    /// Stop once a 10-episode evaluation after an iteration reaches this success fraction.
    #[arg(long)]
    pub target_success: Option<f64>,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Log files, or directories searched for `*.jsonl`.
    pub paths: Vec<std::path::PathBuf>,
    /// Where to write the JSON report.
    #[arg(long, short, default_value = "report.json")]
    pub out: std::path::PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::List { json } => commands::list(json),
        Command::Run(a) => commands::run(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Train(a) => commands::train(&a),
        Command::Report(a) => commands::report(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(setup::exit_code(&e))
        }
    }
}
