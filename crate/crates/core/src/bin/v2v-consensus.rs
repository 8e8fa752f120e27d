use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use v2v_consensus::config::{CampaignConfig, Overrides};
use v2v_consensus::error::Error;
use v2v_consensus::export::{read_summary_csv, render_report, RunPaths};
use v2v_consensus::run::{execute, write_and_verify};

#[derive(Parser)]
#[command(name = "v2v-consensus", version, about = "Entropy-gated V2V intent consensus simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one operating point.
    Run(RunArgs),
    /// Run every grid point of the config's sweep.
    Sweep(RunArgs),
    /// Merge summary tables from one or more run directories.
    Report(ReportArgs),
    /// Check a config and print the resolved settings.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output root; each run writes to `<out>/<run_id>/`.
    #[arg(long, env = "V2V_CONSENSUS_OUT", default_value = "out")]
    out: PathBuf,
    /// Comma-separated seed list.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Episodes per seed.
    #[arg(long)]
    episodes: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    parallelism: Option<usize>,
}

#[derive(Args)]
struct ReportArgs {
    /// Run directories containing summary.csv.
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    #[arg(long)]
    no_cloud_reference: bool,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    config: PathBuf,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_user_error() {
            Failure::Usage(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn load(config: &Path, args: Option<&RunArgs>) -> Result<CampaignConfig, Failure> {
    let overrides = args
        .map(|a| Overrides {
            seeds: a.seeds.clone(),
            episodes_per_seed: a.episodes,
            parallelism: a.parallelism,
        })
        .unwrap_or_default();
    if !config.exists() {
        return Err(Failure::Usage(format!("{}: config file not found", config.display())));
    }
    Ok(CampaignConfig::load_with(config, &overrides)?)
}

fn cmd_run(args: &RunArgs, sweep: bool) -> Result<(), Failure> {
    let config = load(&args.config, Some(args))?;
    match (sweep, config.sweep.is_some()) {
        (true, false) => {
            return Err(Failure::Usage(format!(
                "{}: no [sweep] section; use `run`",
                args.config.display()
            )))
        }
        (false, true) => {
            return Err(Failure::Usage(format!(
                "{}: config defines a sweep; use `sweep`",
                args.config.display()
            )))
        }
        _ => {}
    }
    let output = execute(&config)?;
    let paths = write_and_verify(&args.out, &output)?;
    print!("{}", render_report(&output.rows, false));
    println!("wrote {}", paths.dir.display());
    Ok(())
}

fn cmd_report(args: &ReportArgs) -> Result<(), Failure> {
    let mut rows = Vec::new();
    for dir in &args.runs {
        let paths = RunPaths::new(dir);
        if !paths.summary.exists() {
            return Err(Failure::Runtime(format!("{}: missing summary.csv", dir.display())));
        }
        rows.extend(read_summary_csv(&paths.summary)?);
    }
    print!("{}", render_report(&rows, !args.no_cloud_reference));
    Ok(())
}

fn cmd_validate(args: &ValidateArgs) -> Result<(), Failure> {
    let config = load(&args.config, None)?;
    print!("{}", config.to_toml());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a, false),
        Command::Sweep(a) => cmd_run(a, true),
        Command::Report(a) => cmd_report(a),
        Command::Validate(a) => cmd_validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
