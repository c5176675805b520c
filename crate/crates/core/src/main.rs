use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ilinow::config::{Command, Overrides, PipelineConfig};
use ilinow::pipeline;

#[derive(Parser)]
#[command(name = "ilinow", version, about = "Nowcast influenza-like illness from search queries")]
struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Label queries with the keyword rules and overrides.
    Label,
    /// Rank candidate queries by similarity to A1 queries for review.
    Expand,
    /// Fit the case-control behavioral model and report risk contrasts.
    Casecontrol,
    /// Compute the daily MRP signal.
    Mrp,
    /// Run rolling-origin forecast backtests.
    Backtest,
    /// Generate a synthetic world.
    Synth,
    /// Recompute metrics and charts from a forecasts file.
    Report,
}

impl Cmd {
    fn command(self) -> Command {
        match self {
            Cmd::Label => Command::Label,
            Cmd::Expand => Command::Expand,
            Cmd::Casecontrol => Command::CaseControl,
            Cmd::Mrp => Command::Mrp,
            Cmd::Backtest => Command::Backtest,
            Cmd::Synth => Command::Synth,
            Cmd::Report => Command::Report,
        }
    }
}

fn run(cli: &Cli) -> ilinow::Result<Vec<PathBuf>> {
    let cmd = cli.command.command();
    let overrides = Overrides {
        seed: cli.seed,
        out: cli.out.clone(),
    };
    let config = match &cli.config {
        Some(p) => PipelineConfig::from_file(p, cmd, &overrides)?,
        None => PipelineConfig::defaults(cmd, &overrides)?,
    };
    log::info!("{} starting, output in {}", cmd.name(), config.out.display());
    match cmd {
        Command::Label => pipeline::cmd_label(&config),
        Command::Expand => pipeline::cmd_expand(&config),
        Command::CaseControl => pipeline::cmd_casecontrol(&config),
        Command::Mrp => pipeline::cmd_mrp(&config),
        Command::Backtest => pipeline::cmd_backtest(&config),
        Command::Synth => pipeline::cmd_synth(&config),
        Command::Report => pipeline::cmd_report(&config),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let threads = cli.jobs.unwrap_or(0);
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
        log::error!("cannot start worker pool: {e}");
        return ExitCode::from(2);
    }
    match run(&cli) {
        Ok(files) => {
            for f in files {
                log::info!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
