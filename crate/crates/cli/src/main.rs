//! `yamabe`: batch front-end for the yamabe-core laboratory.
//!
//! Every subcommand reads one section of a TOML config, writes CSV/JSON into `--out`, and exits
//! with 0 on success, 1 when a run or acceptance criterion fails, and 2 on configuration errors.

mod commands;
mod config;
mod output;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use yamabe_core::exec::Execution;

use commands::CliError;
use config::RunConfig;
use output::{Meta, OutDir};

#[derive(Debug, Parser)]
#[command(name = "yamabe", version, about = "Yamabe-flow convergence laboratory on S^1 x S^(n-1)")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML config with a section per subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the seed of randomized steps.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for data-parallel scans; 1 runs sequentially.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Laplace and linearized spectra, kernel dimensions.
    Spectrum,
    /// Period table, width convexity, constant-curvature solutions on a circle.
    Period,
    /// Lyapunov-Schmidt reduction and order of integrability.
    Reduce,
    /// Flow run with rate fit; resumable from checkpoint.json.
    Flow,
    /// Slow-decay ansatz, Hessian weights, weighted norms and the polynomial-rate verdict.
    Slowflow,
    /// Runs the acceptance criteria and writes manifest.json and summary.txt.
    Report,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Period => "period",
            Command::Reduce => "reduce",
            Command::Flow => "flow",
            Command::Slowflow => "slowflow",
            Command::Report => "report",
        }
    }
}

fn missing(section: &str) -> CliError {
    CliError::Config(format!("config has no [{section}] section"))
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let text = match &cli.config {
        Some(p) => fs::read_to_string(p).map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?,
        // Only `report` has usable defaults.
        None if matches!(cli.command, Command::Report) => String::new(),
        None => return Err(CliError::Config("--config is required".into())),
    };
    let cfg: RunConfig = toml::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?;

    let exec = match cli.threads {
        Some(0) => return Err(CliError::Config("--threads must be at least 1".into())),
        Some(1) => Execution::Sequential,
        Some(t) => {
            #[cfg(feature = "parallel")]
            rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build_global()
                .map_err(|e| CliError::Failure(e.to_string()))?;
            #[cfg(not(feature = "parallel"))]
            eprintln!("built without the parallel feature; ignoring --threads {t}");
            Execution::Parallel
        }
        None => Execution::Parallel,
    };

    let mut overrides = Vec::new();
    if let Some(s) = cli.seed {
        overrides.push(("seed", s.to_string()));
    }
    let out = OutDir::create(&cli.out, Meta::new(cli.command.name(), &text, &overrides))?;
    match cli.command {
        Command::Spectrum => commands::spectrum(cfg.spectrum.as_ref().ok_or_else(|| missing("spectrum"))?, &out),
        Command::Period => commands::period(cfg.period.as_ref().ok_or_else(|| missing("period"))?, &out, exec),
        Command::Reduce => {
            let c = cfg.reduce.as_ref().ok_or_else(|| missing("reduce"))?;
            commands::reduce(c, &out, cli.seed.unwrap_or(c.seed), exec)
        }
        Command::Flow => commands::flow(cfg.flow.as_ref().ok_or_else(|| missing("flow"))?, &out),
        Command::Slowflow => commands::slowflow(cfg.slowflow.as_ref().ok_or_else(|| missing("slowflow"))?, &out, exec),
        Command::Report => {
            let c = cfg.report.unwrap_or_default();
            let seed = cli.seed.or(c.seed).unwrap_or(yamabe_core::acceptance::DEFAULT_SEED);
            commands::report(&c, &out, seed, exec)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("yamabe {}: {e}", cli.command.name());
            ExitCode::from(e.exit_code())
        }
    }
}
