use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use userdp_core::ConstantMode;

mod audit;
mod config;
mod report;
mod run;

use audit::AuditName;
use config::{ConfigError, ExperimentConfig};
use run::SchemaError;

const EXIT_CONFIG: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_AUDIT: u8 = 3;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Theory,
    Practical,
}

#[derive(Debug, Parser)]
#[command(name = "userdp", version, about = "User-level private stochastic convex optimization experiments")]
struct Cli {
    /// Master seed: runs keep their seed count but start from this value.
    #[arg(long, global = true, env = "USERDP_SEED")]
    seed: Option<u64>,
    /// Directory for CSV outputs and the oracle cache.
    #[arg(long, global = true, env = "USERDP_OUT_DIR", default_value = "results")]
    out_dir: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Overrides `privacy.mode`.
    #[arg(long, global = true, value_enum)]
    mode: Option<Mode>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one experiment per (sweep point, seed) and write a results CSV.
    Run { config: PathBuf },
    /// Run a named audit; exits 3 if any check fails.
    Audit {
        #[arg(value_enum)]
        name: AuditName,
        /// Optional experiment config supplying problem, privacy and audit keys.
        #[arg(long)]
        config: Option<PathBuf>,
        /// `key=value`; bare keys address the [audit] section.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Summarize results CSVs.
    Report {
        #[arg(required = true)]
        csv: Vec<PathBuf>,
    },
}

fn load(path: &PathBuf) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(ExperimentConfig::parse(&text)?)
}

fn apply_mode(cfg: &mut ExperimentConfig, mode: Option<Mode>) {
    match mode {
        Some(Mode::Theory) => cfg.mode = ConstantMode::Theory,
        Some(Mode::Practical) => cfg.mode = ConstantMode::Practical,
        None => {}
    }
}

fn execute(cli: Cli) -> Result<ExitCode> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .context("configuring the worker pool")?;
    }
    match cli.command {
        Command::Run { config } => {
            let mut cfg = load(&config)?;
            apply_mode(&mut cfg, cli.mode);
            let mut notes = Vec::new();
            if let Some(seed) = cli.seed {
                cfg.override_seed(seed);
                notes.push(format!("seed override = {seed}"));
            }
            run::cmd_run(&config, &cfg, &cli.out_dir, &notes)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Audit {
            name,
            config,
            overrides,
        } => {
            let mut cfg = match &config {
                Some(path) => load(path)?,
                None => ExperimentConfig::default(),
            };
            apply_mode(&mut cfg, cli.mode);
            for o in &overrides {
                cfg.apply_override(o)?;
            }
            let seed = cli.seed.unwrap_or_else(|| cfg.seed_list()[0]);
            let report = audit::cmd_audit(name, &cfg, seed, &overrides, &cli.out_dir)?;
            Ok(if report.passed() {
                ExitCode::SUCCESS
            } else {
                eprintln!("audit {} failed", name.as_str());
                ExitCode::from(EXIT_AUDIT)
            })
        }
        Command::Report { csv } => {
            report::cmd_report(&csv)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(userdp_core::Error::InfeasibleSchedule { .. }) = cause.downcast_ref::<userdp_core::Error>() {
            return EXIT_INFEASIBLE;
        }
        if cause.is::<ConfigError>() || cause.is::<SchemaError>() {
            return EXIT_CONFIG;
        }
    }
    EXIT_CONFIG
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
