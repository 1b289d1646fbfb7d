use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use interprop_cli::config::{RunConfig, KEYS};
use interprop_cli::{commands, selfcheck};
use log::{error, info};

/// Worker-thread count for the parallel compute kernels.
const THREADS_ENV: &str = "INTERPROP_THREADS";

#[derive(Parser)]
#[command(name = "interprop", version, about = "Inter-view pairwise constraint propagation", after_help = key_help())]
struct Cli {
    /// key = value configuration file
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration key (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Shorthand for --set output_dir=DIR
    #[arg(short, long, global = true, value_name = "DIR")]
    output_dir: Option<PathBuf>,
    /// Shorthand for --set seed=N
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// More log output (-v debug, -vv trace)
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    /// Only log warnings and errors
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build and persist the graph of each view
    BuildGraph,
    /// Propagate the inter-view constraints and write the field
    Propagate,
    /// Score cross-view retrieval on the test items
    Evaluate {
        /// Field to evaluate instead of OUTPUT_DIR/field.ipmx
        #[arg(long)]
        field: Option<PathBuf>,
        /// Run every construction in `compare` and tabulate them
        #[arg(long)]
        compare: bool,
    },
    /// Cross-validated parameter search on the training items
    Gridsearch,
    /// Check the solvers against reference implementations
    Selfcheck,
}

fn key_help() -> String {
    let mut s = String::from("Configuration keys:\n");
    for (k, d) in KEYS {
        s.push_str(&format!("  {k:<32}{d}\n"));
    }
    s.push_str(&format!(
        "\nEnvironment:\n  {THREADS_ENV:<32}number of worker threads\n  RUST_LOG{:<24}log filter\n",
        ""
    ));
    s
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize =
            v.trim().parse().with_context(|| format!("{THREADS_ENV} must be a positive integer, got '{v}'"))?;
        anyhow::ensure!(n > 0, "{THREADS_ENV} must be positive");
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    init_threads()?;
    if let Command::Selfcheck = cli.command {
        let mut ok = true;
        for c in selfcheck::run(cli.seed.unwrap_or(interprop_cli::config::DEFAULT_SEED))? {
            let status = if c.pass { "PASS" } else { "FAIL" };
            if c.pass {
                info!("{status} {}: {}", c.name, c.detail);
            } else {
                error!("{status} {}: {}", c.name, c.detail);
            }
            ok &= c.pass;
        }
        return Ok(ok);
    }
    let mut overrides = cli.set;
    if let Some(d) = cli.output_dir {
        overrides.push(format!("output_dir={}", d.display()));
    }
    if let Some(s) = cli.seed {
        overrides.push(format!("seed={s}"));
    }
    let cfg = RunConfig::load(cli.config.as_deref(), &overrides)?;
    match cli.command {
        Command::BuildGraph => commands::cmd_build_graph(&cfg)?,
        Command::Propagate => commands::cmd_propagate(&cfg)?,
        Command::Evaluate { field, compare } => commands::cmd_evaluate(&cfg, field.as_deref(), compare)?,
        Command::Gridsearch => commands::cmd_gridsearch(&cfg)?,
        Command::Selfcheck => unreachable!("handled above"),
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => "warn",
        (false, 0) => "info",
        (false, 1) => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).format_timestamp(None).init();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            error!("{e:#}");
            ExitCode::FAILURE
        }
    }
}
