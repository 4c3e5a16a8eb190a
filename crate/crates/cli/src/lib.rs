//! Command-line front end: `train`, `certify`, `sweep` and `validate`.

pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod train;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::Config;
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "pacile", version, about = "PAC-Bayes certified implicit loss embedding")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Config file of `key = value` lines.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Override a config key, e.g. `--set alpha=0.3`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a posterior and write it with its trace and manifest.
    Train,
    /// Evaluate the certificates of a stored posterior.
    Certify,
    /// Train on an (alpha, t) grid and write heatmaps.
    Sweep,
    /// Run the numerical validation experiments.
    Validate {
        /// `all` or comma-separated experiment names.
        which: Option<String>,
    },
    /// Print every config key with its default.
    Keys,
}

/// Builds the effective config: defaults, then the file, then flags, then `--set`.
pub fn effective_config(common: &CommonArgs) -> CliResult<Config> {
    let mut cfg = match &common.config {
        Some(p) => Config::from_file(p)?,
        None => Config::default(),
    };
    if let Some(s) = common.seed {
        cfg.set("seed", s.to_string())?;
    }
    if let Some(d) = &common.out_dir {
        cfg.set("out_dir", d.display().to_string())?;
    }
    if let Some(t) = common.threads {
        cfg.set("threads", t.to_string())?;
    }
    cfg.apply_overrides(&common.overrides)?;
    Ok(cfg)
}

/// Runs one command, prints its summary and fails if any of its checks failed.
pub fn run(cli: &Cli) -> CliResult<()> {
    let cfg = effective_config(&cli.common)?;
    let out = match &cli.command {
        Command::Train => commands::cmd_train(&cfg)?,
        Command::Certify => commands::cmd_certify(&cfg)?,
        Command::Sweep => commands::cmd_sweep(&cfg)?,
        Command::Validate { which } => commands::cmd_validate(&cfg, which.as_deref())?,
        Command::Keys => {
            for (k, v, doc) in config::KEYS {
                println!("{k} = {v}    # {doc}");
            }
            return Ok(());
        }
    };
    for line in &out.lines {
        println!("{line}");
    }
    if !out.failed.is_empty() {
        return Err(CliError::Assertion(format!("checks failed: {}", out.failed.join(", "))));
    }
    Ok(())
}

/// Parses `args` (program name first) and runs; returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
