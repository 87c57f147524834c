//! Command-line front end for the uptick-rule market simulator.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{ModeChoice, RawConfig, RunConfig, KEYS};
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "uptick",
    version,
    about = "Simulate and analyse the uptick-rule asset market"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a time series of one orbit.
    Simulate(Common),
    /// Scan the intensity of choice and write attractor samples.
    Bifurcation {
        #[command(flatten)]
        common: Common,
        /// Also write an SVG scatter next to each CSV.
        #[arg(long)]
        svg: bool,
    },
    /// Report equilibria, eigenvalues and bifurcation thresholds.
    Equilibria(Common),
    /// Paired constrained and unconstrained runs from the same start.
    Compare(Common),
    /// List every config key with its default.
    Keys,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Config file of `key = value` lines (an earlier output file also works).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// constrained, unconstrained or both.
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl Common {
    fn resolve(&self, command: &str) -> CliResult<(RunConfig, PathBuf)> {
        let mut raw = RawConfig::default();
        if let Some(path) = &self.config {
            raw.apply_file(path)?;
        }
        for pair in &self.overrides {
            raw.set_pair(pair)?;
        }
        if let Some(mode) = &self.mode {
            raw.set("mode", mode)?;
        }
        if let Some(seed) = self.seed {
            raw.set("seed", &seed.to_string())?;
        }
        if command == "compare" {
            if raw.is_explicit("mode") && raw.resolve()?.mode != ModeChoice::Both {
                return Err(CliError::config(
                    "mode",
                    "compare runs both modes; use mode = both",
                ));
            }
            raw.set("mode", "both")?;
        }
        let cfg = raw.resolve()?;
        let out = self
            .out
            .clone()
            .unwrap_or_else(|| PathBuf::from(format!("{command}.csv")));
        Ok((cfg, out))
    }
}

fn written(paths: &[PathBuf]) -> String {
    paths.iter().map(|p| format!("wrote {}\n", p.display())).collect()
}

/// Runs a parsed command and returns what should go to stdout.
pub fn execute(cli: &Cli) -> CliResult<String> {
    match &cli.command {
        Command::Simulate(common) => {
            let (cfg, out) = common.resolve("simulate")?;
            Ok(written(&commands::simulate(&cfg, &out)?))
        }
        Command::Bifurcation { common, svg } => {
            let (cfg, out) = common.resolve("bifurcation")?;
            Ok(written(&commands::bifurcation(&cfg, &out, *svg)?))
        }
        Command::Equilibria(common) => {
            let (cfg, out) = common.resolve("equilibria")?;
            let (text, paths) = commands::equilibria(&cfg, &out)?;
            Ok(text + &written(&paths))
        }
        Command::Compare(common) => {
            let (cfg, out) = common.resolve("compare")?;
            Ok(written(&commands::compare(&cfg, &out)?))
        }
        Command::Keys => Ok(KEYS
            .iter()
            .map(|k| format!("{:<18} {:<20} {}\n", k.key, k.default, k.doc))
            .collect()),
    }
}

/// Parses `args` (program name first), runs, and maps failures to exit codes.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let reason = e.to_string();
            let first = reason.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("{}", CliError::Usage(first.to_string()));
            return ExitCode::from(2);
        }
    };
    match execute(&cli) {
        Ok(stdout) => {
            print!("{stdout}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
