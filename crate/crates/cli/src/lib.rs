//! Command-line driver: configuration, subcommands and output files.

pub mod commands;
pub mod config;
pub mod output;

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::Value;
use thiserror::Error;

use crate::commands::{Outcome, RunOptions};
use crate::config::{parse_override_value, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const THREADS_ENV: &str = "SIDEBAND_SIM_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error("config parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("i/o error: {0}")]
    Io(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical(_) => EXIT_NUMERICAL,
            _ => EXIT_USAGE,
        }
    }
}

impl From<sideband_core::Error> for CliError {
    fn from(e: sideband_core::Error) -> Self {
        use sideband_core::Error as E;
        match e {
            E::Domain { .. } | E::Range { .. } => CliError::Config(vec![e.to_string()]),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScanKind {
    Phase,
    Aom,
    Both,
}

#[derive(Debug, Parser)]
#[command(name = "sideband-sim", version, about = "Phonon-sideband spectroscopy and dynamics of a driven two-level emitter")]
#[command(after_help = "Any config key can be overridden as --<section>.<field> VALUE, e.g. --rabi.pulse_ns 120.")]
pub struct Cli {
    /// Flat JSON config with dotted keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides output.dir).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Also write SVG plots.
    #[arg(long, global = true)]
    pub plot: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// PLE spectrum and Lorentzian peak fit.
    Ple {
        /// Switch the phonon drive off (P_RF = 0).
        #[arg(long)]
        no_phonon: bool,
        /// Optical powers (µW), one spectrum each.
        #[arg(long, value_delimiter = ',')]
        p_o: Option<Vec<f64>>,
    },
    /// Gated-phonon Rabi sequence and damped-sinusoid fit.
    Rabi {
        /// RF powers (W), one sequence each with β from the calibration.
        #[arg(long, value_delimiter = ',')]
        rf_powers: Option<Vec<f64>>,
        /// Modulation index during the pulse (overrides rabi.beta).
        #[arg(long)]
        beta: Option<f64>,
        /// Poisson shot-noise seed (overrides rabi.seed).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Two-pathway interference scans over φ_m and ν_AOM.
    Interference {
        #[arg(long, value_enum, default_value = "both")]
        scan: ScanKind,
    },
    /// SAW amplitude, single-phonon coupling and modulation index.
    Saw,
    /// Quantized-phonon versus semiclassical checks.
    Oracle,
}

/// Splits `--section.field VALUE` and `--section.field=VALUE` pairs from
/// the other arguments.
pub fn split_overrides(args: &[String]) -> Result<(Vec<String>, BTreeMap<String, Value>), CliError> {
    let mut rest = Vec::new();
    let mut overrides = BTreeMap::new();
    let mut i = 0;
    while i < args.len() {
        let a = &args[i];
        let key = a.strip_prefix("--").filter(|k| k.starts_with(|c: char| c.is_ascii_alphabetic()) && k.contains('.'));
        match key {
            Some(k) => {
                let (k, v) = match k.split_once('=') {
                    Some((k, v)) => (k.to_string(), v.to_string()),
                    None => {
                        i += 1;
                        let v = args.get(i).ok_or_else(|| CliError::Usage(format!("missing value for --{k}")))?;
                        (k.to_string(), v.clone())
                    }
                };
                overrides.insert(k, parse_override_value(&v));
            }
            None => rest.push(a.clone()),
        }
        i += 1;
    }
    Ok((rest, overrides))
}

fn configure_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got \"{v}\"")))?;
        // a pool may already exist when called twice in one process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Resolves the configuration and runs one subcommand.
pub fn execute(cli: Cli, overrides: BTreeMap<String, Value>) -> Result<Outcome, CliError> {
    let base = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let mut overrides = overrides;
    if let Some(out) = &cli.out {
        overrides.insert("output.dir".into(), Value::String(out.display().to_string()));
    }
    let mut opts = RunOptions { plot: cli.plot, ..Default::default() };
    match &cli.command {
        Command::Ple { no_phonon, p_o } => {
            if *no_phonon {
                overrides.insert("ple.p_rf".into(), Value::from(0.0));
            }
            match p_o.as_deref() {
                Some([single]) => {
                    overrides.insert("ple.p_o".into(), Value::from(*single));
                }
                Some(list) => opts.p_o_list = Some(list.to_vec()),
                None => {}
            }
        }
        Command::Rabi { rf_powers, beta, seed } => {
            if let Some(b) = beta {
                overrides.insert("rabi.beta".into(), Value::from(*b));
            }
            if let Some(s) = seed {
                overrides.insert("rabi.seed".into(), Value::from(*s));
            }
            opts.rf_powers = rf_powers.clone();
        }
        Command::Interference { scan } => opts.scan = Some(*scan),
        Command::Saw | Command::Oracle => {}
    }
    let cfg = base.with_overrides(&overrides)?;
    cfg.validate()?;
    for w in cfg.resolved_sideband_warnings() {
        eprintln!("warning: {w}");
    }
    configure_threads()?;
    let out = PathBuf::from(&cfg.output.dir);
    std::fs::create_dir_all(&out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    match cli.command {
        Command::Ple { .. } => commands::ple(&cfg, &opts, &out),
        Command::Rabi { .. } => commands::rabi(&cfg, &opts, &out),
        Command::Interference { .. } => commands::interference(&cfg, &opts, &out),
        Command::Saw => commands::saw(&cfg, &out),
        Command::Oracle => commands::oracle(&cfg, &out),
    }
}

/// Entry point shared by the binary: returns the process exit code.
pub fn run(args: Vec<String>) -> i32 {
    let (rest, overrides) = match split_overrides(&args) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let cli = match Cli::try_parse_from(rest) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli, overrides) {
        Ok(outcome) => {
            for line in &outcome.summary {
                println!("{line}");
            }
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            if outcome.converged {
                EXIT_OK
            } else {
                eprintln!("error: fit did not converge (outputs written)");
                EXIT_NUMERICAL
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn overrides_are_split_from_flags() {
        let (rest, o) = split_overrides(&args(&["sideband-sim", "rabi", "--rabi.pulse_ns", "120", "--seed", "3", "--output.dir=x"])).unwrap();
        assert_eq!(rest, args(&["sideband-sim", "rabi", "--seed", "3"]));
        assert_eq!(o["rabi.pulse_ns"], Value::from(120));
        assert_eq!(o["output.dir"], Value::String("x".into()));
    }

    #[test]
    fn dangling_override_is_a_usage_error() {
        assert_eq!(split_overrides(&args(&["x", "--rabi.beta"])).unwrap_err().exit_code(), EXIT_USAGE);
    }

    #[test]
    fn numeric_list_flags_parse() {
        let c = Cli::try_parse_from(args(&["x", "rabi", "--rf-powers", "0.2,0.1,0.05"])).unwrap();
        match c.command {
            Command::Rabi { rf_powers, .. } => assert_eq!(rf_powers.unwrap(), vec![0.2, 0.1, 0.05]),
            _ => unreachable!(),
        }
    }

    #[test]
    fn error_exit_codes() {
        assert_eq!(CliError::Numerical("x".into()).exit_code(), EXIT_NUMERICAL);
        assert_eq!(CliError::Config(vec![]).exit_code(), EXIT_USAGE);
    }
}
