//! Command-line front end: `steady`, `chart`, `zk`, `simulate`, and `sweep`
//! subcommands over a shared JSON configuration.
//!
//! Exit codes: 0 success, 2 configuration error, 3 no positive steady state
//! anywhere (degenerate chart), 4 numerical failure.

mod commands;
mod config;
mod emit;

pub use config::{BetaSpec, FileConfig, RunConfig};
pub use emit::to_json;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::Error;
use config::{AnalysisFlags, ModelFlags, SolverFlags};

#[derive(Debug, Parser)]
#[command(
    name = "hematodyn",
    version,
    about = "Steady states, stability charts, and simulations of a delayed stem cell population model"
)]
struct Cli {
    /// JSON configuration file; command-line flags override its values
    #[arg(long, value_name = "FILE", global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Report the steady states and the existence threshold for the delay
    Steady {
        #[command(flatten)]
        model: ModelFlags,
        /// Output JSON path (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit the stability chart over [0, tau-max] as JSON
    Chart {
        #[command(flatten)]
        model: ModelFlags,
        /// Right edge of the charted delay range (days); defaults to just past
        /// the existence threshold
        #[arg(long = "tau-max")]
        tau_max: Option<f64>,
        /// Scan points per branch for crossing detection
        #[arg(long)]
        grid: Option<usize>,
        /// Highest branch index written by --zk-csv
        #[arg(long = "k-max", default_value_t = 1)]
        k_max: u32,
        /// Prefix for per-branch CSV profiles (writes <PREFIX>k<k>.csv)
        #[arg(long = "zk-csv", value_name = "PREFIX")]
        zk_csv: Option<String>,
        /// Output JSON path (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit per-branch CSV profiles of the crossing functions Z_k
    Zk {
        #[command(flatten)]
        model: ModelFlags,
        /// Highest branch index to emit
        #[arg(long = "k-max", default_value_t = 1)]
        k_max: u32,
        /// Profile points per branch
        #[arg(long)]
        grid: Option<usize>,
        /// Output path prefix (writes <PREFIX>k<k>.csv)
        #[arg(long, default_value = "zk_")]
        out: String,
    },
    /// Integrate the system from a constant history and classify the long run
    Simulate {
        #[command(flatten)]
        model: ModelFlags,
        #[command(flatten)]
        solver: SolverFlags,
        #[command(flatten)]
        analysis: AnalysisFlags,
        /// Constant history "S,N" on [-tau, 0]
        #[arg(long, value_parser = parse_pair, default_value = "1,1")]
        history: (f64, f64),
        /// Mesh-node stride for trajectory CSV output
        #[arg(long)]
        stride: Option<usize>,
        /// Output base path; writes <BASE>.csv and <BASE>.json
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate several delays concurrently and emit one summary array
    Sweep {
        #[command(flatten)]
        model: ModelFlags,
        #[command(flatten)]
        solver: SolverFlags,
        #[command(flatten)]
        analysis: AnalysisFlags,
        /// Comma-separated delays (days)
        #[arg(long = "tau-list", value_delimiter = ',', required = true)]
        tau_list: Vec<f64>,
        /// Constant history "S,N" shared by every run
        #[arg(long, value_parser = parse_pair, default_value = "1,1")]
        history: (f64, f64),
        /// Output JSON path (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_pair(text: &str) -> Result<(f64, f64), String> {
    let mut parts = text.split(',');
    let parse = |part: Option<&str>| {
        part.ok_or_else(|| format!("expected \"S,N\", got {text:?}"))?
            .trim()
            .parse::<f64>()
            .map_err(|e| format!("invalid number in {text:?}: {e}"))
    };
    let s = parse(parts.next())?;
    let n = parse(parts.next())?;
    if parts.next().is_some() {
        return Err(format!("expected exactly two values, got {text:?}"));
    }
    Ok((s, n))
}

/// Parses arguments, runs the selected command, and returns the process exit
/// code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // clap exits 0 for --help/--version and 2 for usage errors.
            let code = if err.use_stderr() { 2 } else { 0 };
            let _ = err.print();
            return code;
        }
    };

    let file = match cli.config.as_deref().map(FileConfig::load).transpose() {
        Ok(file) => file,
        Err(err) => {
            eprintln!("error: {err}");
            return 2;
        }
    };

    match commands::dispatch(cli.command, file.as_ref()) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code_for(&err)
        }
    }
}

fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Blowup { .. } | Error::NegativeState { .. } => 4,
        Error::NoPositiveSteadyState(_) => 3,
        _ => 2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_parser_accepts_and_rejects() {
        assert_eq!(parse_pair("1,1").unwrap(), (1.0, 1.0));
        assert_eq!(parse_pair("0.5, 2.25").unwrap(), (0.5, 2.25));
        assert!(parse_pair("1").is_err());
        assert!(parse_pair("1,2,3").is_err());
        assert!(parse_pair("a,b").is_err());
    }
}
