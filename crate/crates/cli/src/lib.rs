//! `gshp`: the design pipeline from metered data to simulated plant cases.
//!
//! Every subcommand reads one TOML project file. `--set key=value` changes a
//! single key for this invocation and is recorded in the run manifest.
//!
//! Exit codes: 0 success, 2 input or config error, 3 no feasible design,
//! 4 outputs produced under a different config (stale manifest), 1 internal
//! error.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

pub mod config;
pub mod manifest;
pub mod stages;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_STALE: i32 = 4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CliError {
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INPUT,
            kind: "config",
            message: message.into(),
        }
    }

    pub fn input(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INPUT,
            kind: "input",
            message: message.into(),
        }
    }

    pub fn infeasible(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INFEASIBLE,
            kind: "infeasible",
            message: message.into(),
        }
    }

    pub fn stale(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_STALE,
            kind: "stale",
            message: message.into(),
        }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INTERNAL,
            kind: "internal",
            message: message.into(),
        }
    }

    /// One-line JSON record written to stderr.
    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self }).to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

impl std::error::Error for CliError {}

/// Writes `bytes` to `path`, creating parent directories.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| CliError::internal(format!("cannot create {}: {e}", parent.display())))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::internal(format!("cannot write {}: {e}", path.display())))
}

#[derive(Debug, Parser)]
#[command(name = "gshp", version, about = "Hybrid ground/air source heat pump design pipeline")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Project file (TOML).
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,
    /// Override one config key, e.g. `--set costs.electricity_price=0.1`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Output directory; takes precedence over `output_dir` and is not part
    /// of the config digest.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Validate the config and inputs, write nothing.
    #[arg(long, global = true)]
    pub dry_run: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Derive benchmark targets and scale the hourly profiles onto them.
    Scale,
    /// Size a full ground-source borefield for the scaled loads.
    Size,
    /// Sweep the cooling shave factor and pick the cheapest hybrid split.
    Optimize,
    /// Simulate plant cases from the config's case matrix.
    Simulate {
        /// `all` or a comma-separated list of case names.
        #[arg(long, default_value = "all")]
        cases: String,
        /// Cases run concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Assemble a report from whatever stages have run.
    Report,
    /// Run scale, size, optimize, simulate and report in order.
    Run {
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Write deterministic synthetic profiles (and optionally weather).
    SynthProfile {
        /// Destination for `hour,heating_kw,cooling_kw`.
        #[arg(long)]
        output: PathBuf,
        /// Destination for `hour,outdoor_drybulb_c`.
        #[arg(long)]
        weather: Option<PathBuf>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code. Errors go to stderr as one JSON record.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return EXIT_OK;
            }
            let err = CliError::config(e.to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return EXIT_INPUT;
        }
    };
    match stages::execute(&cli) {
        Ok(summary) => {
            // A closed stdout (e.g. piped into `head`) is not an error.
            use std::io::Write;
            let _ = writeln!(std::io::stdout(), "{summary}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.code
        }
    }
}
