//! Command-line front end: scene and parameter files, map dumps, and the
//! `build-map`, `extract`, `simulate`, `benchmark` and `approx-error` commands.

pub mod commands;
pub mod config;
pub mod dump;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "rmpnav",
    version,
    about = "Reactive navigation experiments on hierarchical occupancy maps"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build an occupancy map from a scene file and write a map dump.
    BuildMap {
        #[arg(long)]
        scene: PathBuf,
        /// Output map dump.
        #[arg(long)]
        out: PathBuf,
    },
    /// List the obstacle cells seen from one position.
    Extract {
        #[command(flatten)]
        source: MapSource,
        /// Robot position `x,y,z` (m).
        #[arg(long, value_parser = parse_point)]
        pos: [f64; 3],
        /// `hier` or `fixed:<radius>`.
        #[arg(long, default_value = "hier")]
        variant: String,
        #[command(flatten)]
        params: ParamsArg,
        /// Output CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one episode and write its trajectory and summary.
    Simulate {
        #[command(flatten)]
        source: MapSource,
        #[arg(long, default_value = "hier")]
        variant: String,
        /// Start `x,y,z`; sampled from the seed when omitted.
        #[arg(long, value_parser = parse_point)]
        start: Option<[f64; 3]>,
        /// Goal `x,y,z`; sampled from the seed when omitted.
        #[arg(long, value_parser = parse_point)]
        goal: Option<[f64; 3]>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        params: ParamsArg,
        /// Also write wall-clock timings (not reproducible).
        #[arg(long)]
        timings: bool,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Randomized start/goal benchmark comparing navigation variants.
    Benchmark {
        #[command(flatten)]
        source: MapSource,
        /// Repeatable; defaults to `hier`, `fixed:1`, `fixed:3`.
        #[arg(long)]
        variant: Vec<String>,
        /// Trials per map.
        #[arg(long, default_value_t = 25)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        params: ParamsArg,
        /// Run every trial on the calling thread.
        #[arg(long, conflicts_with = "threads")]
        single_thread: bool,
        /// Worker threads; 0 uses every core.
        #[arg(long)]
        threads: Option<usize>,
        /// Also write wall-clock timings (not reproducible).
        #[arg(long)]
        timings: bool,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Coarse versus fine policy error around a 4x4x4 voxel block.
    ApproxError {
        /// `fig`, `r16` or `all`.
        #[arg(long, default_value = "r16")]
        scenario: String,
        /// Comma-separated robot distances from the block center (m).
        #[arg(long, value_delimiter = ',', default_value = "0.5,1,2,4,8,10,20")]
        distances: Vec<f64>,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        params: ParamsArg,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
}

/// Exactly one of a scene file or map dumps.
#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct MapSource {
    /// Scene file (TOML).
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Map dump; repeatable where several maps are accepted.
    #[arg(long)]
    pub map: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ParamsArg {
    /// Parameter file (TOML); built-in defaults when omitted.
    #[arg(long)]
    pub params: Option<PathBuf>,
}

fn parse_point(s: &str) -> Result<[f64; 3], String> {
    let values: Vec<f64> = s
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| format!("invalid number `{v}`")))
        .collect::<Result<_, _>>()?;
    match values.as_slice() {
        [x, y, z] if values.iter().all(|v| v.is_finite()) => Ok([*x, *y, *z]),
        _ => Err(format!("expected `x,y,z`, got `{s}`")),
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match commands::execute(cli.command) {
        Ok(report) => {
            print!("{report}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
