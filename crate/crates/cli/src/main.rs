mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use stockpot_core::parallel::{build_pool, threads_from_env};

use crate::output::CliError;

/// Weight-space geometry and anchored merging for fine-tuned checkpoints.
#[derive(Debug, Parser)]
#[command(name = "stockpot", version, propagate_version = true)]
struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct UnitArgs {
    /// Merge/measurement unit.
    #[arg(long, value_enum, default_value_t = GranularityKind::Tensor)]
    pub granularity: GranularityKind,

    /// Tensor-name to group-label map for `--granularity block`: a JSON object
    /// given inline or as a file path.
    #[arg(long, value_name = "JSON")]
    pub block_map: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GranularityKind {
    Global,
    Tensor,
    Filter,
    Block,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Report destination; printed to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Write tabular reports as CSV instead of JSON.
    #[arg(long)]
    pub csv: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Stock,
    Uniform,
    Wise,
    Greedy,
    Pair,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Show tensors, dtypes, shapes, digests and metadata; check schemas agree.
    Inspect {
        #[arg(required = true)]
        checkpoints: Vec<PathBuf>,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Per-unit pairwise delta angles and norms of an ensemble.
    Geometry {
        #[arg(long)]
        anchor: PathBuf,
        #[arg(required = true, num_args = 2..)]
        models: Vec<PathBuf>,
        #[command(flatten)]
        units: UnitArgs,
        #[command(flatten)]
        report: ReportArgs,
    },

    /// Elementwise mean of an ensemble.
    Center {
        #[arg(required = true)]
        models: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },

    /// Euclidean distances from checkpoints to a center.
    Distance {
        #[arg(long)]
        center: PathBuf,
        #[arg(required = true)]
        checkpoints: Vec<PathBuf>,
        #[command(flatten)]
        units: UnitArgs,
        #[command(flatten)]
        report: ReportArgs,
    },

    /// Check the thin-shell properties of an ensemble around a center.
    /// Exits with status 3 when a property fails.
    Verify {
        #[arg(long)]
        anchor: PathBuf,
        #[arg(long)]
        center: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        tol: f64,
        #[arg(required = true, num_args = 3..)]
        models: Vec<PathBuf>,
        #[command(flatten)]
        units: UnitArgs,
        #[command(flatten)]
        report: ReportArgs,
    },

    /// Merge checkpoints.
    Merge {
        #[arg(long, value_enum)]
        method: Method,
        /// Pre-trained weights (stock and wise).
        #[arg(long)]
        anchor: Option<PathBuf>,
        #[arg(required = true)]
        models: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Weight on the fine-tuned model (wise).
        #[arg(long)]
        alpha: Option<f64>,
        /// Weight on the first model (pair).
        #[arg(long)]
        t: Option<f64>,
        /// Accept alpha or t outside [0, 1].
        #[arg(long)]
        allow_extrapolation: bool,
        /// Greedy scorer: negative distance to this checkpoint.
        #[arg(long, conflicts_with = "score_cmd")]
        score_distance_to: Option<PathBuf>,
        /// Greedy scorer: shell command that receives a checkpoint path as its
        /// last argument and prints a score (higher is better).
        #[arg(long)]
        score_cmd: Option<String>,
        #[command(flatten)]
        units: UnitArgs,
        /// Write the ratio report as CSV.
        #[arg(long)]
        csv: bool,
    },

    /// Replay per-period merges of saved training runs.
    Periodic {
        #[arg(long)]
        anchor: PathBuf,
        /// One run: comma-separated checkpoints in period order. Repeat per run.
        #[arg(long = "run", required = true, value_name = "CKPTS")]
        runs: Vec<String>,
        /// Final merged checkpoint.
        #[arg(long)]
        out: PathBuf,
        /// Also write each period's merge into this directory.
        #[arg(long)]
        periods_dir: Option<PathBuf>,
        #[command(flatten)]
        units: UnitArgs,
        #[arg(long)]
        csv: bool,
    },

    /// Emit checkpoints on a grid over the plane through w0, wA and wB.
    Plane {
        /// w0, the plane's origin.
        #[arg(long)]
        anchor: PathBuf,
        /// wA, which fixes the first axis.
        a: PathBuf,
        /// wB, which fixes the second axis.
        b: PathBuf,
        #[arg(long, default_value_t = 5)]
        rows: usize,
        #[arg(long, default_value_t = 5)]
        cols: usize,
        /// Padding on each side as a fraction of the points' extent.
        #[arg(long, default_value_t = 0.2)]
        margin: f64,
        /// Output directory for the manifest and grid checkpoints.
        #[arg(long)]
        out: PathBuf,
    },

    /// Add per-unit Gaussian noise to a center.
    Perturb {
        #[arg(long)]
        center: PathBuf,
        /// One noise scale for every unit.
        #[arg(long, conflicts_with_all = ["sigma_map", "sigma_from"])]
        sigma: Option<f64>,
        /// Unit-to-sigma JSON object, inline or as a file path.
        #[arg(long, value_name = "JSON", conflicts_with = "sigma_from")]
        sigma_map: Option<String>,
        /// Match the spread of these checkpoints around their mean.
        #[arg(long, num_args = 2..)]
        sigma_from: Option<Vec<PathBuf>>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        units: UnitArgs,
    },

    /// Synthetic ensembles with a known center.
    Synth {
        #[command(subcommand)]
        command: SynthCommand,
    },
}

#[derive(Debug, Subcommand)]
enum SynthCommand {
    /// Sample an ensemble plus its anchor and true center.
    Sample {
        /// Spec JSON; the built-in desk spec when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Overrides the spec's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(short = 'n', long, default_value_t = 2)]
        models: usize,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },

    /// Simulate training runs and write every epoch's checkpoints.
    Trajectory {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Trajectory parameters JSON.
        #[arg(long)]
        params: PathBuf,
        /// Run seeds, comma-separated.
        #[arg(long, required = true, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[arg(long)]
        out: PathBuf,
    },

    /// Check a spec and compare its predicted norms and angles with samples.
    Validate {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 20)]
        samples: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn dispatch(command: Command) -> Result<(), CliError> {
    use commands::*;
    match command {
        Command::Inspect { checkpoints, out } => inspect(&checkpoints, out.as_deref()),
        Command::Geometry {
            anchor,
            models,
            units,
            report,
        } => geometry(&anchor, &models, &units, &report),
        Command::Center { models, out } => center(&models, &out),
        Command::Distance {
            center,
            checkpoints,
            units,
            report,
        } => distance(&center, &checkpoints, &units, &report),
        Command::Verify {
            anchor,
            center,
            tol,
            models,
            units,
            report,
        } => verify(&anchor, &center, tol, &models, &units, &report),
        Command::Merge {
            method,
            anchor,
            models,
            out,
            alpha,
            t,
            allow_extrapolation,
            score_distance_to,
            score_cmd,
            units,
            csv,
        } => merge(MergeRequest {
            method,
            anchor,
            models,
            out,
            alpha,
            t,
            allow_extrapolation,
            score_distance_to,
            score_cmd,
            units,
            csv,
        }),
        Command::Periodic {
            anchor,
            runs,
            out,
            periods_dir,
            units,
            csv,
        } => periodic(&anchor, &runs, &out, periods_dir.as_deref(), &units, csv),
        Command::Plane {
            anchor,
            a,
            b,
            rows,
            cols,
            margin,
            out,
        } => plane(&anchor, &a, &b, rows, cols, margin, &out),
        Command::Perturb {
            center,
            sigma,
            sigma_map,
            sigma_from,
            seed,
            out,
            units,
        } => perturb(
            &center,
            sigma,
            sigma_map.as_deref(),
            sigma_from.as_deref(),
            seed,
            &out,
            &units,
        ),
        Command::Synth { command } => match command {
            SynthCommand::Sample {
                spec,
                seed,
                models,
                out,
            } => synth_sample(spec.as_deref(), seed, models, &out),
            SynthCommand::Trajectory {
                spec,
                seed,
                params,
                seeds,
                out,
            } => synth_trajectory(spec.as_deref(), seed, &params, &seeds, &out),
            SynthCommand::Validate {
                spec,
                seed,
                samples,
                out,
            } => synth_validate(spec.as_deref(), seed, samples, out.as_deref()),
        },
    }
}

fn run() -> Result<(), CliError> {
    let cli = Cli::try_parse()?;
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    let pool = build_pool(threads_from_env()?)?;
    pool.install(|| dispatch(cli.command))
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Clap(e)) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            ExitCode::from(code)
        }
        Err(e) => {
            eprintln!("stockpot: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
