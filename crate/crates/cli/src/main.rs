//! `hoi-aar`: batch driver for the interaction analytics pipeline.
//!
//! Exit codes: 0 success, 1 invalid usage or input, 2 processing failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use commands::Failure;

#[derive(Parser, Debug)]
#[command(name = "hoi-aar", version, about = "Interaction post-processing, evaluation and after-action metrics")]
struct Cli {
    /// Engine config file (TOML). Defaults apply when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override one config key, e.g. `--set smoothing.sigma=3`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Run everything on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,

    /// Diagnostics format on stderr.
    #[arg(long, value_enum, default_value_t = Diagnostics::Text, global = true)]
    diagnostics: Diagnostics,

    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Diagnostics {
    Text,
    Json,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Structured,
    TableText,
}

/// Smoothing flags; each one beats `--params`, the config file and defaults.
#[derive(Args, Debug, Clone, Default)]
pub struct SmoothingFlags {
    /// Smoothing parameters: a calibration result (JSON) or a TOML/JSON table of smoothing fields.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub radius: Option<usize>,
    #[arg(long = "min-len")]
    pub min_len_s: Option<f64>,
    #[arg(long = "gap-merge")]
    pub gap_merge_s: Option<f64>,
}

/// Where the sessions come from.
#[derive(Args, Debug, Clone, Default)]
pub struct SessionInputs {
    /// Manifest: one `session.toml` per line, optionally followed by an intervals CSV.
    #[arg(long, conflicts_with = "session")]
    pub manifest: Option<PathBuf>,
    /// A `session.toml`. Repeatable.
    #[arg(long)]
    pub session: Vec<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Detections to per-equipment score series.
    Map {
        #[arg(long)]
        session: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the mapped HOIs as JSON lines.
        #[arg(long)]
        hois: Option<PathBuf>,
        #[arg(long = "iou-min")]
        iou_min: Option<f64>,
    },
    /// Score series to interaction intervals.
    Segment {
        #[arg(long)]
        series: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        smoothing: SmoothingFlags,
    },
    /// Grid-search smoothing parameters on annotated sessions.
    Calibrate {
        #[command(flatten)]
        inputs: SessionInputs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = ReportFormat::Structured)]
        format: ReportFormat,
    },
    /// Intervals plus annotations to an evaluation report.
    Evaluate {
        #[command(flatten)]
        inputs: SessionInputs,
        /// Intervals CSV for each `--session`, in the same order.
        #[arg(long)]
        intervals: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = ReportFormat::Structured)]
        format: ReportFormat,
    },
    /// Session plus intervals to an assessment report.
    Assess {
        #[arg(long)]
        session: PathBuf,
        #[arg(long)]
        intervals: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = ReportFormat::Structured)]
        format: ReportFormat,
    },
    /// Detections plus hand keypoints to a labelled corpus.
    LabelAssist {
        #[arg(long)]
        session: PathBuf,
        #[arg(long)]
        skeletons: PathBuf,
        #[arg(long = "out-dir")]
        out_dir: PathBuf,
    },
    /// Synthetic session from a spec file.
    Simulate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long = "out-dir")]
        out_dir: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        noise: Option<f64>,
    },
    /// map, segment, evaluate and assess in one go.
    Pipeline {
        #[command(flatten)]
        inputs: SessionInputs,
        #[arg(long = "out-dir")]
        out_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = ReportFormat::Structured)]
        format: ReportFormat,
        #[command(flatten)]
        smoothing: SmoothingFlags,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let json = cli.diagnostics == Diagnostics::Json;
    match commands::run(&cli) {
        Ok(artifacts) => {
            for a in &artifacts {
                println!("{}", a.display());
            }
            if json {
                let out = serde_json::json!({ "exit_code": 0, "artifacts": artifacts });
                eprintln!("{out}");
            }
            ExitCode::SUCCESS
        }
        Err(Failure { code, error }) => {
            if json {
                let causes: Vec<String> = error.chain().map(ToString::to_string).collect();
                let out = serde_json::json!({ "exit_code": code, "error": error.to_string(), "causes": causes });
                eprintln!("{out}");
            } else {
                eprintln!("error: {error:#}");
            }
            ExitCode::from(code)
        }
    }
}
