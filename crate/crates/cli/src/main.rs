//! `osse` — batch pipeline for the ocean observing-system simulation:
//! truth generation, observation simulation, reconstruction, and
//! evaluation, driven by a single JSON config with CLI overrides.

mod cmds;
mod config;
mod manifest;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use config::Config;
use osse_core::OsseError;

/// Usage-level failure (exit code 2).
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}
impl std::error::Error for Usage {}

#[derive(Parser)]
#[command(
    name = "osse",
    version,
    about = "Ocean satellite observing-system simulation pipeline"
)]
struct Cli {
    /// JSON configuration file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic SSH/SST/current truth containers.
    GenerateTruth {
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate along-track SSH observations and degraded SST.
    SimulateObs {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Withhold one satellite from the reconstruction input split.
        #[arg(long)]
        hold_out_sat: Option<u32>,
    },
    /// Reconstruct gap-free SSH from simulated tracks.
    Reconstruct {
        #[arg(long)]
        obs: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Reconstruction engine: "oi" or "var".
        #[arg(long, default_value = "var")]
        engine: String,
        #[arg(long)]
        n_ensemble: Option<usize>,
        /// Override the first-derivative loss weight.
        #[arg(long)]
        lambda1: Option<f64>,
        /// Override the second-derivative loss weight.
        #[arg(long)]
        lambda2: Option<f64>,
    },
    /// Score one or more estimates against the truth and/or held-out tracks.
    Evaluate {
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Estimate directories (repeatable); one comparison row each.
        #[arg(long, required = true)]
        est: Vec<PathBuf>,
        /// Held-out track CSV for along-track RMSE.
        #[arg(long)]
        tracks: Option<PathBuf>,
        /// Ground-truth-free mode: report along-track RMSE only.
        #[arg(long)]
        tracks_only: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-offset RMSE curve across the reconstruction window.
    ProfileWindow {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        obs: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "oi")]
        engine: String,
    },
    /// Detect, track, and serialize eddies from a truth or estimate directory.
    DetectEddies {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Relative paths resolve against $OSSE_DATA_ROOT when it is set.
fn resolve(p: &Path) -> PathBuf {
    if p.is_absolute() {
        return p.to_path_buf();
    }
    match std::env::var_os("OSSE_DATA_ROOT") {
        Some(root) => Path::new(&root).join(p),
        None => p.to_path_buf(),
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = Config::load(cli.config.as_deref())?;
    match cli.command {
        Command::GenerateTruth { out } => cmds::generate_truth_cmd(&cfg, &resolve(&out)),
        Command::SimulateObs {
            truth,
            out,
            hold_out_sat,
        } => cmds::simulate_obs_cmd(&cfg, &resolve(&truth), &resolve(&out), hold_out_sat),
        Command::Reconstruct {
            obs,
            out,
            engine,
            n_ensemble,
            lambda1,
            lambda2,
        } => cmds::reconstruct_cmd(
            &cfg,
            &resolve(&obs),
            &resolve(&out),
            &engine,
            n_ensemble,
            lambda1,
            lambda2,
        ),
        Command::Evaluate {
            truth,
            est,
            tracks,
            tracks_only,
            out,
        } => {
            let est: Vec<PathBuf> = est.iter().map(|p| resolve(p)).collect();
            cmds::evaluate_cmd(
                &cfg,
                truth.as_deref().map(resolve).as_deref(),
                &est,
                tracks.as_deref().map(resolve).as_deref(),
                tracks_only,
                &resolve(&out),
            )
        }
        Command::ProfileWindow {
            truth,
            obs,
            out,
            engine,
        } => cmds::profile_window_cmd(
            &cfg,
            &resolve(&truth),
            &resolve(&obs),
            &resolve(&out),
            &engine,
        ),
        Command::DetectEddies { input, out } => {
            cmds::detect_eddies_cmd(&cfg, &resolve(&input), &resolve(&out))
        }
    }
}

fn exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<Usage>().is_some() {
        return 2;
    }
    match err.downcast_ref::<OsseError>() {
        Some(OsseError::InvalidArgument(_)) | Some(OsseError::InvalidSpec(_)) => 2,
        Some(OsseError::Numerical(_))
        | Some(OsseError::ZeroVariance)
        | Some(OsseError::NoConstraintPoints) => 4,
        Some(_) => 3,
        // config parse problems and other wrapper errors are usage-level
        None => 2,
    }
}

fn main() {
    env_logger::init();
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(exit_code(&err));
    }
}
