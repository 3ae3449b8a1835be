mod commands;
mod error;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "teleop", version, about = "Exoskeleton teleoperation retargeting and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Play one headless session and print its metrics line.
    Run {
        /// Game variant file, or the name of a shipped variant.
        #[arg(long)]
        config: String,
        /// optimal | noisy | noisy:<sigma> | replay:<recording>
        #[arg(long)]
        operator: String,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run every variant × operator × seed and write one CSV row per session.
    Batch {
        /// Directory of game variant files.
        #[arg(long)]
        configs: PathBuf,
        /// Comma-separated operators.
        #[arg(long, default_value = "optimal,noisy")]
        operators: String,
        /// Inclusive seed range `a..b`, or a single seed.
        #[arg(long, default_value = "1..5")]
        seeds: String,
        #[arg(long)]
        out: PathBuf,
        /// Also keep every recording in this directory.
        #[arg(long)]
        recordings: Option<PathBuf>,
    },
    /// Serve live sessions over WebSocket.
    Serve {
        #[arg(long)]
        config: String,
        #[arg(long, default_value = "127.0.0.1:8765")]
        listen: SocketAddr,
        #[arg(long)]
        out: PathBuf,
        /// Exoskeleton chain for joint-angle input; the shipped arm by default.
        #[arg(long)]
        exoskeleton: Option<PathBuf>,
        #[arg(long, default_value_t = 30.0)]
        snapshot_hz: f64,
    },
    /// Build a workspace calibration from a recorded sweep.
    Calibrate {
        /// replay:<recording>
        #[arg(long)]
        input: String,
        #[arg(long)]
        out: PathBuf,
        /// Which arm's wrist to use.
        #[arg(long, default_value_t = 0)]
        arm: usize,
    },
    /// Retarget a keypoint stream (JSON lines of hand frames) offline.
    Retarget {
        #[arg(long)]
        hand_model: PathBuf,
        #[arg(long)]
        keypoints: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Scale factor; the model's value, else the measured hand-size ratio.
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, default_value_t = teleop_core::retargeting::DEFAULT_BETA)]
        beta: f64,
    },
    /// Recompute a recording's metrics and compare them with its trailer.
    Verify {
        #[arg(long)]
        recording: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            operator,
            out,
            seed,
        } => commands::run(&config, &operator, &out, seed),
        Command::Batch {
            configs,
            operators,
            seeds,
            out,
            recordings,
        } => commands::batch(&configs, &operators, &seeds, &out, recordings.as_deref()),
        Command::Serve {
            config,
            listen,
            out,
            exoskeleton,
            snapshot_hz,
        } => commands::serve(&config, listen, &out, exoskeleton.as_deref(), snapshot_hz),
        Command::Calibrate { input, out, arm } => commands::calibrate(&input, &out, arm),
        Command::Retarget {
            hand_model,
            keypoints,
            out,
            alpha,
            beta,
        } => commands::retarget(&hand_model, &keypoints, &out, alpha, beta),
        Command::Verify { recording } => commands::verify(&recording),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("teleop: {f}");
            f.exit_code()
        }
    }
}
