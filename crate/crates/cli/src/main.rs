//! Command-line front end: JSON-configured pipeline runs, motion-field
//! rendering, statistical probes, and attention-mask extraction.
//!
//! Exit codes: 0 on success, 2 for configuration problems (unreadable or
//! invalid config, bad flag values), 3 for runtime failures (degenerate
//! projections, I/O on data files, mid-run errors). Runtime messages name
//! the pipeline stage that died.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod commands;
mod config;
mod pgm;

/// Failures split by exit code: configuration mistakes versus everything
/// that went wrong while actually computing or writing data.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    /// Maps library errors onto the exit-code split: parameter and config
    /// violations are the caller's fault, the rest is runtime.
    pub fn from_core(e: lightmotion::Error) -> Self {
        if e.is_config() {
            CliError::Config(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

#[derive(Parser)]
#[command(name = "lightmotion", version, about = "Camera-motion operators over video diffusion latents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a pipeline run described by a JSON config file.
    Run {
        /// Path to the JSON run configuration.
        #[arg(long)]
        config: PathBuf,
    },
    /// Render one frame's motion field as PGM images (displacement
    /// magnitude and the new-perspective mask).
    Field {
        /// Camera preset name, or `identity` for the still camera.
        #[arg(long)]
        preset: String,
        /// One-based frame to render.
        #[arg(long)]
        frame: usize,
        /// Directory receiving displacement.pgm and omega.pgm.
        #[arg(long)]
        out: PathBuf,
        /// Number of frames in the clip.
        #[arg(long, default_value_t = 16)]
        frames: usize,
        /// Frame height in latent pixels.
        #[arg(long, default_value_t = 64)]
        height: usize,
        /// Frame width in latent pixels.
        #[arg(long, default_value_t = 64)]
        width: usize,
        /// Override the preset's total rotation angle in degrees.
        #[arg(long)]
        theta: Option<f64>,
    },
    /// Run a statistical probe and write its table as CSV.
    Probe {
        /// Which experiment to run.
        #[arg(long, value_enum)]
        kind: ProbeKind,
        /// Path to the JSON run configuration.
        #[arg(long)]
        config: PathBuf,
    },
    /// Threshold one token of a stored attention map into a foreground
    /// mask file.
    Mask {
        /// Attention map stored as an LMT latent, channels carrying tokens.
        #[arg(long)]
        attn: PathBuf,
        /// Zero-based token column to extract.
        #[arg(long)]
        token: usize,
        /// Threshold as a multiple of the per-frame mean score.
        #[arg(long)]
        factor: f64,
        /// Odd majority-vote window size; 1 disables smoothing.
        #[arg(long)]
        window: usize,
        /// Output mask LMT path.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ProbeKind {
    /// Feed the oracle latents noised at one timestep while it assumes
    /// another, and compare measured against predicted noise variance.
    SnrMismatch,
    /// Compare noise-variance traces and duplicate-noise correlation
    /// between camera-update runs and identity runs.
    UpdateShift,
}

/// Applies `LIGHTMOTION_THREADS` before any parallel work starts; 0 and
/// unset both mean automatic sizing.
fn init_threads() -> Result<(), CliError> {
    let raw = match std::env::var("LIGHTMOTION_THREADS") {
        Err(std::env::VarError::NotPresent) => return Ok(()),
        Err(e) => return Err(CliError::Config(format!("LIGHTMOTION_THREADS: {e}"))),
        Ok(raw) => raw,
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| CliError::Config(format!("LIGHTMOTION_THREADS: `{raw}` is not a thread count")))?;
    if n == 0 {
        return Ok(());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_threads().and_then(|()| match cli.command {
        Command::Run { config } => commands::cmd_run(&config),
        Command::Field {
            preset,
            frame,
            out,
            frames,
            height,
            width,
            theta,
        } => commands::cmd_field(&preset, frame, frames, height, width, theta, &out),
        Command::Probe { kind, config } => commands::cmd_probe(kind, &config),
        Command::Mask {
            attn,
            token,
            factor,
            window,
            out,
        } => commands::cmd_mask(&attn, token, factor, window, &out),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
