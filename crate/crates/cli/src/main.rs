//! `greeneye`: dataset preparation, training, inference, live tracking and
//! calibration replay from the command line.
//!
//! Results go to stdout as `key=value` lines or JSON lines; diagnostics go to
//! stderr through `RUST_LOG`.

mod commands;
mod exit;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};
use greeneye_core::dataset::SourceSize;

use exit::Failure;

#[derive(Parser, Debug)]
#[command(name = "greeneye", version, about = "Color-marker eye tracking with cycle-consistent translation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Crop 400×300 eye regions out of a directory of face frames.
    Prep {
        #[arg(long)]
        config: PathBuf,
        /// Frames to crop; defaults to the config's `frames_dir`.
        #[arg(long)]
        frames: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Paint labelled pupils onto raw eye crops to build the paired dataset.
    Label {
        /// Directory of raw 400×300 eye crops.
        #[arg(long)]
        raw: PathBuf,
        /// CSV with `filename,cx,cy,radius`.
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        color: ColorArg,
    },
    /// Convert an externally annotated photo collection into the paired dataset.
    Convert {
        #[arg(long)]
        images: PathBuf,
        /// CSV with `filename,px,py` in source-resolution pixels.
        #[arg(long)]
        coords: PathBuf,
        /// Source resolution as `WIDTHxHEIGHT`.
        #[arg(long, default_value = "1280x720")]
        source_size: SourceSize,
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        color: ColorArg,
    },
    /// Train all four networks from scratch.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Continue training a checkpoint with named layers frozen.
    Finetune {
        #[arg(long)]
        config: PathBuf,
        /// Checkpoint to start from; defaults to the config's `checkpoint`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Comma-separated layer prefixes, optionally qualified (`G.down1`).
        #[arg(long, value_delimiter = ',')]
        freeze: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Translate eye crops and locate the painted pupil.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        /// An eye crop or a directory of them.
        #[arg(long)]
        input: PathBuf,
        /// Write translated images (and with `--dump`, masks) here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, requires = "out")]
        dump: bool,
        /// Pupil-detection settings are read from this config when given.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run the live loop and the WebSocket service.
    Track(TrackArgs),
    /// Fit and score a recorded calibration session.
    Calibrate {
        /// Session file (JSON lines of gaze samples) to replay.
        #[arg(long)]
        replay: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        screen: ScreenArgs,
    },
    /// Score a session against the calibration targets.
    Evaluate {
        #[arg(long)]
        session: PathBuf,
        /// Map samples through this model; without it samples are screen points.
        #[arg(long)]
        model: Option<PathBuf>,
        #[command(flatten)]
        screen: ScreenArgs,
    },
}

#[derive(Args, Debug)]
struct ColorArg {
    /// Marker color as `R,G,B`.
    #[arg(long, value_parser = parse_rgb)]
    color: Option<[u8; 3]>,
}

#[derive(Args, Debug)]
struct ScreenArgs {
    /// `default` (22-inch 1366×768 at 500 mm) or a geometry JSON file.
    #[arg(long, default_value = "default")]
    geometry: String,
    /// Seconds discarded at the start of each fixation.
    #[arg(long)]
    settle: Option<f64>,
}

#[derive(Args, Debug)]
struct TrackArgs {
    #[arg(long)]
    config: PathBuf,
    /// Replay a recorded session as the gaze source instead of running frames.
    #[arg(long)]
    session: Option<PathBuf>,
    /// Overrides the config's port; 0 picks a free one.
    #[arg(long)]
    port: Option<u16>,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Wait for this many clients before producing updates.
    #[arg(long, default_value_t = 0)]
    wait_clients: usize,
    /// Stop after this many updates.
    #[arg(long)]
    max_updates: Option<u64>,
    /// Pace updates by their timestamps.
    #[arg(long)]
    realtime: bool,
    /// Keep serving control messages this long after the source runs dry.
    #[arg(long, default_value_t = 0.0)]
    linger_s: f64,
}

fn parse_rgb(s: &str) -> Result<[u8; 3], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err("expected R,G,B".into());
    }
    let mut rgb = [0u8; 3];
    for (slot, p) in rgb.iter_mut().zip(parts) {
        *slot = p.trim().parse().map_err(|e| format!("{p:?}: {e}"))?;
    }
    Ok(rgb)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            if e.kind() == clap::error::ErrorKind::InvalidSubcommand {
                let _ = Cli::command().write_long_help(&mut std::io::stderr());
            }
            return ExitCode::from(if e.use_stderr() { exit::USAGE } else { 0 });
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { code, message }) => {
            eprintln!("error: {message}");
            ExitCode::from(code)
        }
    }
}
