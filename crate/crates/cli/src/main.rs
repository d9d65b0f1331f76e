//! `priorforge`: synthetic MRI data, untrained-network reconstructions,
//! hyperparameter sweeps and filter analysis from the command line.

mod analysis;
mod config;
mod data;
mod recon;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "priorforge", version, about = "Untrained-network MRI reconstruction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a phantom acquisition: image, coil maps, mask and noisy k-space.
    Phantom(PhantomArgs),
    /// Write a Cartesian under-sampling mask.
    Mask(MaskArgs),
    /// Reconstruct one acquisition with an untrained network.
    Recon(ReconArgs),
    /// Run a grid of reconstructions into a resumable CSV.
    Sweep(SweepArgs),
    /// Tabulate upsampler filter magnitude responses.
    Freq(FreqArgs),
    /// PSNR, SSIM and masked-region PSNR between two `.cplx` images.
    Metrics(MetricsArgs),
}

#[derive(Args)]
pub struct PhantomArgs {
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, default_value_t = 4)]
    pub coils: usize,
    #[arg(long, default_value_t = 4.0)]
    pub accel: f64,
    #[arg(long, default_value_t = 5)]
    pub center_lines: usize,
    /// Noise standard deviation per real/imaginary component.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Defaults to $PRIORFORGE_SEED, then 0.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct MaskArgs {
    /// Mask width (number of phase-encode columns).
    #[arg(long)]
    pub width: usize,
    /// Rows; defaults to the width.
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub accel: f64,
    #[arg(long)]
    pub center_lines: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output `.mask` file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Default)]
pub struct ReconArgs {
    /// TOML file whose keys mirror these flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory with kspace.cplx, csm.cplx, mask.mask and optionally image.cplx.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory for recon.cplx, log.csv and summary.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Architecture label, e.g. A_2_full_64_3, conv-decoder_256, deep-decoder_64.
    #[arg(long)]
    pub arch: Option<String>,
    /// nearest, bilinear, l100, transposed or none.
    #[arg(long)]
    pub upsampler: Option<String>,
    /// `off`, `gaussian:SIZE:SIGMA` or `gaussian:SIZE:LO-HI`.
    #[arg(long)]
    pub input_filter: Option<String>,
    /// Lipschitz penalty weight.
    #[arg(long)]
    pub lipschitz: Option<f64>,
    /// Total-variation penalty weight.
    #[arg(long)]
    pub tv: Option<f64>,
    /// Weight-decay penalty weight.
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long)]
    pub iters: Option<usize>,
    /// Adam learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// `off` or `FRACTION:WINDOW`, e.g. 0.05:30.
    #[arg(long)]
    pub self_val: Option<String>,
    /// Convolution arithmetic: f32 or f64.
    #[arg(long)]
    pub precision: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Print each log row to stderr.
    #[arg(short, long)]
    pub verbose: bool,
}

#[derive(Args)]
pub struct SweepArgs {
    /// TOML grid definition.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory for sweep.csv; overrides the file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Concurrent cells; defaults to the file value, then the available cores.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Iterations per cell; overrides the file.
    #[arg(long)]
    pub iters: Option<usize>,
    /// Seed list fallback when the file has no `seeds`.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args)]
pub struct FreqArgs {
    #[arg(long, default_value_t = 512)]
    pub points: usize,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct MetricsArgs {
    /// Reconstruction `.cplx` (first image is used).
    #[arg(long)]
    pub recon: PathBuf,
    /// Reference `.cplx` (first image is used).
    #[arg(long)]
    pub reference: PathBuf,
    /// Acquisition mask, enabling the masked-region PSNR.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// JSON destination; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Phantom(a) => data::phantom(&a),
        Command::Mask(a) => data::mask(&a),
        Command::Recon(a) => recon::run(&a),
        Command::Sweep(a) => sweep::run(&a),
        Command::Freq(a) => analysis::freq(&a),
        Command::Metrics(a) => analysis::metrics(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
