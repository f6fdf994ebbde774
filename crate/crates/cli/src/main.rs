//! `wfcodec`: wavelet pyramids, subband statistics, WF-VAE encode/decode and
//! streaming checks from the command line.
//!
//! Every command prints a JSON report on stdout and a one-line summary on
//! stderr. Exit status is 0 when the verdict is `pass`, 1 when it is `fail`,
//! and a kind-specific code (see [`exit_code`]) when the command errors.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wfcodec_core::{ChunkPlan, Error};

use crate::report::Report;

#[derive(Parser)]
#[command(name = "wfcodec", version, about = "Wavelet-flow video codec tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct ModelArgs {
    #[arg(long, default_value = "wfvae-s", value_parser = ["wfvae-s", "wfvae-m", "wfvae-l"])]
    pub preset: String,
    #[arg(long, default_value_t = 4)]
    pub latent_channels: usize,
    /// Override the preset's base channel width.
    #[arg(long)]
    pub base_channels: Option<usize>,
    #[arg(long)]
    pub c_flow: Option<usize>,
    #[arg(long, default_value_t = 2)]
    pub blocks: usize,
    /// Replace frame layer norm with whole-clip group norm (negative control).
    #[arg(long, value_name = "GROUPS")]
    pub groupnorm: Option<usize>,
}

#[derive(Args, Clone)]
#[group(required = true, multiple = false)]
pub struct WeightSource {
    /// WFWT weight file.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Initialize weights from this seed instead of loading a file.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the wavelet pyramid and reconstruct it.
    Roundtrip {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u8).range(1..=3))]
        levels: u8,
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
        /// Also write the pyramid here and reconstruct from the files.
        #[arg(long)]
        pyramid_dir: Option<PathBuf>,
    },
    /// Per-subband energy and entropy of all three pyramid levels.
    Analyze {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = wfcodec_core::subband::DEFAULT_BINS)]
        bins: usize,
    },
    /// Compare streamed against direct encode and decode.
    VerifyStream {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        source: WeightSource,
        /// `canonical:N` or `explicit:a,b,...`; repeatable.
        #[arg(long = "plan", required = true)]
        plans: Vec<ChunkPlan>,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
    /// Cached frame counts per chunk, checked against window stepping.
    CacheTable {
        #[arg(long)]
        k_t: usize,
        #[arg(long)]
        s_t: usize,
        #[arg(long)]
        t_chunk: usize,
        #[arg(long)]
        m_max: usize,
    },
    /// Write the latent mean and logvar of a clip.
    Encode {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        source: WeightSource,
        #[arg(long, default_value = "direct")]
        plan: ChunkPlan,
        /// Directory receiving `mean.wfvt` and `logvar.wfvt`.
        #[arg(long)]
        output: PathBuf,
    },
    /// Decode a latent tensor to a clip.
    Decode {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        source: WeightSource,
        #[arg(long, default_value = "direct")]
        plan: ChunkPlan,
        /// Clip length; defaults to the length implied by the latent.
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Write a seeded weight file.
    InitWeights {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Weight file to write; without it only the digest is reported.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Loss components for a clip and its reconstruction.
    LossReport {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        recon: PathBuf,
        #[arg(long, requires = "logvar")]
        mean: Option<PathBuf>,
        #[arg(long, requires = "mean")]
        logvar: Option<PathBuf>,
        /// Externally computed adversarial loss.
        #[arg(long, default_value_t = 0.0)]
        adv: f64,
        /// Externally computed perceptual loss.
        #[arg(long)]
        perceptual: Option<f64>,
        /// Gradient norms for the adaptive adversarial weight.
        #[arg(long, num_args = 2, value_names = ["RECON", "ADV"])]
        grad_norms: Option<Vec<f64>>,
        #[arg(long, default_value_t = 1e-6)]
        kl_weight: f64,
        #[arg(long, default_value_t = 0.1)]
        wl_weight: f64,
    },
}

/// Process exit status for a failed command.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Shape(_) => 3,
        Error::Parameter(_) => 4,
        Error::Weight(_) => 5,
        Error::Io { .. } => 6,
        Error::Format(_) | Error::Truncated { .. } | Error::Json(_) => 7,
        Error::State(_) | Error::Value(_) => 8,
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("WFCODEC_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("WFCODEC_THREADS must be a positive integer, got {raw:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn run(command: Command) -> wfcodec_core::Result<Report> {
    use commands::*;
    match command {
        Command::Roundtrip { input, levels, tol, pyramid_dir } => roundtrip(&input, levels, tol, pyramid_dir.as_deref()),
        Command::Analyze { input, bins } => analyze(&input, bins),
        Command::VerifyStream { input, model, source, plans, tol } => verify_stream(&input, &model, &source, &plans, tol),
        Command::CacheTable { k_t, s_t, t_chunk, m_max } => cache_table(k_t, s_t, t_chunk, m_max),
        Command::Encode { input, model, source, plan, output } => encode(&input, &model, &source, &plan, &output),
        Command::Decode { input, model, source, plan, frames, output } => {
            decode(&input, &model, &source, &plan, frames, &output)
        }
        Command::InitWeights { model, seed, output } => init_weights(&model, seed, output.as_deref()),
        Command::LossReport { input, recon, mean, logvar, adv, perceptual, grad_norms, kl_weight, wl_weight } => {
            loss_report(LossArgs {
                input,
                recon,
                latent: mean.zip(logvar),
                adv,
                perceptual,
                grad_norms: grad_norms.map(|g| (g[0], g[1])),
                kl_weight,
                wl_weight,
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(msg) = configure_threads() {
        eprintln!("wfcodec: {msg}");
        return ExitCode::from(2);
    }
    match run(cli.command) {
        Ok(report) => {
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            eprintln!("{}: {}", report.command, if report.passed() { "pass" } else { "fail" });
            if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("wfcodec: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
