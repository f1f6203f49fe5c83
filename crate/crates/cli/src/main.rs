//! `lofi` - command-line driver for local-field image reconstruction.
//!
//! Subcommands: `simulate`, `train`, `infer`, `admm`, `eval`, `bench`,
//! `ccpg-trace`. Runs are reproducible: (config, seed) determines every
//! output; `--threads 1` guarantees bitwise determinism and the default
//! parallel mode reduces gradients in a fixed order so results match at any
//! thread count.

mod commands;
mod config;
mod dataset;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "lofi", version, about = "coordinate-based local-field image reconstruction")]
struct Cli {
    /// Worker threads (default: available cores; 1 = bitwise deterministic).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a simulated dataset for a task.
    Simulate {
        /// JSON run configuration.
        #[arg(long)]
        config: PathBuf,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override both data and training seeds.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        resolution: Option<usize>,
    },
    /// Train a model (simulates a dataset first if none is configured).
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        max_steps: Option<u64>,
        /// Resume from an existing checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Reconstruct an observation at any resolution.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Observation (.lft or .png).
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out_height: Option<usize>,
        #[arg(long)]
        out_width: Option<usize>,
        #[arg(long, default_value_t = 2048)]
        pixel_batch: usize,
        /// Output stem (writes <out>.lft and <out>.png).
        #[arg(long)]
        out: PathBuf,
    },
    /// Plug-and-play ADMM with a trained denoiser as the prior.
    Admm {
        #[arg(long)]
        checkpoint: PathBuf,
        /// denoise | inpaint | radio
        #[arg(long)]
        task: commands::AdmmTask,
        #[arg(long)]
        measurements: PathBuf,
        /// Pixel mask (.lft) for inpaint, uv mask for radio.
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = 90)]
        iters: usize,
        #[arg(long, default_value_t = 2048)]
        pixel_batch: usize,
        /// Ground truth for per-iteration PSNR logging.
        #[arg(long)]
        gt: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// PSNR/SSIM table for reconstructions against references.
    Eval {
        /// Reconstruction file or directory of .lft files.
        #[arg(long)]
        recon: PathBuf,
        /// Reference file or directory (paired by sorted order).
        #[arg(long)]
        reference: PathBuf,
        /// Use the reference value range as the PSNR peak (for unbounded
        /// fields) instead of 1.0.
        #[arg(long)]
        peak_range: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Instrumented training-memory benchmark across resolutions.
    Bench {
        /// Comma-separated list, e.g. 64,256.
        #[arg(long, value_delimiter = ',', default_values_t = vec![64usize, 256])]
        resolutions: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        steps: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export the per-pixel sampling geometry (offset traces + overlays).
    #[command(name = "ccpg-trace")]
    CcpgTrace {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Query pixels as "row,col;row,col;...".
        #[arg(long)]
        pixels: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_run_config(
    path: &PathBuf,
    out: Option<PathBuf>,
    seed: Option<u64>,
) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(o) = out {
        cfg.output = o;
    }
    cfg.apply_seed_overrides(seed)?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let threads = cli
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .ok(); // already set in-process (tests); the explicit flag still wins below
    match cli.cmd {
        Cmd::Simulate {
            config,
            out,
            seed,
            count,
            resolution,
        } => {
            let mut cfg = load_run_config(&config, out, seed)?;
            if let Some(c) = count {
                cfg.data.count = c;
            }
            if let Some(r) = resolution {
                cfg.data.resolution = r;
            }
            commands::cmd_simulate(&cfg)
        }
        Cmd::Train {
            config,
            out,
            seed,
            epochs,
            max_steps,
            resume,
        } => {
            let mut cfg = load_run_config(&config, out, seed)?;
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            if let Some(ms) = max_steps {
                cfg.train.max_steps = Some(ms);
            }
            commands::cmd_train(&cfg, resume.as_deref())
        }
        Cmd::Infer {
            checkpoint,
            input,
            out_height,
            out_width,
            pixel_batch,
            out,
        } => commands::cmd_infer(&checkpoint, &input, out_height, out_width, pixel_batch, &out),
        Cmd::Admm {
            checkpoint,
            task,
            measurements,
            mask,
            alpha,
            iters,
            pixel_batch,
            gt,
            out,
        } => commands::cmd_admm(
            &checkpoint,
            &task,
            &measurements,
            mask.as_deref(),
            alpha,
            iters,
            pixel_batch,
            gt.as_deref(),
            &out,
        ),
        Cmd::Eval {
            recon,
            reference,
            peak_range,
            out,
        } => commands::cmd_eval(&recon, &reference, peak_range, out.as_deref()),
        Cmd::Bench {
            resolutions,
            steps,
            out,
        } => commands::cmd_bench(&resolutions, steps, threads, out.as_deref()),
        Cmd::CcpgTrace {
            checkpoint,
            input,
            pixels,
            out,
        } => commands::cmd_trace(&checkpoint, &input, &pixels, &out),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        // Single-line, machine-parsable failure reason.
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
