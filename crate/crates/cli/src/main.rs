//! Command-line workflow: generate kernel galleries, train the inverse
//! operator, degrade images, super-resolve, evaluate, and run the ablation
//! sweeps. Every subcommand is deterministic given `--seed` and its inputs.

mod ablate;
mod commands;
mod config;
mod error;
mod manifest;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use ablate::{cmd_ablate_gallery_size, cmd_ablate_scale, AblateGalleryOpts, AblateScaleOpts};
use commands::{
    cmd_degrade, cmd_eval, cmd_gen_gallery, cmd_gen_images, cmd_sr, cmd_train, DegradeOpts,
    EvalOpts, GenGalleryOpts, GenImagesOpts, SrOpts, TrainOpts,
};
use error::CliError;

#[derive(Parser)]
#[command(
    name = "idsr",
    version,
    about = "Blind super-resolution via an image-free, identity-trained inverse kernel"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a gallery of random anisotropic Gaussian blur kernels
    GenGallery {
        /// Output gallery file
        #[arg(long)]
        out: PathBuf,
        /// Number of kernels [default: 3200]
        #[arg(long)]
        count: Option<usize>,
        /// Kernel side length, odd [default: 21]
        #[arg(long)]
        size: Option<usize>,
        /// Lower sigma bound in pixels [default: 0.175]
        #[arg(long)]
        sigma_min: Option<f64>,
        /// Upper sigma bound in pixels [default: 6.0]
        #[arg(long)]
        sigma_max: Option<f64>,
        /// Root random seed [default: 0]
        #[arg(long)]
        seed: Option<u64>,
        /// Optional key = value config file (flags win)
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Write deterministic synthetic test photographs
    GenImages {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 5)]
        count: usize,
        #[arg(long, default_value_t = 256)]
        height: usize,
        #[arg(long, default_value_t = 256)]
        width: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train the linear inverse network on a kernel gallery
    Train {
        /// Gallery file from gen-gallery
        #[arg(long)]
        gallery: PathBuf,
        /// Run directory (config snapshot, history, checkpoints)
        #[arg(long)]
        out_dir: PathBuf,
        /// Epoch count [default: 50]
        #[arg(long)]
        epochs: Option<u32>,
        /// Initial learning rate [default: 0.01]
        #[arg(long)]
        lr: Option<f64>,
        /// Scheduler step in epochs [default: 20]
        #[arg(long)]
        step_size: Option<u32>,
        /// Scheduler decay factor [default: 0.1]
        #[arg(long)]
        gamma: Option<f64>,
        /// Weight of the unit-area regularizer [default: 0.8]
        #[arg(long)]
        lambda1: Option<f64>,
        /// Weight of the unit-center regularizer [default: 0.2]
        #[arg(long)]
        lambda2: Option<f64>,
        /// Kernels per optimizer step [default: 32]
        #[arg(long)]
        batch_size: Option<usize>,
        /// Root random seed [default: 0]
        #[arg(long)]
        seed: Option<u64>,
        /// Train on only the first N kernels of the gallery
        #[arg(long)]
        gallery_size: Option<usize>,
        /// Write a checkpoint every N epochs (0 disables)
        #[arg(long, default_value_t = 10)]
        checkpoint_every: u32,
        /// Optional key = value config file (flags win)
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Blur-and-subsample HR images into an LR evaluation set
    Degrade {
        #[arg(long)]
        hr_dir: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        scale: usize,
        /// Kernel family: `rkg` (training ranges) or `unseen`
        #[arg(long, default_value = "rkg")]
        kernel_spec: String,
        /// Multiplicative noise amplitude for `unseen` kernels
        #[arg(long, default_value_t = 0.25)]
        noise_amp: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Super-resolve LR images with a trained checkpoint
    Sr {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        scale: usize,
        /// Directory of LR .png files
        #[arg(long)]
        lr_dir: Option<PathBuf>,
        /// Manifest from `degrade` (checked against --scale)
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Convolve with the collapsed effective kernel instead of running
        /// the full network
        #[arg(long)]
        collapse: bool,
    },
    /// Score SR outputs against their HR sources (with a bicubic baseline)
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        sr_dir: PathBuf,
        /// Metric records file [default: <sr-dir>/metrics.tsv]
        #[arg(long)]
        out: Option<PathBuf>,
        /// Border crop in pixels [default: the record's scale factor]
        #[arg(long)]
        crop: Option<usize>,
    },
    /// Multi-run sweeps
    Ablate {
        #[command(subcommand)]
        what: AblateCommand,
    },
}

#[derive(Subcommand)]
enum AblateCommand {
    /// Train on growing gallery prefixes and compare outcomes
    GallerySize {
        #[arg(long)]
        gallery: PathBuf,
        #[arg(long, default_value = "800,1600,2400,3200,4000")]
        sizes: String,
        #[arg(long)]
        out_dir: PathBuf,
        /// Epochs per leg (sweeps use short runs)
        #[arg(long, default_value_t = 12)]
        epochs: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Synthetic eval images per leg
        #[arg(long, default_value_t = 3)]
        eval_count: usize,
    },
    /// Evaluate one checkpoint across high scale factors (8/16/32 pick
    /// 31/41/51 kernels automatically)
    Scale {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "8,16,32")]
        scales: String,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        image_count: usize,
        #[arg(long, default_value_t = 768)]
        image_size: usize,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenGallery {
            out,
            count,
            size,
            sigma_min,
            sigma_max,
            seed,
            config,
        } => cmd_gen_gallery(GenGalleryOpts {
            out,
            count,
            size,
            sigma_min,
            sigma_max,
            seed,
            config,
        }),
        Command::GenImages {
            out_dir,
            count,
            height,
            width,
            seed,
        } => cmd_gen_images(GenImagesOpts {
            out_dir,
            count,
            height,
            width,
            seed,
        }),
        Command::Train {
            gallery,
            out_dir,
            epochs,
            lr,
            step_size,
            gamma,
            lambda1,
            lambda2,
            batch_size,
            seed,
            gallery_size,
            checkpoint_every,
            config,
        } => cmd_train(TrainOpts {
            gallery,
            out_dir,
            epochs,
            lr,
            step_size,
            gamma,
            lambda1,
            lambda2,
            batch_size,
            seed,
            gallery_size,
            checkpoint_every,
            config,
        })
        .map(|_| ()),
        Command::Degrade {
            hr_dir,
            out_dir,
            scale,
            kernel_spec,
            noise_amp,
            seed,
        } => cmd_degrade(DegradeOpts {
            hr_dir,
            out_dir,
            scale,
            kernel_spec,
            noise_amp,
            seed,
        }),
        Command::Sr {
            checkpoint,
            out_dir,
            scale,
            lr_dir,
            manifest,
            collapse,
        } => cmd_sr(SrOpts {
            checkpoint,
            out_dir,
            scale,
            lr_dir,
            manifest,
            collapse,
        }),
        Command::Eval {
            manifest,
            sr_dir,
            out,
            crop,
        } => cmd_eval(EvalOpts {
            manifest,
            sr_dir,
            out,
            crop,
        })
        .map(|_| ()),
        Command::Ablate { what } => match what {
            AblateCommand::GallerySize {
                gallery,
                sizes,
                out_dir,
                epochs,
                seed,
                eval_count,
            } => cmd_ablate_gallery_size(AblateGalleryOpts {
                gallery,
                sizes,
                out_dir,
                epochs,
                seed,
                eval_count,
            }),
            AblateCommand::Scale {
                checkpoint,
                scales,
                out_dir,
                seed,
                image_count,
                image_size,
            } => cmd_ablate_scale(AblateScaleOpts {
                checkpoint,
                scales,
                out_dir,
                seed,
                image_count,
                image_size,
            }),
        },
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("{e}");
        std::process::exit(e.exit_code());
    }
}
