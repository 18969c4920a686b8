//! Implementations of the single-step subcommands.

use std::path::{Path, PathBuf};

use idsr_core::dil::{train_observed, TrainConfig};
use idsr_core::gallery::{generate_gallery, load_gallery, save_gallery, GalleryConfig, KernelGallery};
use idsr_core::img::{load_png, save_png, ImageTensor};
use idsr_core::lcnn::LcnnModel;
use idsr_core::metrics::{psnr, ssim};
use idsr_core::seed::derive_seed;
use idsr_core::sr::{
    bicubic_baseline, kernel_size_for_scale, super_resolve, super_resolve_collapsed,
    synth_eval_set, KernelSpec, ScaleFactor,
};
use idsr_core::synth::synth_set;
use idsr_core::tensor::grid_sum;

use crate::config::{resolve, FileConfig};
use crate::error::CliError;
use crate::manifest::{read_manifest, write_manifest, ManifestRecord};

pub fn fmt_db(v: f64) -> String {
    if v.is_infinite() {
        "inf".to_string()
    } else {
        format!("{v:.6}")
    }
}

pub fn list_pngs(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    let entries =
        std::fs::read_dir(dir).map_err(|e| CliError::io(format!("reading {}", dir.display()), e))?;
    for entry in entries {
        let path = entry
            .map_err(|e| CliError::io(format!("reading {}", dir.display()), e))?
            .path();
        if path.extension().and_then(|s| s.to_str()) == Some("png") {
            out.push(path);
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(CliError::Usage(format!(
            "no .png files found in {}",
            dir.display()
        )));
    }
    Ok(out)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into())
}

// ---------------------------------------------------------------- gen-gallery

pub struct GenGalleryOpts {
    pub out: PathBuf,
    pub count: Option<usize>,
    pub size: Option<usize>,
    pub sigma_min: Option<f64>,
    pub sigma_max: Option<f64>,
    pub seed: Option<u64>,
    pub config: Option<PathBuf>,
}

pub fn cmd_gen_gallery(opts: GenGalleryOpts) -> Result<(), CliError> {
    let file = match &opts.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let defaults = GalleryConfig::default();
    let config = GalleryConfig {
        count: resolve(opts.count, &file, "count", defaults.count)?,
        kernel_size: resolve(opts.size, &file, "kernel_size", defaults.kernel_size)?,
        sigma_min: resolve(opts.sigma_min, &file, "sigma_min", defaults.sigma_min)?,
        sigma_max: resolve(opts.sigma_max, &file, "sigma_max", defaults.sigma_max)?,
        theta_min: defaults.theta_min,
        theta_max: defaults.theta_max,
    };
    let seed = resolve(opts.seed, &file, "seed", 0u64)?;
    config.validate()?;
    let gallery = generate_gallery(config, derive_seed(seed, "gallery"))?;
    if gallery.is_empty() {
        eprintln!("warning: generated an empty gallery (count = 0)");
    }
    save_gallery(&gallery, &opts.out)?;
    let mean_sigma = if gallery.is_empty() {
        f64::NAN
    } else {
        gallery
            .kernels
            .iter()
            .map(|k| (k.params.sigma1 + k.params.sigma2) / 2.0)
            .sum::<f64>()
            / gallery.len() as f64
    };
    println!(
        "gallery: {} kernels, {}x{}, sigma [{}, {}], mean sigma {:.4} -> {}",
        gallery.len(),
        config.kernel_size,
        config.kernel_size,
        config.sigma_min,
        config.sigma_max,
        mean_sigma,
        opts.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------- gen-images

pub struct GenImagesOpts {
    pub out_dir: PathBuf,
    pub count: usize,
    pub height: usize,
    pub width: usize,
    pub seed: u64,
}

pub fn cmd_gen_images(opts: GenImagesOpts) -> Result<(), CliError> {
    std::fs::create_dir_all(&opts.out_dir)
        .map_err(|e| CliError::io(format!("creating {}", opts.out_dir.display()), e))?;
    let images = synth_set(
        derive_seed(opts.seed, "images"),
        opts.count,
        opts.height,
        opts.width,
    );
    for (i, img) in images.iter().enumerate() {
        let path = opts.out_dir.join(format!("img-{i:03}.png"));
        save_png(img, &path)?;
    }
    println!(
        "wrote {} synthetic {}x{} images to {}",
        opts.count,
        opts.height,
        opts.width,
        opts.out_dir.display()
    );
    Ok(())
}

// ---------------------------------------------------------------- train

pub struct TrainOpts {
    pub gallery: PathBuf,
    pub out_dir: PathBuf,
    pub epochs: Option<u32>,
    pub lr: Option<f64>,
    pub step_size: Option<u32>,
    pub gamma: Option<f64>,
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    pub batch_size: Option<usize>,
    pub seed: Option<u64>,
    pub gallery_size: Option<usize>,
    pub checkpoint_every: u32,
    pub config: Option<PathBuf>,
}

pub struct TrainOutcome {
    #[allow(dead_code)]
    pub model_path: PathBuf,
    #[allow(dead_code)]
    pub final_total: f64,
}

pub fn cmd_train(opts: TrainOpts) -> Result<TrainOutcome, CliError> {
    let file = match &opts.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let d = TrainConfig::default();
    let seed = resolve(opts.seed, &file, "seed", 0u64)?;
    let cfg = TrainConfig {
        epochs: resolve(opts.epochs, &file, "epochs", d.epochs)?,
        learning_rate: resolve(opts.lr, &file, "learning_rate", d.learning_rate)?,
        step_size: resolve(opts.step_size, &file, "step_size", d.step_size)?,
        gamma: resolve(opts.gamma, &file, "gamma", d.gamma)?,
        lambda1: resolve(opts.lambda1, &file, "lambda1", d.lambda1)?,
        lambda2: resolve(opts.lambda2, &file, "lambda2", d.lambda2)?,
        batch_size: resolve(opts.batch_size, &file, "batch_size", d.batch_size)?,
        rng_seed: derive_seed(seed, "train"),
        ..d
    };
    cfg.validate()?;

    let mut gallery = load_gallery(&opts.gallery)?;
    if let Some(size) = opts.gallery_size {
        if size == 0 || size > gallery.len() {
            return Err(CliError::Usage(format!(
                "--gallery-size {size} outside 1..={}",
                gallery.len()
            )));
        }
        gallery.kernels.truncate(size);
    }

    std::fs::create_dir_all(&opts.out_dir)
        .map_err(|e| CliError::io(format!("creating {}", opts.out_dir.display()), e))?;
    write_config_snapshot(&opts.out_dir.join("config.txt"), &cfg, seed, gallery.len())?;

    let model = LcnnModel::init(derive_seed(seed, "init"));
    let ckpt_every = opts.checkpoint_every;
    let out_dir = opts.out_dir.clone();
    let mut observer_err: Option<CliError> = None;
    let (trained, history) = train_observed(model, &gallery, &cfg, |p| {
        println!(
            "epoch {:>3}/{} lr {:.6} total {:.6} identity {:.6} area {:.6} center {:.6} ({:.1}s)",
            p.epoch + 1,
            cfg.epochs,
            p.stats.lr,
            p.stats.mean.total,
            p.stats.mean.identity_residual,
            p.stats.mean.conv_area,
            p.stats.mean.center,
            p.stats.seconds
        );
        if ckpt_every > 0 && (p.epoch + 1) % ckpt_every == 0 && p.epoch + 1 < cfg.epochs {
            let path = out_dir.join(format!("ckpt-epoch-{:03}.lcnn", p.epoch + 1));
            if let Err(e) = p.model.save(&path) {
                observer_err.get_or_insert(e.into());
            }
        }
    })?;
    if let Some(e) = observer_err {
        return Err(e);
    }

    let mut hist_text = String::from("epoch\tlr\tidentity\tconv_area\tcenter\ttotal\tseconds\n");
    for s in &history.epochs {
        hist_text.push_str(&format!(
            "{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.3}\n",
            s.epoch, s.lr, s.mean.identity_residual, s.mean.conv_area, s.mean.center,
            s.mean.total, s.seconds
        ));
    }
    let hist_path = opts.out_dir.join("history.tsv");
    std::fs::write(&hist_path, hist_text)
        .map_err(|e| CliError::io(format!("writing {}", hist_path.display()), e))?;

    let model_path = opts.out_dir.join("model.lcnn");
    trained.save(&model_path)?;
    let e = trained.effective_kernel();
    let final_total = history.epochs.last().map(|s| s.mean.total).unwrap_or(f64::NAN);
    println!(
        "trained {} epochs on {} kernels; final mean total {:.6}; effective-kernel sum {:.6} -> {}",
        cfg.epochs,
        gallery.len(),
        final_total,
        grid_sum(&e.grid),
        model_path.display()
    );
    Ok(TrainOutcome {
        model_path,
        final_total,
    })
}

fn write_config_snapshot(
    path: &Path,
    cfg: &TrainConfig,
    seed: u64,
    gallery_len: usize,
) -> Result<(), CliError> {
    let text = format!(
        "epochs = {}\nlearning_rate = {}\nstep_size = {}\ngamma = {}\nlambda1 = {}\nlambda2 = {}\nbatch_size = {}\nseed = {}\ngallery_kernels = {}\n",
        cfg.epochs,
        cfg.learning_rate,
        cfg.step_size,
        cfg.gamma,
        cfg.lambda1,
        cfg.lambda2,
        cfg.batch_size,
        seed,
        gallery_len
    );
    std::fs::write(path, text).map_err(|e| CliError::io(format!("writing {}", path.display()), e))
}

// ---------------------------------------------------------------- degrade

pub struct DegradeOpts {
    pub hr_dir: PathBuf,
    pub out_dir: PathBuf,
    pub scale: usize,
    pub kernel_spec: String,
    pub noise_amp: f64,
    pub seed: u64,
}

pub fn cmd_degrade(opts: DegradeOpts) -> Result<(), CliError> {
    let s = ScaleFactor::new(opts.scale)?;
    let spec = match opts.kernel_spec.as_str() {
        "rkg" => KernelSpec::Gallery(GalleryConfig::for_kernel_size(kernel_size_for_scale(
            opts.scale,
        ))),
        "unseen" => KernelSpec::Unseen {
            noise_amplitude: opts.noise_amp,
        },
        other => {
            return Err(CliError::Usage(format!(
                "--kernel-spec must be `rkg` or `unseen`, got `{other}`"
            )))
        }
    };
    let hr_paths = list_pngs(&opts.hr_dir)?;
    let mut hr_images = Vec::with_capacity(hr_paths.len());
    for p in &hr_paths {
        hr_images.push(load_png(p)?);
    }
    std::fs::create_dir_all(&opts.out_dir)
        .map_err(|e| CliError::io(format!("creating {}", opts.out_dir.display()), e))?;
    let set = synth_eval_set(&hr_images, spec, s, derive_seed(opts.seed, "degrade"))?;
    let mut records = Vec::with_capacity(set.len());
    for (path, triple) in hr_paths.iter().zip(&set) {
        let name = stem(path);
        let lr_path = opts.out_dir.join(format!("{name}.png"));
        save_png(&triple.lr, &lr_path)?;
        let kernel_path = opts.out_dir.join(format!("{name}.kernel"));
        let single = KernelGallery {
            kernels: vec![triple.kernel.clone()],
            seed: opts.seed,
            config: GalleryConfig {
                count: 1,
                kernel_size: triple.kernel.grid.height(),
                ..GalleryConfig::default()
            },
        };
        save_gallery(&single, &kernel_path)?;
        records.push(ManifestRecord {
            hr: path.clone(),
            lr: lr_path,
            kernel: kernel_path,
            scale: opts.scale,
        });
    }
    let manifest_path = opts.out_dir.join("manifest.tsv");
    write_manifest(&manifest_path, &records)?;
    println!(
        "degraded {} images at x{} ({} kernels) -> {}",
        records.len(),
        opts.scale,
        opts.kernel_spec,
        opts.out_dir.display()
    );
    Ok(())
}

// ---------------------------------------------------------------- sr

pub struct SrOpts {
    pub checkpoint: PathBuf,
    pub out_dir: PathBuf,
    pub scale: usize,
    pub lr_dir: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub collapse: bool,
}

pub fn cmd_sr(opts: SrOpts) -> Result<(), CliError> {
    let s = ScaleFactor::new(opts.scale)?;
    let model = LcnnModel::load(&opts.checkpoint)?;
    let lr_paths: Vec<PathBuf> = match (&opts.manifest, &opts.lr_dir) {
        (Some(m), None) => {
            let records = read_manifest(m)?;
            for r in &records {
                if r.scale != opts.scale {
                    return Err(CliError::Usage(format!(
                        "manifest scale {} does not match --scale {}",
                        r.scale, opts.scale
                    )));
                }
            }
            records.into_iter().map(|r| r.lr).collect()
        }
        (None, Some(dir)) => list_pngs(dir)?,
        _ => {
            return Err(CliError::Usage(
                "provide exactly one of --manifest or --lr-dir".into(),
            ))
        }
    };
    std::fs::create_dir_all(&opts.out_dir)
        .map_err(|e| CliError::io(format!("creating {}", opts.out_dir.display()), e))?;
    let effective = model.effective_kernel();
    for path in &lr_paths {
        let lr = load_png(path)?;
        let sr = if opts.collapse {
            super_resolve_collapsed(&effective, &lr, s)?
        } else {
            super_resolve(&model, &lr, s)?
        };
        save_png(&sr, &opts.out_dir.join(format!("{}.png", stem(path))))?;
    }
    println!(
        "super-resolved {} images at x{} ({}) -> {}",
        lr_paths.len(),
        opts.scale,
        if opts.collapse {
            "collapsed kernel"
        } else {
            "full network"
        },
        opts.out_dir.display()
    );
    Ok(())
}

// ---------------------------------------------------------------- eval

pub struct EvalOpts {
    pub manifest: PathBuf,
    pub sr_dir: PathBuf,
    pub out: Option<PathBuf>,
    pub crop: Option<usize>,
}

pub struct EvalSummary {
    pub mean_ssim_sr: f64,
    pub mean_ssim_bicubic: f64,
}

pub fn cmd_eval(opts: EvalOpts) -> Result<EvalSummary, CliError> {
    let records = read_manifest(&opts.manifest)?;
    if records.is_empty() {
        return Err(CliError::Usage("manifest has no records".into()));
    }
    let out_path = opts
        .out
        .clone()
        .unwrap_or_else(|| opts.sr_dir.join("metrics.tsv"));
    let mut lines =
        String::from("id\tscale\tpsnr_sr\tssim_sr\tpsnr_bicubic\tssim_bicubic\n");
    let mut sums = [0.0f64; 4];
    let mut finite_psnr = [true; 2];
    let n = records.len() as f64;
    for r in &records {
        let s = ScaleFactor::new(r.scale)?;
        let hr_full = load_png(&r.hr)?;
        let (ch, cw) = (
            (hr_full.height() / r.scale) * r.scale,
            (hr_full.width() / r.scale) * r.scale,
        );
        let hr = hr_full.crop(ch, cw);
        let lr = load_png(&r.lr)?;
        let sr_path = opts.sr_dir.join(format!("{}.png", stem(&r.lr)));
        let sr = load_png(&sr_path)?;
        let bic = {
            let mut b = bicubic_baseline(&lr, s);
            // saved SR went through 8-bit quantization; quantize the
            // baseline identically so the comparison is fair
            quantize(&mut b);
            b
        };
        let crop = opts.crop.unwrap_or(r.scale);
        let id = stem(&r.lr);
        let psnr_sr = psnr(&hr, &sr, crop)?;
        let ssim_sr = ssim(&hr, &sr, crop)?;
        let psnr_bic = psnr(&hr, &bic, crop)?;
        let ssim_bic = ssim(&hr, &bic, crop)?;
        lines.push_str(&format!(
            "{id}\t{}\t{}\t{:.6}\t{}\t{:.6}\n",
            r.scale,
            fmt_db(psnr_sr),
            ssim_sr,
            fmt_db(psnr_bic),
            ssim_bic
        ));
        sums[0] += psnr_sr;
        sums[1] += ssim_sr;
        sums[2] += psnr_bic;
        sums[3] += ssim_bic;
        finite_psnr[0] &= psnr_sr.is_finite();
        finite_psnr[1] &= psnr_bic.is_finite();
    }
    let summary = EvalSummary {
        mean_ssim_sr: sums[1] / n,
        mean_ssim_bicubic: sums[3] / n,
    };
    lines.push_str(&format!(
        "# mean\t-\t{}\t{:.6}\t{}\t{:.6}\n# ssim_gain\t{:.6}\n",
        fmt_db(sums[0] / n),
        summary.mean_ssim_sr,
        fmt_db(sums[2] / n),
        summary.mean_ssim_bicubic,
        summary.mean_ssim_sr - summary.mean_ssim_bicubic
    ));
    std::fs::write(&out_path, &lines)
        .map_err(|e| CliError::io(format!("writing {}", out_path.display()), e))?;
    println!(
        "evaluated {} images: mean ssim {:.6} (bicubic {:.6}, gain {:+.6}) -> {}",
        records.len(),
        summary.mean_ssim_sr,
        summary.mean_ssim_bicubic,
        summary.mean_ssim_sr - summary.mean_ssim_bicubic,
        out_path.display()
    );
    Ok(summary)
}

fn quantize(img: &mut ImageTensor) {
    let hw = img.height() * img.width();
    for c in 0..img.channels() {
        let plane = img.plane_mut(c);
        for v in plane.iter_mut().take(hw) {
            *v = (v.clamp(0.0, 1.0) * 255.0).round() / 255.0;
        }
    }
}
