//! Multi-run sweeps: gallery-size scaling and high scale factors. Legs are
//! resumable (a leg with an existing report is skipped) and a failed leg is
//! recorded without aborting the sweep.

use std::path::{Path, PathBuf};

use idsr_core::dil::{train, TrainConfig};
use idsr_core::gallery::{load_gallery, GalleryConfig};
use idsr_core::lcnn::LcnnModel;
use idsr_core::metrics::ssim;
use idsr_core::seed::derive_seed;
use idsr_core::sr::{
    bicubic_baseline, kernel_size_for_scale, super_resolve_collapsed, synth_eval_set, EvalTriple,
    KernelSpec, ScaleFactor,
};
use idsr_core::synth::synth_set;

use crate::error::CliError;

fn parse_csv(list: &str, what: &str) -> Result<Vec<usize>, CliError> {
    let values: Result<Vec<usize>, _> = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<usize>())
        .collect();
    let values = values.map_err(|_| CliError::Usage(format!("bad {what} list `{list}`")))?;
    if values.is_empty() {
        return Err(CliError::Usage(format!("empty {what} sweep")));
    }
    Ok(values)
}

/// Mean SSIM of the collapsed-kernel SR path and the bicubic baseline over an
/// evaluation set, computed in memory.
fn eval_ssim(
    model: &LcnnModel,
    triples: &[EvalTriple],
    scale: usize,
) -> Result<(f64, f64), CliError> {
    let s = ScaleFactor::new(scale)?;
    let effective = model.effective_kernel();
    let mut sr_sum = 0.0;
    let mut bic_sum = 0.0;
    for t in triples {
        let sr = super_resolve_collapsed(&effective, &t.lr, s)?;
        let bic = bicubic_baseline(&t.lr, s);
        sr_sum += ssim(&t.hr, &sr, scale)?;
        bic_sum += ssim(&t.hr, &bic, scale)?;
    }
    let n = triples.len() as f64;
    Ok((sr_sum / n, bic_sum / n))
}

fn read_report_line(path: &Path) -> Result<String, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    Ok(text.trim_end().to_string())
}

pub struct AblateGalleryOpts {
    pub gallery: PathBuf,
    pub sizes: String,
    pub out_dir: PathBuf,
    pub epochs: u32,
    pub seed: u64,
    pub eval_count: usize,
}

pub fn cmd_ablate_gallery_size(opts: AblateGalleryOpts) -> Result<(), CliError> {
    let sizes = parse_csv(&opts.sizes, "gallery-size")?;
    let full = load_gallery(&opts.gallery)?;
    std::fs::create_dir_all(&opts.out_dir)
        .map_err(|e| CliError::io(format!("creating {}", opts.out_dir.display()), e))?;

    let images = synth_set(derive_seed(opts.seed, "ablate-images"), opts.eval_count, 256, 256);
    let scale = 2;
    let triples = synth_eval_set(
        &images,
        KernelSpec::in_distribution(),
        ScaleFactor::new(scale)?,
        derive_seed(opts.seed, "ablate-kernels"),
    )?;

    let mut rows = Vec::new();
    let mut first_failure: Option<CliError> = None;
    for &size in &sizes {
        let leg_dir = opts.out_dir.join(format!("gallery-{size}"));
        let report = leg_dir.join("report.tsv");
        if report.exists() {
            rows.push(read_report_line(&report)?);
            println!("gallery-{size}: resumed from existing report");
            continue;
        }
        std::fs::create_dir_all(&leg_dir)
            .map_err(|e| CliError::io(format!("creating {}", leg_dir.display()), e))?;
        let line = match run_gallery_leg(&full, size, &opts, &triples, scale, &leg_dir) {
            Ok(line) => line,
            Err(e) => {
                eprintln!("gallery-{size}: FAILED: {e}");
                let line = format!("{size}\tfailed\tnan\tnan\tnan");
                first_failure.get_or_insert(e);
                line
            }
        };
        std::fs::write(&report, format!("{line}\n"))
            .map_err(|e| CliError::io(format!("writing {}", report.display()), e))?;
        rows.push(line);
    }

    let mut table = String::from("size\tstatus\tfinal_total\tssim_sr\tssim_bicubic\n");
    println!("size\tstatus\tfinal_total\tssim_sr\tssim_bicubic");
    for r in &rows {
        println!("{r}");
        table.push_str(r);
        table.push('\n');
    }
    let agg = opts.out_dir.join("report.tsv");
    std::fs::write(&agg, table).map_err(|e| CliError::io(format!("writing {}", agg.display()), e))?;
    match first_failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn run_gallery_leg(
    full: &idsr_core::KernelGallery,
    size: usize,
    opts: &AblateGalleryOpts,
    triples: &[EvalTriple],
    scale: usize,
    leg_dir: &Path,
) -> Result<String, CliError> {
    if size == 0 || size > full.len() {
        return Err(CliError::Usage(format!(
            "gallery size {size} outside 1..={}",
            full.len()
        )));
    }
    let mut gallery = full.clone();
    gallery.kernels.truncate(size);
    let cfg = TrainConfig {
        epochs: opts.epochs,
        rng_seed: derive_seed(opts.seed, "ablate-train"),
        ..TrainConfig::default()
    };
    let (model, history) = train(LcnnModel::init(derive_seed(opts.seed, "ablate-init")), &gallery, &cfg)?;
    model.save(&leg_dir.join("model.lcnn"))?;
    let final_total = history.epochs.last().map(|s| s.mean.total).unwrap_or(f64::NAN);
    let (ssim_sr, ssim_bic) = eval_ssim(&model, triples, scale)?;
    Ok(format!(
        "{size}\tok\t{final_total:.6}\t{ssim_sr:.6}\t{ssim_bic:.6}"
    ))
}

pub struct AblateScaleOpts {
    pub checkpoint: PathBuf,
    pub scales: String,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub image_count: usize,
    pub image_size: usize,
}

pub fn cmd_ablate_scale(opts: AblateScaleOpts) -> Result<(), CliError> {
    let scales = parse_csv(&opts.scales, "scale")?;
    let model = LcnnModel::load(&opts.checkpoint)?;
    std::fs::create_dir_all(&opts.out_dir)
        .map_err(|e| CliError::io(format!("creating {}", opts.out_dir.display()), e))?;
    let images = synth_set(
        derive_seed(opts.seed, "scale-images"),
        opts.image_count,
        opts.image_size,
        opts.image_size,
    );

    let mut rows = Vec::new();
    let mut first_failure: Option<CliError> = None;
    for &scale in &scales {
        let leg_dir = opts.out_dir.join(format!("scale-{scale}"));
        let report = leg_dir.join("report.tsv");
        if report.exists() {
            rows.push(read_report_line(&report)?);
            println!("scale-{scale}: resumed from existing report");
            continue;
        }
        std::fs::create_dir_all(&leg_dir)
            .map_err(|e| CliError::io(format!("creating {}", leg_dir.display()), e))?;
        let line = match run_scale_leg(&model, scale, &images, &opts) {
            Ok(line) => line,
            Err(e) => {
                eprintln!("scale-{scale}: FAILED: {e}");
                first_failure.get_or_insert(e);
                format!("{scale}\t{}\tfailed\tnan\tnan\tnan", kernel_size_for_scale(scale))
            }
        };
        std::fs::write(&report, format!("{line}\n"))
            .map_err(|e| CliError::io(format!("writing {}", report.display()), e))?;
        rows.push(line);
    }

    let mut table = String::from("scale\tkernel_size\tstatus\tssim_sr\tssim_bicubic\tssim_gain\n");
    println!("scale\tkernel_size\tstatus\tssim_sr\tssim_bicubic\tssim_gain");
    for r in &rows {
        println!("{r}");
        table.push_str(r);
        table.push('\n');
    }
    let agg = opts.out_dir.join("report.tsv");
    std::fs::write(&agg, table).map_err(|e| CliError::io(format!("writing {}", agg.display()), e))?;
    match first_failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn run_scale_leg(
    model: &LcnnModel,
    scale: usize,
    images: &[idsr_core::ImageTensor],
    opts: &AblateScaleOpts,
) -> Result<String, CliError> {
    let kernel_size = kernel_size_for_scale(scale);
    let spec = KernelSpec::Gallery(GalleryConfig::for_kernel_size(kernel_size));
    let triples = synth_eval_set(
        images,
        spec,
        ScaleFactor::new(scale)?,
        derive_seed(opts.seed, "scale-kernels").wrapping_add(scale as u64),
    )?;
    let (ssim_sr, ssim_bic) = eval_ssim(model, &triples, scale)?;
    Ok(format!(
        "{scale}\t{kernel_size}\tok\t{ssim_sr:.6}\t{ssim_bic:.6}\t{:+.6}",
        ssim_sr - ssim_bic
    ))
}
