//! Full-reference image quality metrics: PSNR and single-scale SSIM.
//!
//! SSIM follows the standard recipe: 11x11 Gaussian window with sigma 1.5,
//! C1 = 0.01^2 and C2 = 0.03^2 on the unit range, computed on the BT.601
//! luminance and mean-pooled over valid window positions (no padding).

use thiserror::Error;

use crate::img::ImageTensor;
use crate::tensor::Grid2D;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("image dimensions differ: {0}x{1}x{2} vs {3}x{4}x{5}")]
    DimMismatch(usize, usize, usize, usize, usize, usize),
    #[error("image too small after cropping {crop}: needs at least {need} pixels per side, has {have}")]
    TooSmall {
        crop: usize,
        need: usize,
        have: usize,
    },
}

/// One evaluated image pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    /// Peak signal-to-noise ratio in dB; `f64::INFINITY` for identical
    /// inputs.
    pub psnr_db: f64,
    pub ssim: f64,
    pub border_crop: usize,
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

fn check_dims(a: &ImageTensor, b: &ImageTensor) -> Result<(), MetricError> {
    if (a.channels(), a.height(), a.width()) != (b.channels(), b.height(), b.width()) {
        return Err(MetricError::DimMismatch(
            a.channels(),
            a.height(),
            a.width(),
            b.channels(),
            b.height(),
            b.width(),
        ));
    }
    Ok(())
}

/// `10 * log10(1 / MSE)` against peak 1.0 over the crop-trimmed region, with
/// the mean taken across all channels.
pub fn psnr(a: &ImageTensor, b: &ImageTensor, crop: usize) -> Result<f64, MetricError> {
    check_dims(a, b)?;
    let (h, w) = (a.height(), a.width());
    if h <= 2 * crop || w <= 2 * crop {
        return Err(MetricError::TooSmall {
            crop,
            need: 1,
            have: h.min(w).saturating_sub(2 * crop),
        });
    }
    let mut se = 0.0;
    let mut n = 0usize;
    for c in 0..a.channels() {
        let (pa, pb) = (a.plane(c), b.plane(c));
        for y in crop..h - crop {
            for x in crop..w - crop {
                let d = pa[y * w + x] - pb[y * w + x];
                se += d * d;
                n += 1;
            }
        }
    }
    let mse = se / n as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW as f64 - 1.0) / 2.0;
    let mut sum = 0.0;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *v;
    }
    for v in &mut w {
        *v /= sum;
    }
    w
}

/// Valid-mode separable filtering with the 1D Gaussian window.
fn filter_valid(src: &[f64], h: usize, w: usize, win: &[f64; SSIM_WINDOW]) -> (Vec<f64>, usize, usize) {
    let oh = h - SSIM_WINDOW + 1;
    let ow = w - SSIM_WINDOW + 1;
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            let mut acc = 0.0;
            for (k, &wk) in win.iter().enumerate() {
                acc += wk * src[y * w + x + k];
            }
            rows[y * ow + x] = acc;
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for (k, &wk) in win.iter().enumerate() {
                acc += wk * rows[(y + k) * ow + x];
            }
            out[y * ow + x] = acc;
        }
    }
    (out, oh, ow)
}

fn crop_grid(g: &Grid2D, crop: usize) -> Vec<f64> {
    let (h, w) = (g.height(), g.width());
    let mut out = Vec::with_capacity((h - 2 * crop) * (w - 2 * crop));
    for y in crop..h - crop {
        for x in crop..w - crop {
            out.push(g.get(y, x));
        }
    }
    out
}

/// Mean structural similarity over the luminance channel.
pub fn ssim(a: &ImageTensor, b: &ImageTensor, crop: usize) -> Result<f64, MetricError> {
    check_dims(a, b)?;
    let (h, w) = (a.height(), a.width());
    let ch = h.saturating_sub(2 * crop);
    let cw = w.saturating_sub(2 * crop);
    if ch < SSIM_WINDOW || cw < SSIM_WINDOW {
        return Err(MetricError::TooSmall {
            crop,
            need: SSIM_WINDOW,
            have: ch.min(cw),
        });
    }
    let la = a.luma();
    let lb = b.luma();
    let x = crop_grid(&la, crop);
    let y = crop_grid(&lb, crop);

    let win = gaussian_window();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(u, v)| u * v).collect();

    let (mu_x, oh, ow) = filter_valid(&x, ch, cw, &win);
    let (mu_y, _, _) = filter_valid(&y, ch, cw, &win);
    let (m_xx, _, _) = filter_valid(&xx, ch, cw, &win);
    let (m_yy, _, _) = filter_valid(&yy, ch, cw, &win);
    let (m_xy, _, _) = filter_valid(&xy, ch, cw, &win);

    let mut total = 0.0;
    for i in 0..oh * ow {
        let (mx, my) = (mu_x[i], mu_y[i]);
        let var_x = m_xx[i] - mx * mx;
        let var_y = m_yy[i] - my * my;
        let cov = m_xy[i] - mx * my;
        let num = (2.0 * mx * my + C1) * (2.0 * cov + C2);
        let den = (mx * mx + my * my + C1) * (var_x + var_y + C2);
        total += num / den;
    }
    Ok(total / (oh * ow) as f64)
}

/// Convenience wrapper producing both metrics.
pub fn report(a: &ImageTensor, b: &ImageTensor, crop: usize) -> Result<MetricReport, MetricError> {
    Ok(MetricReport {
        psnr_db: psnr(a, b, crop)?,
        ssim: ssim(a, b, crop)?,
        border_crop: crop,
    })
}
