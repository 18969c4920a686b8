//! Separable cubic-convolution resampling (the classic a = -0.5 kernel) with
//! half-pixel-centered coordinates and edge replication. When downscaling,
//! the kernel is widened by the inverse scale so the pass antialiases.

use crate::img::ImageTensor;

/// Keys' cubic convolution kernel with a = -0.5.
fn cubic(t: f64) -> f64 {
    const A: f64 = -0.5;
    let t = t.abs();
    if t <= 1.0 {
        (A + 2.0) * t * t * t - (A + 3.0) * t * t + 1.0
    } else if t < 2.0 {
        A * (t * t * t - 5.0 * t * t + 8.0 * t - 4.0)
    } else {
        0.0
    }
}

struct AxisTaps {
    /// First source index of each output coordinate's window (already
    /// clamped per-tap during evaluation; this is the unclamped start).
    starts: Vec<isize>,
    /// Normalized weights, `window` per output coordinate.
    weights: Vec<f64>,
    window: usize,
}

fn axis_taps(in_len: usize, out_len: usize) -> AxisTaps {
    let scale = in_len as f64 / out_len as f64;
    let fscale = scale.max(1.0);
    let support = 2.0 * fscale;
    let window = (2.0 * support).ceil() as usize + 1;
    let mut starts = Vec::with_capacity(out_len);
    let mut weights = vec![0.0; out_len * window];
    for j in 0..out_len {
        let center = (j as f64 + 0.5) * scale - 0.5;
        let start = (center - support).ceil() as isize;
        let mut sum = 0.0;
        for k in 0..window {
            let i = start + k as isize;
            let w = if (i as f64) <= center + support {
                cubic((i as f64 - center) / fscale)
            } else {
                0.0
            };
            weights[j * window + k] = w;
            sum += w;
        }
        for k in 0..window {
            weights[j * window + k] /= sum;
        }
        starts.push(start);
    }
    AxisTaps {
        starts,
        weights,
        window,
    }
}

/// Resample one row-major plane along its rows (width changes).
fn resample_rows(src: &[f64], h: usize, w_in: usize, taps: &AxisTaps, w_out: usize) -> Vec<f64> {
    let mut out = vec![0.0; h * w_out];
    for y in 0..h {
        let row = &src[y * w_in..(y + 1) * w_in];
        for j in 0..w_out {
            let start = taps.starts[j];
            let ws = &taps.weights[j * taps.window..(j + 1) * taps.window];
            let mut acc = 0.0;
            for (k, &wk) in ws.iter().enumerate() {
                let i = (start + k as isize).clamp(0, w_in as isize - 1) as usize;
                acc += wk * row[i];
            }
            out[y * w_out + j] = acc;
        }
    }
    out
}

/// Resample one row-major plane along its columns (height changes).
fn resample_cols(src: &[f64], h_in: usize, w: usize, taps: &AxisTaps, h_out: usize) -> Vec<f64> {
    let mut out = vec![0.0; h_out * w];
    for j in 0..h_out {
        let start = taps.starts[j];
        let ws = &taps.weights[j * taps.window..(j + 1) * taps.window];
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &wk) in ws.iter().enumerate() {
                let i = (start + k as isize).clamp(0, h_in as isize - 1) as usize;
                acc += wk * src[i * w + x];
            }
            out[j * w + x] = acc;
        }
    }
    out
}

pub fn bicubic_resize(img: &ImageTensor, out_h: usize, out_w: usize) -> ImageTensor {
    assert!(out_h > 0 && out_w > 0);
    let (h, w) = (img.height(), img.width());
    let htaps = axis_taps(w, out_w);
    let vtaps = axis_taps(h, out_h);
    let mut out = ImageTensor::zeros(img.channels(), out_h, out_w);
    for c in 0..img.channels() {
        let rows = resample_rows(img.plane(c), h, w, &htaps, out_w);
        let full = resample_cols(&rows, h, out_w, &vtaps, out_h);
        out.plane_mut(c).copy_from_slice(&full);
    }
    out
}

/// Upscale by an integer factor.
pub fn bicubic_upscale(img: &ImageTensor, s: usize) -> ImageTensor {
    bicubic_resize(img, img.height() * s, img.width() * s)
}
