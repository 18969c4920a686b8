//! Deterministic procedural test images: smooth gradients, multi-octave
//! texture, and sharp geometric structure. Feature sizes grow with the image
//! so downscaled versions keep recognizable content.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::img::ImageTensor;
use crate::resize::bicubic_resize;

/// One synthetic RGB image. A given `(seed, height, width)` always produces
/// the same pixels. Feature sizes scale with the image.
pub fn synth_image(seed: u64, height: usize, width: usize) -> ImageTensor {
    let f = (height.min(width) as f64 / 256.0).max(0.25);
    synth_image_with_feature_scale(seed, height, width, f)
}

/// Like `synth_image` with explicit control over feature size: a feature
/// scale of 1 keeps the fine 256px-class texture regardless of image size
/// (photograph-like detail density).
pub fn synth_image_with_feature_scale(
    seed: u64,
    height: usize,
    width: usize,
    feature_scale: f64,
) -> ImageTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = feature_scale.max(0.25);
    let mut img = ImageTensor::zeros(3, height, width);

    // background gradient
    let base: [f64; 3] = [
        rng.gen_range(0.2..0.8),
        rng.gen_range(0.2..0.8),
        rng.gen_range(0.2..0.8),
    ];
    let mut gdir = [[0.0; 3]; 2];
    for row in &mut gdir {
        for v in row.iter_mut() {
            *v = rng.gen_range(-0.4..0.4);
        }
    }
    for c in 0..3 {
        for y in 0..height {
            let fy = y as f64 / height as f64;
            for x in 0..width {
                let fx = x as f64 / width as f64;
                img.set(c, y, x, base[c] + fy * gdir[0][c] + fx * gdir[1][c]);
            }
        }
    }

    // multi-octave smoothed noise
    let normal = Normal::new(0.0, 0.25).unwrap();
    for octave in [4usize, 16, 64] {
        let cell = ((octave as f64 * f) as usize).max(2);
        let (sh, sw) = ((height / cell).max(2), (width / cell).max(2));
        let mut small = ImageTensor::zeros(3, sh, sw);
        for c in 0..3 {
            for v in small.plane_mut(c) {
                *v = normal.sample(&mut rng);
            }
        }
        let big = bicubic_resize(&small, height, width);
        let amp = 0.5 / (octave as f64).sqrt();
        for c in 0..3 {
            let bp = big.plane(c);
            for (v, b) in img.plane_mut(c).iter_mut().zip(bp) {
                *v += amp * b;
            }
        }
    }

    // sharp shapes: rectangles, disks, striped patches
    let scaled = |v: usize| ((v as f64 * f) as usize).max(1);
    for _ in 0..12 {
        let color: [f64; 3] = [rng.gen(), rng.gen(), rng.gen()];
        match rng.gen_range(0..3u8) {
            0 => {
                let h = rng.gen_range(scaled(8)..scaled(60).max(scaled(8) + 1));
                let w = rng.gen_range(scaled(8)..scaled(60).max(scaled(8) + 1));
                let y0 = rng.gen_range(0..height.saturating_sub(h).max(1));
                let x0 = rng.gen_range(0..width.saturating_sub(w).max(1));
                for c in 0..3 {
                    for y in y0..(y0 + h).min(height) {
                        for x in x0..(x0 + w).min(width) {
                            img.set(c, y, x, color[c]);
                        }
                    }
                }
            }
            1 => {
                let r = rng.gen_range(scaled(5)..scaled(30).max(scaled(5) + 1)) as isize;
                let cy = rng.gen_range(0..height) as isize;
                let cx = rng.gen_range(0..width) as isize;
                for y in (cy - r).max(0)..(cy + r + 1).min(height as isize) {
                    for x in (cx - r).max(0)..(cx + r + 1).min(width as isize) {
                        if (y - cy) * (y - cy) + (x - cx) * (x - cx) <= r * r {
                            for c in 0..3 {
                                img.set(c, y as usize, x as usize, color[c]);
                            }
                        }
                    }
                }
            }
            _ => {
                let freq_y = rng.gen_range(0.02..0.2) / f;
                let freq_x = rng.gen_range(0.02..0.2) / f;
                let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                let h = rng.gen_range(scaled(30)..scaled(80).max(scaled(30) + 1));
                let w = rng.gen_range(scaled(30)..scaled(80).max(scaled(30) + 1));
                let y0 = rng.gen_range(0..height.saturating_sub(h).max(1));
                let x0 = rng.gen_range(0..width.saturating_sub(w).max(1));
                for y in y0..(y0 + h).min(height) {
                    for x in x0..(x0 + w).min(width) {
                        let stripe = 0.5
                            + 0.5
                                * (std::f64::consts::TAU * (freq_y * y as f64 + freq_x * x as f64)
                                    + phase)
                                    .sin();
                        for c in 0..3 {
                            let old = img.get(c, y, x);
                            img.set(c, y, x, 0.7 * old + 0.3 * stripe * color[c]);
                        }
                    }
                }
            }
        }
    }
    img.clamp_unit();
    img
}

/// A reproducible set of distinct images.
pub fn synth_set(base_seed: u64, count: usize, height: usize, width: usize) -> Vec<ImageTensor> {
    (0..count)
        .map(|i| synth_image(base_seed.wrapping_add(i as u64), height, width))
        .collect()
}
