//! The random kernel gallery: anisotropic Gaussian degradation kernels
//! sampled from a seeded parameter space, plus the impulse training target.
//!
//! Each kernel is the continuous anisotropic Gaussian density evaluated at
//! integer offsets from the grid center and normalized to unit sum, so every
//! kernel is non-negative, point-symmetric in expectation of its parameters,
//! and has DC gain exactly 1.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::format::{ByteReader, ByteWriter, FormatError};
use crate::tensor::Grid2D;

#[derive(Debug, Error)]
pub enum ParamError {
    #[error("sigma must be positive, got {0}")]
    NonPositiveSigma(f64),
    #[error("kernel size must be odd and positive, got {0}")]
    EvenKernelSize(usize),
    #[error("sigma range is empty: [{min}, {max}]")]
    EmptySigmaRange { min: f64, max: f64 },
}

/// Shape parameters of one anisotropic Gaussian kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianParams {
    pub sigma1: f64,
    pub sigma2: f64,
    /// Rotation of the principal axis, radians in `[0, pi)`.
    pub theta: f64,
}

impl GaussianParams {
    pub fn new(sigma1: f64, sigma2: f64, theta: f64) -> Result<Self, ParamError> {
        if sigma1 <= 0.0 || !sigma1.is_finite() {
            return Err(ParamError::NonPositiveSigma(sigma1));
        }
        if sigma2 <= 0.0 || !sigma2.is_finite() {
            return Err(ParamError::NonPositiveSigma(sigma2));
        }
        Ok(GaussianParams {
            sigma1,
            sigma2,
            theta,
        })
    }
}

/// A normalized blur kernel together with the parameters it was sampled from.
#[derive(Debug, Clone, PartialEq)]
pub struct DegradationKernel {
    pub grid: Grid2D,
    pub params: GaussianParams,
}

/// Sampling ranges and sizes for gallery generation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GalleryConfig {
    pub count: usize,
    pub kernel_size: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub theta_min: f64,
    pub theta_max: f64,
}

impl Default for GalleryConfig {
    fn default() -> Self {
        GalleryConfig {
            count: 3200,
            kernel_size: 21,
            sigma_min: 0.175,
            sigma_max: 6.0,
            theta_min: 0.0,
            theta_max: PI,
        }
    }
}

impl GalleryConfig {
    /// Ranges used with the larger kernels that pair with scale factors
    /// 8, 16 and 32 (kernel sizes 31, 41, 51).
    pub fn for_kernel_size(kernel_size: usize) -> Self {
        let (sigma_min, sigma_max) = if kernel_size > 21 {
            (0.175, 3.1)
        } else {
            (0.175, 6.0)
        };
        GalleryConfig {
            kernel_size,
            sigma_min,
            sigma_max,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        if self.kernel_size % 2 == 0 || self.kernel_size == 0 {
            return Err(ParamError::EvenKernelSize(self.kernel_size));
        }
        if self.sigma_min <= 0.0 {
            return Err(ParamError::NonPositiveSigma(self.sigma_min));
        }
        if !(self.sigma_min < self.sigma_max) {
            return Err(ParamError::EmptySigmaRange {
                min: self.sigma_min,
                max: self.sigma_max,
            });
        }
        Ok(())
    }
}

/// The full training set: kernels plus everything needed to regenerate them.
#[derive(Debug, Clone)]
pub struct KernelGallery {
    pub kernels: Vec<DegradationKernel>,
    pub seed: u64,
    pub config: GalleryConfig,
}

impl KernelGallery {
    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }
}

/// Evaluates the anisotropic Gaussian density
/// `exp(-0.5 * d' * Sigma^-1 * d)` with
/// `Sigma = R(theta) diag(sigma1^2, sigma2^2) R(theta)'` at integer offsets
/// from the center pixel, then normalizes to unit sum.
pub fn sample_anisotropic_gaussian(
    params: GaussianParams,
    size: usize,
) -> Result<DegradationKernel, ParamError> {
    if size % 2 == 0 || size == 0 {
        return Err(ParamError::EvenKernelSize(size));
    }
    let params = GaussianParams::new(params.sigma1, params.sigma2, params.theta)?;
    let c = (size as f64 - 1.0) / 2.0;
    let (ct, st) = (params.theta.cos(), params.theta.sin());
    let p = 1.0 / (params.sigma1 * params.sigma1);
    let q = 1.0 / (params.sigma2 * params.sigma2);
    // inverse covariance entries
    let a = ct * ct * p + st * st * q;
    let b = st * ct * (p - q);
    let d = st * st * p + ct * ct * q;

    let mut grid = Grid2D::zeros(size, size);
    let mut sum = 0.0;
    for i in 0..size {
        let di = i as f64 - c;
        for j in 0..size {
            let dj = j as f64 - c;
            let quad = a * di * di + 2.0 * b * di * dj + d * dj * dj;
            let v = (-0.5 * quad).exp();
            grid.set(i, j, v);
            sum += v;
        }
    }
    for v in grid.values_mut() {
        *v /= sum;
    }
    Ok(DegradationKernel { grid, params })
}

/// Draws `config.count` kernels with parameters sampled i.i.d. uniformly from
/// the configured ranges. The draw order is fixed (sigma1, sigma2, theta per
/// kernel) so a gallery is a pure function of `(config, seed)`.
pub fn generate_gallery(config: GalleryConfig, seed: u64) -> Result<KernelGallery, ParamError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kernels = Vec::with_capacity(config.count);
    for _ in 0..config.count {
        let sigma1 = rng.gen_range(config.sigma_min..config.sigma_max);
        let sigma2 = rng.gen_range(config.sigma_min..config.sigma_max);
        let theta = rng.gen_range(config.theta_min..config.theta_max);
        let params = GaussianParams::new(sigma1, sigma2, theta)?;
        kernels.push(sample_anisotropic_gaussian(params, config.kernel_size)?);
    }
    Ok(KernelGallery {
        kernels,
        seed,
        config,
    })
}

/// The 2D discrete impulse: 1 at the center pixel, 0 elsewhere.
pub fn delta_target(size: usize) -> Result<Grid2D, ParamError> {
    if size % 2 == 0 || size == 0 {
        return Err(ParamError::EvenKernelSize(size));
    }
    let mut g = Grid2D::zeros(size, size);
    g.set(size / 2, size / 2, 1.0);
    Ok(g)
}

const GALLERY_MAGIC: &[u8; 8] = b"RKGALLRY";
const GALLERY_VERSION: u32 = 1;

pub fn save_gallery(gallery: &KernelGallery, path: &Path) -> Result<(), FormatError> {
    let mut w = ByteWriter::new(BufWriter::new(File::create(path)?));
    w.write_bytes(GALLERY_MAGIC)?;
    w.write_u32(GALLERY_VERSION)?;
    w.write_u64(gallery.seed)?;
    w.write_u64(gallery.kernels.len() as u64)?;
    w.write_u32(gallery.config.kernel_size as u32)?;
    w.write_f64(gallery.config.sigma_min)?;
    w.write_f64(gallery.config.sigma_max)?;
    w.write_f64(gallery.config.theta_min)?;
    w.write_f64(gallery.config.theta_max)?;
    for k in &gallery.kernels {
        w.write_f64(k.params.sigma1)?;
        w.write_f64(k.params.sigma2)?;
        w.write_f64(k.params.theta)?;
        for &v in k.grid.values() {
            w.write_f64(v)?;
        }
    }
    w.finish()
}

pub fn load_gallery(path: &Path) -> Result<KernelGallery, FormatError> {
    let mut r = ByteReader::new(BufReader::new(File::open(path)?));
    r.expect_magic(GALLERY_MAGIC, "kernel gallery")?;
    r.expect_version(GALLERY_VERSION)?;
    let seed = r.read_u64("seed")?;
    let count = r.read_u64("kernel count")? as usize;
    let kernel_size = r.read_u32("kernel size")? as usize;
    if kernel_size == 0 || kernel_size % 2 == 0 {
        return Err(r.invalid(format!("kernel size {kernel_size} is not odd")));
    }
    let sigma_min = r.read_f64("sigma_min")?;
    let sigma_max = r.read_f64("sigma_max")?;
    let theta_min = r.read_f64("theta_min")?;
    let theta_max = r.read_f64("theta_max")?;
    let config = GalleryConfig {
        count,
        kernel_size,
        sigma_min,
        sigma_max,
        theta_min,
        theta_max,
    };
    let mut kernels = Vec::with_capacity(count);
    for _ in 0..count {
        let sigma1 = r.read_f64("kernel sigma1")?;
        let sigma2 = r.read_f64("kernel sigma2")?;
        let theta = r.read_f64("kernel theta")?;
        let values = r.read_f64_vec(kernel_size * kernel_size, "kernel values")?;
        let grid = Grid2D::from_values(kernel_size, kernel_size, values)
            .map_err(|e| r.invalid(e.to_string()))?;
        kernels.push(DegradationKernel {
            grid,
            params: GaussianParams {
                sigma1,
                sigma2,
                theta,
            },
        });
    }
    r.expect_eof()?;
    Ok(KernelGallery {
        kernels,
        seed,
        config,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::grid_sum;

    #[test]
    fn isotropic_kernel_ignores_theta() {
        let a = sample_anisotropic_gaussian(
            GaussianParams::new(1.5, 1.5, 0.0).unwrap(),
            9,
        )
        .unwrap();
        let b = sample_anisotropic_gaussian(
            GaussianParams::new(1.5, 1.5, PI / 3.0).unwrap(),
            9,
        )
        .unwrap();
        assert!(a.grid.max_abs_diff(&b.grid) < 1e-12);
    }

    #[test]
    fn kernel_point_symmetric_with_central_max() {
        let k = sample_anisotropic_gaussian(
            GaussianParams::new(2.0, 0.5, 0.7).unwrap(),
            11,
        )
        .unwrap();
        let g = &k.grid;
        let n = 11;
        let center = g.get(n / 2, n / 2);
        for i in 0..n {
            for j in 0..n {
                assert!((g.get(i, j) - g.get(n - 1 - i, n - 1 - j)).abs() < 1e-15);
                assert!(g.get(i, j) <= center + 1e-15);
                assert!(g.get(i, j) >= 0.0);
            }
        }
    }

    #[test]
    fn unit_gaussian_matches_closed_form() {
        let k = sample_anisotropic_gaussian(
            GaussianParams::new(1.0, 1.0, 0.0).unwrap(),
            5,
        )
        .unwrap();
        // direct per-pixel evaluation of exp(-(di^2+dj^2)/2) / normalizer
        let mut expect = [[0.0f64; 5]; 5];
        let mut norm = 0.0;
        for i in 0..5 {
            for j in 0..5 {
                let (di, dj) = (i as f64 - 2.0, j as f64 - 2.0);
                expect[i][j] = (-(di * di + dj * dj) / 2.0).exp();
                norm += expect[i][j];
            }
        }
        for i in 0..5 {
            for j in 0..5 {
                assert!((k.grid.get(i, j) - expect[i][j] / norm).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn rejects_bad_params() {
        assert!(GaussianParams::new(0.0, 1.0, 0.0).is_err());
        assert!(GaussianParams::new(1.0, -2.0, 0.0).is_err());
        assert!(sample_anisotropic_gaussian(
            GaussianParams::new(1.0, 1.0, 0.0).unwrap(),
            4
        )
        .is_err());
    }

    #[test]
    fn empty_gallery() {
        let config = GalleryConfig {
            count: 0,
            ..Default::default()
        };
        let g = generate_gallery(config, 9).unwrap();
        assert!(g.is_empty());
    }

    #[test]
    fn gallery_deterministic() {
        let config = GalleryConfig {
            count: 16,
            ..Default::default()
        };
        let a = generate_gallery(config, 42).unwrap();
        let b = generate_gallery(config, 42).unwrap();
        for (ka, kb) in a.kernels.iter().zip(&b.kernels) {
            assert_eq!(ka.grid.values(), kb.grid.values());
            assert_eq!(ka.params, kb.params);
        }
        let c = generate_gallery(config, 43).unwrap();
        assert_ne!(a.kernels[0].grid.values(), c.kernels[0].grid.values());
    }

    #[test]
    fn gallery_kernels_satisfy_invariants() {
        let config = GalleryConfig {
            count: 64,
            ..Default::default()
        };
        let g = generate_gallery(config, 7).unwrap();
        for k in &g.kernels {
            let s = grid_sum(&k.grid);
            assert!((s - 1.0).abs() <= 1e-9, "sum {s}");
            assert!(k.grid.values().iter().all(|&v| v >= 0.0));
            assert!(k.params.sigma1 >= config.sigma_min && k.params.sigma1 < config.sigma_max);
        }
    }

    #[test]
    fn sampled_sigma_mean_matches_uniform_moment() {
        let config = GalleryConfig::default();
        let g = generate_gallery(config, 11).unwrap();
        let mean: f64 =
            g.kernels.iter().map(|k| k.params.sigma1).sum::<f64>() / g.kernels.len() as f64;
        let expect = (config.sigma_min + config.sigma_max) / 2.0;
        // three standard errors of a U[a,b] sample mean
        let se = (config.sigma_max - config.sigma_min) / (12.0f64).sqrt()
            / (g.kernels.len() as f64).sqrt();
        assert!(
            (mean - expect).abs() < 3.0 * se,
            "mean {mean} expect {expect} se {se}"
        );
    }

    #[test]
    fn delta_target_cases() {
        assert_eq!(delta_target(1).unwrap().values(), &[1.0]);
        let d3 = delta_target(3).unwrap();
        assert_eq!(d3.get(1, 1), 1.0);
        assert_eq!(grid_sum(&d3), 1.0);
        assert_eq!(grid_sum(&delta_target(21).unwrap()), 1.0);
        assert!(delta_target(2).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.rkg");
        let config = GalleryConfig {
            count: 3,
            ..Default::default()
        };
        let g = generate_gallery(config, 5).unwrap();
        save_gallery(&g, &path).unwrap();
        let loaded = load_gallery(&path).unwrap();
        assert_eq!(loaded.seed, g.seed);
        assert_eq!(loaded.config, g.config);
        for (a, b) in g.kernels.iter().zip(&loaded.kernels) {
            assert_eq!(a.grid.values(), b.grid.values());
            assert_eq!(a.params, b.params);
        }
    }

    #[test]
    fn truncated_file_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.rkg");
        let config = GalleryConfig {
            count: 3,
            ..Default::default()
        };
        let g = generate_gallery(config, 5).unwrap();
        save_gallery(&g, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let cut = &bytes[..bytes.len() - 100];
        let path2 = dir.path().join("cut.rkg");
        std::fs::write(&path2, cut).unwrap();
        match load_gallery(&path2) {
            Err(FormatError::Truncated { offset, .. }) => assert!(offset > 0),
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    #[test]
    fn mismatched_count_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.rkg");
        let config = GalleryConfig {
            count: 3,
            ..Default::default()
        };
        let g = generate_gallery(config, 5).unwrap();
        save_gallery(&g, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        // count lives after magic (8) + version (4) + seed (8)
        bytes[20] = 7;
        let path2 = dir.path().join("bad.rkg");
        std::fs::write(&path2, &bytes).unwrap();
        assert!(matches!(
            load_gallery(&path2),
            Err(FormatError::Truncated { .. })
        ));
        // declared fewer kernels than stored -> trailing bytes
        bytes[20] = 2;
        std::fs::write(&path2, &bytes).unwrap();
        assert!(matches!(
            load_gallery(&path2),
            Err(FormatError::TrailingBytes { .. })
        ));
    }

    #[test]
    fn bad_magic_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.rkg");
        std::fs::write(&path, b"NOTAGALL0000000000000000").unwrap();
        assert!(matches!(
            load_gallery(&path),
            Err(FormatError::BadMagic { offset: 0, .. })
        ));
    }
}
