//! Planar floating-point images in `[0, 1]` and 8-bit PNG conversion.

use std::path::Path;

use thiserror::Error;

use crate::tensor::Grid2D;

#[derive(Debug, Error)]
pub enum ImageIoError {
    #[error("failed to read {path}: {source}")]
    Read {
        path: String,
        source: image::ImageError,
    },
    #[error("failed to write {path}: {source}")]
    Write {
        path: String,
        source: image::ImageError,
    },
    #[error("unsupported channel count {0} (expected 1 or 3)")]
    Channels(usize),
}

/// H x W x C image stored as channel-major planes of `f64`. Values are kept
/// unclamped through intermediate processing; only final outputs are clamped
/// back to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    channels: usize,
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl ImageTensor {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        assert!(channels == 1 || channels == 3, "1 or 3 channels");
        assert!(height > 0 && width > 0);
        ImageTensor {
            channels,
            height,
            width,
            values: vec![0.0; channels * height * width],
        }
    }

    pub fn from_planes(planes: Vec<Grid2D>) -> Self {
        assert!(planes.len() == 1 || planes.len() == 3);
        let (h, w) = (planes[0].height(), planes[0].width());
        let mut values = Vec::with_capacity(planes.len() * h * w);
        for p in &planes {
            assert_eq!((p.height(), p.width()), (h, w), "mixed plane sizes");
            values.extend_from_slice(p.values());
        }
        ImageTensor {
            channels: planes.len(),
            height: h,
            width: w,
            values,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let hw = self.height * self.width;
        &self.values[c * hw..(c + 1) * hw]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        let hw = self.height * self.width;
        &mut self.values[c * hw..(c + 1) * hw]
    }

    pub fn plane_grid(&self, c: usize) -> Grid2D {
        Grid2D::from_values(self.height, self.width, self.plane(c).to_vec())
            .expect("plane is a valid grid")
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.values[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        self.values[(c * self.height + y) * self.width + x] = v;
    }

    pub fn clamp_unit(&mut self) {
        for v in &mut self.values {
            *v = v.clamp(0.0, 1.0);
        }
    }

    /// Top-left crop.
    pub fn crop(&self, height: usize, width: usize) -> ImageTensor {
        assert!(height <= self.height && width <= self.width);
        let mut out = ImageTensor {
            channels: self.channels,
            height,
            width,
            values: vec![0.0; self.channels * height * width],
        };
        for c in 0..self.channels {
            for y in 0..height {
                let src = &self.plane(c)[y * self.width..y * self.width + width];
                out.plane_mut(c)[y * width..(y + 1) * width].copy_from_slice(src);
            }
        }
        out
    }

    /// BT.601 luminance plane (identity for single-channel images).
    pub fn luma(&self) -> Grid2D {
        if self.channels == 1 {
            return self.plane_grid(0);
        }
        let hw = self.height * self.width;
        let (r, g, b) = (self.plane(0), self.plane(1), self.plane(2));
        let mut values = Vec::with_capacity(hw);
        for i in 0..hw {
            values.push(0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i]);
        }
        Grid2D::from_values(self.height, self.width, values).expect("finite luma")
    }

    pub fn max_abs_diff(&self, other: &ImageTensor) -> f64 {
        assert_eq!(
            (self.channels, self.height, self.width),
            (other.channels, other.height, other.width)
        );
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// `v/255` on load; `round(v*255)` (half away from zero) on save.
pub fn load_png(path: &Path) -> Result<ImageTensor, ImageIoError> {
    let dynimg = image::open(path).map_err(|source| ImageIoError::Read {
        path: path.display().to_string(),
        source,
    })?;
    Ok(match dynimg {
        image::DynamicImage::ImageLuma8(gray) => {
            let (w, h) = (gray.width() as usize, gray.height() as usize);
            let mut out = ImageTensor::zeros(1, h, w);
            for (i, p) in gray.pixels().enumerate() {
                out.values[i] = p.0[0] as f64 / 255.0;
            }
            out
        }
        other => {
            let rgb = other.to_rgb8();
            let (w, h) = (rgb.width() as usize, rgb.height() as usize);
            let mut out = ImageTensor::zeros(3, h, w);
            for (i, p) in rgb.pixels().enumerate() {
                for c in 0..3 {
                    out.values[c * h * w + i] = p.0[c] as f64 / 255.0;
                }
            }
            out
        }
    })
}

pub fn save_png(img: &ImageTensor, path: &Path) -> Result<(), ImageIoError> {
    let (h, w) = (img.height as u32, img.width as u32);
    let to_byte = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    let result = match img.channels {
        1 => {
            let bytes: Vec<u8> = img.plane(0).iter().map(|&v| to_byte(v)).collect();
            image::GrayImage::from_raw(w, h, bytes)
                .expect("sized buffer")
                .save(path)
        }
        3 => {
            let hw = img.height * img.width;
            let mut bytes = Vec::with_capacity(hw * 3);
            for i in 0..hw {
                for c in 0..3 {
                    bytes.push(to_byte(img.values[c * hw + i]));
                }
            }
            image::RgbImage::from_raw(w, h, bytes)
                .expect("sized buffer")
                .save(path)
        }
        n => return Err(ImageIoError::Channels(n)),
    };
    result.map_err(|source| ImageIoError::Write {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip_is_exact_on_quantized_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.png");
        let mut img = ImageTensor::zeros(3, 5, 7);
        for (i, v) in img.values.iter_mut().enumerate() {
            *v = ((i * 37) % 256) as f64 / 255.0;
        }
        save_png(&img, &path).unwrap();
        let back = load_png(&path).unwrap();
        assert_eq!(back.channels(), 3);
        assert!(img.max_abs_diff(&back) < 1e-12);
    }

    #[test]
    fn save_rounds_half_up() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.png");
        let mut img = ImageTensor::zeros(1, 1, 2);
        img.set(0, 0, 0, 0.5 / 255.0); // exactly half a quantum
        img.set(0, 0, 1, 1.2); // clamped to 1
        save_png(&img, &path).unwrap();
        let back = load_png(&path).unwrap();
        assert_eq!(back.get(0, 0, 0), 1.0 / 255.0);
        assert_eq!(back.get(0, 0, 1), 1.0);
    }

    #[test]
    fn luma_weights() {
        let mut img = ImageTensor::zeros(3, 1, 1);
        img.set(0, 0, 0, 1.0);
        img.set(1, 0, 0, 0.5);
        img.set(2, 0, 0, 0.25);
        let y = img.luma();
        assert!((y.get(0, 0) - (0.299 + 0.587 * 0.5 + 0.114 * 0.25)).abs() < 1e-15);
    }

    #[test]
    fn missing_file_is_read_error() {
        assert!(matches!(
            load_png(Path::new("/nonexistent/nope.png")),
            Err(ImageIoError::Read { .. })
        ));
    }
}
