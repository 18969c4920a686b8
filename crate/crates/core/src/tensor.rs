//! Minimal 2D tensor math: grids, channel stacks, convolution variants and
//! their gradients.
//!
//! Everything here is plain `f64` in flat `Vec`s. The layer convolutions
//! (`conv2d_same`, `conv2d_same_backward`) lower to an im2col buffer and a
//! GEMM so the training loop stays fast on a single core; the kernel-space
//! convolution (`conv2d_full`) and the image-space convolution
//! (`conv2d_same_grid`) are direct loops, which is plenty for grids up to
//! 51x51.
//!
//! Convolutions are true convolutions (kernel flipped), not
//! cross-correlations, so `conv2d_same` with a single channel agrees with the
//! central crop of `conv2d_full`.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ShapeError {
    #[error("grid must be non-empty")]
    Empty,
    #[error("{what}: got {len} values, expected {expected}")]
    ValueCount {
        what: &'static str,
        len: usize,
        expected: usize,
    },
    #[error("channel mismatch: input has {input} channels, layer expects {expected}")]
    ChannelMismatch { input: usize, expected: usize },
    #[error("shape mismatch: {0}")]
    Mismatch(String),
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
}

/// A dense 2D grid of `f64` values in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid2D {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl Grid2D {
    pub fn zeros(height: usize, width: usize) -> Self {
        assert!(height > 0 && width > 0, "grid dimensions must be positive");
        Grid2D {
            height,
            width,
            values: vec![0.0; height * width],
        }
    }

    pub fn from_values(height: usize, width: usize, values: Vec<f64>) -> Result<Self, ShapeError> {
        if height == 0 || width == 0 {
            return Err(ShapeError::Empty);
        }
        if values.len() != height * width {
            return Err(ShapeError::ValueCount {
                what: "Grid2D",
                len: values.len(),
                expected: height * width,
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(ShapeError::NonFinite(i));
        }
        Ok(Grid2D {
            height,
            width,
            values,
        })
    }

    /// Convenience constructor for literal grids in tests and examples.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.len());
        assert!(rows.iter().all(|r| r.len() == width), "ragged rows");
        let values = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Grid2D::from_values(height, width, values).expect("literal grid")
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(value.is_finite());
        self.values[row * self.width + col] = value;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn scaled(&self, factor: f64) -> Grid2D {
        Grid2D {
            height: self.height,
            width: self.width,
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &Grid2D) -> f64 {
        assert_eq!((self.height, self.width), (other.height, other.width));
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Central crop to `out_h` x `out_w`; both must have the same parity as
    /// the source dims so the crop is symmetric.
    pub fn central_crop(&self, out_h: usize, out_w: usize) -> Grid2D {
        assert!(out_h <= self.height && out_w <= self.width);
        let top = (self.height - out_h) / 2;
        let left = (self.width - out_w) / 2;
        let mut out = Grid2D::zeros(out_h, out_w);
        for r in 0..out_h {
            let src = &self.values[(top + r) * self.width + left..][..out_w];
            out.values[r * out_w..(r + 1) * out_w].copy_from_slice(src);
        }
        out
    }
}

/// A stack of equally sized 2D planes, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStack {
    channels: usize,
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl ChannelStack {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        assert!(channels > 0 && height > 0 && width > 0);
        ChannelStack {
            channels,
            height,
            width,
            values: vec![0.0; channels * height * width],
        }
    }

    pub fn from_values(
        channels: usize,
        height: usize,
        width: usize,
        values: Vec<f64>,
    ) -> Result<Self, ShapeError> {
        if values.len() != channels * height * width {
            return Err(ShapeError::ValueCount {
                what: "ChannelStack",
                len: values.len(),
                expected: channels * height * width,
            });
        }
        Ok(ChannelStack {
            channels,
            height,
            width,
            values,
        })
    }

    pub fn from_grid(grid: &Grid2D) -> Self {
        ChannelStack {
            channels: 1,
            height: grid.height(),
            width: grid.width(),
            values: grid.values().to_vec(),
        }
    }

    /// Extracts a single-channel stack back into a grid.
    pub fn into_grid(self) -> Grid2D {
        assert_eq!(self.channels, 1, "into_grid requires a 1-channel stack");
        Grid2D {
            height: self.height,
            width: self.width,
            values: self.values,
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

    pub fn plane(&self, channel: usize) -> &[f64] {
        let hw = self.height * self.width;
        &self.values[channel * hw..(channel + 1) * hw]
    }

    pub fn plane_mut(&mut self, channel: usize) -> &mut [f64] {
        let hw = self.height * self.width;
        &mut self.values[channel * hw..(channel + 1) * hw]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}

/// Weights of one convolution layer: `out_channels * in_channels` kernels of
/// fixed size 3x3, out-major layout, no bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayerWeights {
    out_channels: usize,
    in_channels: usize,
    weights: Vec<f64>,
}

pub const KERNEL_SIDE: usize = 3;
const TAPS: usize = KERNEL_SIDE * KERNEL_SIDE;

impl ConvLayerWeights {
    pub fn zeros(out_channels: usize, in_channels: usize) -> Self {
        assert!(out_channels > 0 && in_channels > 0);
        ConvLayerWeights {
            out_channels,
            in_channels,
            weights: vec![0.0; out_channels * in_channels * TAPS],
        }
    }

    pub fn from_values(
        out_channels: usize,
        in_channels: usize,
        weights: Vec<f64>,
    ) -> Result<Self, ShapeError> {
        if weights.len() != out_channels * in_channels * TAPS {
            return Err(ShapeError::ValueCount {
                what: "ConvLayerWeights",
                len: weights.len(),
                expected: out_channels * in_channels * TAPS,
            });
        }
        Ok(ConvLayerWeights {
            out_channels,
            in_channels,
            weights,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    #[inline]
    pub fn get(&self, out_c: usize, in_c: usize, ky: usize, kx: usize) -> f64 {
        self.weights[((out_c * self.in_channels + in_c) * KERNEL_SIDE + ky) * KERNEL_SIDE + kx]
    }

    #[inline]
    pub fn set(&mut self, out_c: usize, in_c: usize, ky: usize, kx: usize, value: f64) {
        self.weights[((out_c * self.in_channels + in_c) * KERNEL_SIDE + ky) * KERNEL_SIDE + kx] =
            value;
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.weights
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }
}

/// Boundary handling for grid-level same convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    Zero,
    Replicate,
}

/// Full linear convolution of two grids; output is
/// `(Ha+Hb-1) x (Wa+Wb-1)` with `out[i,j] = sum a[m,n] * b[i-m, j-n]`.
pub fn conv2d_full(a: &Grid2D, b: &Grid2D) -> Grid2D {
    let (ha, wa) = (a.height, a.width);
    let (hb, wb) = (b.height, b.width);
    let (ho, wo) = (ha + hb - 1, wa + wb - 1);
    let mut out = vec![0.0; ho * wo];
    for m in 0..ha {
        for p in 0..hb {
            let row = (m + p) * wo;
            for n in 0..wa {
                let av = a.values[m * wa + n];
                if av == 0.0 {
                    continue;
                }
                let brow = &b.values[p * wb..(p + 1) * wb];
                let dst = &mut out[row + n..row + n + wb];
                for (d, bv) in dst.iter_mut().zip(brow) {
                    *d += av * bv;
                }
            }
        }
    }
    Grid2D {
        height: ho,
        width: wo,
        values: out,
    }
}

/// Sum of all entries; equals the DC Fourier coefficient of the grid.
pub fn grid_sum(g: &Grid2D) -> f64 {
    g.values.iter().sum()
}

/// Same-size convolution of a grid with an odd-sized kernel under the given
/// boundary handling. Used for collapsed-kernel inference and the image
/// degradation simulator.
pub fn conv2d_same_grid(a: &Grid2D, kernel: &Grid2D, padding: Padding) -> Grid2D {
    assert!(
        kernel.height % 2 == 1 && kernel.width % 2 == 1,
        "kernel dims must be odd"
    );
    let (h, w) = (a.height as isize, a.width as isize);
    let (kh, kw) = (kernel.height as isize, kernel.width as isize);
    let (cy, cx) = (kh / 2, kw / 2);
    let mut out = Grid2D::zeros(a.height, a.width);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for ky in 0..kh {
                let sy = y + cy - ky;
                let sy = match padding {
                    Padding::Zero => {
                        if sy < 0 || sy >= h {
                            continue;
                        }
                        sy
                    }
                    Padding::Replicate => sy.clamp(0, h - 1),
                };
                let arow = &a.values[(sy as usize) * a.width..][..a.width];
                let krow = &kernel.values[(ky as usize) * kernel.width..][..kernel.width];
                for kx in 0..kw {
                    let sx = x + cx - kx;
                    let sx = match padding {
                        Padding::Zero => {
                            if sx < 0 || sx >= w {
                                continue;
                            }
                            sx
                        }
                        Padding::Replicate => sx.clamp(0, w - 1),
                    };
                    acc += arow[sx as usize] * krow[kx as usize];
                }
            }
            out.values[(y as usize) * a.width + x as usize] = acc;
        }
    }
    out
}

/// Batched activation storage used by the convolution kernels. Planes are laid
/// out `(channel, sample, row, col)` so each GEMM operand is contiguous.
#[derive(Debug, Clone)]
pub(crate) struct BatchStack {
    pub n: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl BatchStack {
    pub(crate) fn zeros(n: usize, channels: usize, height: usize, width: usize) -> Self {
        BatchStack {
            n,
            channels,
            height,
            width,
            values: vec![0.0; n * channels * height * width],
        }
    }

    pub(crate) fn from_grids(grids: &[&Grid2D]) -> Self {
        let n = grids.len();
        assert!(n > 0);
        let (h, w) = (grids[0].height, grids[0].width);
        let mut out = BatchStack::zeros(n, 1, h, w);
        for (s, g) in grids.iter().enumerate() {
            assert_eq!((g.height, g.width), (h, w), "mixed grid sizes in batch");
            out.values[s * h * w..(s + 1) * h * w].copy_from_slice(&g.values);
        }
        out
    }

    /// Plane of `channel` for `sample`.
    #[inline]
    pub(crate) fn plane(&self, channel: usize, sample: usize) -> &[f64] {
        let hw = self.height * self.width;
        let base = (channel * self.n + sample) * hw;
        &self.values[base..base + hw]
    }

    #[inline]
    pub(crate) fn plane_mut(&mut self, channel: usize, sample: usize) -> &mut [f64] {
        let hw = self.height * self.width;
        let base = (channel * self.n + sample) * hw;
        &mut self.values[base..base + hw]
    }
}

/// Copy `src` shifted by `(dy, dx)` into `dst`, zero-filling outside:
/// `dst[y,x] = src[y+dy, x+dx]` where defined.
fn copy_shifted(dst: &mut [f64], src: &[f64], h: usize, w: usize, dy: isize, dx: isize) {
    dst.fill(0.0);
    let (h, w) = (h as isize, w as isize);
    for y in 0..h {
        let sy = y + dy;
        if sy < 0 || sy >= h {
            continue;
        }
        let (x0, x1) = ((-dx).max(0), (w - dx).min(w));
        if x0 >= x1 {
            continue;
        }
        let drow = (y * w + x0) as usize;
        let srow = (sy * w + x0 + dx) as usize;
        let len = (x1 - x0) as usize;
        dst[drow..drow + len].copy_from_slice(&src[srow..srow + len]);
    }
}

/// Adjoint of `copy_shifted`: `dst[y+dy, x+dx] += src[y,x]` where defined.
fn add_shifted(dst: &mut [f64], src: &[f64], h: usize, w: usize, dy: isize, dx: isize) {
    let (h, w) = (h as isize, w as isize);
    for y in 0..h {
        let sy = y + dy;
        if sy < 0 || sy >= h {
            continue;
        }
        let (x0, x1) = ((-dx).max(0), (w - dx).min(w));
        if x0 >= x1 {
            continue;
        }
        let srow = (y * w + x0) as usize;
        let drow = (sy * w + x0 + dx) as usize;
        let len = (x1 - x0) as usize;
        for i in 0..len {
            dst[drow + i] += src[srow + i];
        }
    }
}

/// Builds the im2col buffer, column-major: column `(i, ky, kx)` holds, for
/// each (sample, pixel) row, the input value the true convolution multiplies
/// with weight `(o, i, ky, kx)`.
fn im2col(input: &BatchStack) -> Vec<f64> {
    let (n, c, h, w) = (input.n, input.channels, input.height, input.width);
    let hw = h * w;
    let rows = n * hw;
    let mut buf = vec![0.0; c * TAPS * rows];
    for i in 0..c {
        for ky in 0..KERNEL_SIDE {
            for kx in 0..KERNEL_SIDE {
                let dy = 1 - ky as isize;
                let dx = 1 - kx as isize;
                let col = i * TAPS + ky * KERNEL_SIDE + kx;
                let dst = &mut buf[col * rows..(col + 1) * rows];
                for s in 0..n {
                    copy_shifted(&mut dst[s * hw..(s + 1) * hw], input.plane(i, s), h, w, dy, dx);
                }
            }
        }
    }
    buf
}

/// C(m x n) = A(m x k) * B(k x n) with explicit strides; thin safe wrapper
/// over the runtime-dispatched GEMM kernel.
#[allow(clippy::too_many_arguments)]
fn dgemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    c: &mut [f64],
    rsc: isize,
    csc: isize,
) {
    debug_assert!(m > 0 && k > 0 && n > 0);
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            0.0,
            c.as_mut_ptr(),
            rsc,
            csc,
        );
    }
}

pub(crate) fn conv_same_batch(input: &BatchStack, w: &ConvLayerWeights) -> BatchStack {
    assert_eq!(
        input.channels, w.in_channels,
        "batch/layer channel mismatch"
    );
    let rows = input.n * input.height * input.width;
    let k = w.in_channels * TAPS;
    let cols = im2col(input);
    let mut out = BatchStack::zeros(input.n, w.out_channels, input.height, input.width);
    // out(o, row) = W(o, :) . cols(:, row)
    dgemm(
        w.out_channels,
        k,
        rows,
        &w.weights,
        k as isize,
        1,
        &cols,
        rows as isize,
        1,
        &mut out.values,
        rows as isize,
        1,
    );
    out
}

pub(crate) fn conv_same_batch_backward(
    input: &BatchStack,
    w: &ConvLayerWeights,
    grad_out: &BatchStack,
) -> (BatchStack, ConvLayerWeights) {
    assert_eq!(input.channels, w.in_channels);
    assert_eq!(grad_out.channels, w.out_channels);
    assert_eq!(
        (grad_out.n, grad_out.height, grad_out.width),
        (input.n, input.height, input.width),
        "grad_out shape mismatch"
    );
    let (n, h, wd) = (input.n, input.height, input.width);
    let hw = h * wd;
    let rows = n * hw;
    let k = w.in_channels * TAPS;

    // grad_w(o, col) = sum_rows grad_out(o, row) * cols(row, col)
    let cols = im2col(input);
    let mut grad_w = ConvLayerWeights::zeros(w.out_channels, w.in_channels);
    dgemm(
        w.out_channels,
        rows,
        k,
        &grad_out.values,
        rows as isize,
        1,
        &cols,
        1,
        rows as isize,
        &mut grad_w.weights,
        k as isize,
        1,
    );

    // grad_cols(col, row) = W(:, col) . grad_out(:, row), then scatter back.
    let mut grad_cols = vec![0.0; k * rows];
    dgemm(
        k,
        w.out_channels,
        rows,
        &w.weights,
        1,
        k as isize,
        &grad_out.values,
        rows as isize,
        1,
        &mut grad_cols,
        rows as isize,
        1,
    );
    let mut grad_in = BatchStack::zeros(n, w.in_channels, h, wd);
    for i in 0..w.in_channels {
        for ky in 0..KERNEL_SIDE {
            for kx in 0..KERNEL_SIDE {
                let dy = 1 - ky as isize;
                let dx = 1 - kx as isize;
                let col = i * TAPS + ky * KERNEL_SIDE + kx;
                let src = &grad_cols[col * rows..(col + 1) * rows];
                for s in 0..n {
                    add_shifted(grad_in.plane_mut(i, s), &src[s * hw..(s + 1) * hw], h, wd, dy, dx);
                }
            }
        }
    }
    (grad_in, grad_w)
}

/// Same-size multi-channel convolution with one pixel of zero padding:
/// `out[o,y,x] = sum_i sum_{ky,kx} in[i, y+1-ky, x+1-kx] * w[o,i,ky,kx]`.
pub fn conv2d_same(input: &ChannelStack, w: &ConvLayerWeights) -> Result<ChannelStack, ShapeError> {
    if input.channels != w.in_channels {
        return Err(ShapeError::ChannelMismatch {
            input: input.channels,
            expected: w.in_channels,
        });
    }
    let batch = BatchStack {
        n: 1,
        channels: input.channels,
        height: input.height,
        width: input.width,
        values: input.values.clone(),
    };
    let out = conv_same_batch(&batch, w);
    Ok(ChannelStack {
        channels: out.channels,
        height: out.height,
        width: out.width,
        values: out.values,
    })
}

/// Gradients of `conv2d_same` given the gradient of a scalar loss with
/// respect to its output.
pub fn conv2d_same_backward(
    input: &ChannelStack,
    w: &ConvLayerWeights,
    grad_out: &ChannelStack,
) -> Result<(ChannelStack, ConvLayerWeights), ShapeError> {
    if input.channels != w.in_channels {
        return Err(ShapeError::ChannelMismatch {
            input: input.channels,
            expected: w.in_channels,
        });
    }
    if grad_out.channels != w.out_channels
        || grad_out.height != input.height
        || grad_out.width != input.width
    {
        return Err(ShapeError::Mismatch(format!(
            "grad_out is {}x{}x{}, expected {}x{}x{}",
            grad_out.channels,
            grad_out.height,
            grad_out.width,
            w.out_channels,
            input.height,
            input.width
        )));
    }
    let in_batch = BatchStack {
        n: 1,
        channels: input.channels,
        height: input.height,
        width: input.width,
        values: input.values.clone(),
    };
    let go_batch = BatchStack {
        n: 1,
        channels: grad_out.channels,
        height: grad_out.height,
        width: grad_out.width,
        values: grad_out.values.clone(),
    };
    let (gi, gw) = conv_same_batch_backward(&in_batch, w, &go_batch);
    Ok((
        ChannelStack {
            channels: gi.channels,
            height: gi.height,
            width: gi.width,
            values: gi.values,
        },
        gw,
    ))
}


#[cfg(test)]
mod bench_probe {
    use super::*;
    use std::time::Instant;

    #[test]
    #[ignore]
    fn conv_throughput() {
        let w = ConvLayerWeights::from_values(32, 32, vec![0.01; 32 * 32 * 9]).unwrap();
        let batch = BatchStack::zeros(32, 32, 21, 21);
        let go = BatchStack::zeros(32, 32, 21, 21);
        let t = Instant::now();
        let iters = 50;
        for _ in 0..iters {
            let out = conv_same_batch(&batch, &w);
            std::hint::black_box(&out);
            let (gi, gw) = conv_same_batch_backward(&batch, &w, &go);
            std::hint::black_box((&gi, &gw));
        }
        let el = t.elapsed().as_secs_f64();
        let madds = (32.0 * 441.0 * 9.0 * 32.0 * 32.0) * 3.0 * iters as f64;
        println!(
            "fwd+bwd 32x32 layer batch32: {:.3} ms/iter, {:.2} Gmadd/s",
            el / iters as f64 * 1e3,
            madds / el / 1e9
        );
    }
}
