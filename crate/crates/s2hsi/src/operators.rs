//! Linear operators of the data-fitting model: the spatial blur B, the
//! spectral response D, their adjoints, and the resamplers used by the
//! degradation chain. All blurs use circular (periodic) boundaries so B is
//! exactly circulant and its adjoint is the flipped-kernel convolution.

use ndarray::Array2;

use crate::cube::BandPixelMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BlurKernel {
    pub size: usize,
    pub sigma: f64,
    /// size x size, nonnegative, unit sum.
    pub weights: Array2<f64>,
}

/// Sampled isotropic Gaussian, normalized to unit sum.
pub fn build_gaussian_kernel(size: usize, sigma: f64) -> Result<BlurKernel> {
    if size % 2 == 0 || size == 0 {
        return Err(Error::InvalidArgument(format!(
            "kernel size must be odd and positive, got {size}"
        )));
    }
    if sigma <= 0.0 {
        return Err(Error::InvalidArgument("sigma must be positive".into()));
    }
    let half = (size / 2) as isize;
    let mut weights = Array2::zeros((size, size));
    let mut sum = 0.0;
    for r in 0..size {
        for c in 0..size {
            let dy = r as isize - half;
            let dx = c as isize - half;
            let v = (-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp();
            weights[[r, c]] = v;
            sum += v;
        }
    }
    weights.mapv_inplace(|v| v / sum);
    Ok(BlurKernel {
        size,
        sigma,
        weights,
    })
}

/// The solver-side blur B (kernel size 7, sigma 0.7).
pub fn solver_blur_kernel() -> BlurKernel {
    build_gaussian_kernel(7, 0.7).expect("valid fixed kernel")
}

fn convolve_circular(img: &Array2<f64>, weights: &Array2<f64>) -> Array2<f64> {
    let (rows, cols) = img.dim();
    let size = weights.nrows();
    let half = (size / 2) as isize;
    let mut out = Array2::zeros((rows, cols));
    for r in 0..rows as isize {
        for c in 0..cols as isize {
            let mut acc = 0.0;
            for kr in 0..size as isize {
                for kc in 0..size as isize {
                    let sr = (r + kr - half).rem_euclid(rows as isize) as usize;
                    let sc = (c + kc - half).rem_euclid(cols as isize) as usize;
                    acc += weights[[kr as usize, kc as usize]] * img[[sr, sc]];
                }
            }
            out[[r as usize, c as usize]] = acc;
        }
    }
    out
}

fn flipped(weights: &Array2<f64>) -> Array2<f64> {
    let (rows, cols) = weights.dim();
    Array2::from_shape_fn((rows, cols), |(r, c)| {
        weights[[rows - 1 - r, cols - 1 - c]]
    })
}

/// Per-band circular convolution; the right-multiplication by B.
pub fn apply_blur(x: &BandPixelMatrix, kernel: &BlurKernel) -> Result<BandPixelMatrix> {
    if x.pixels() != x.rows * x.cols {
        return Err(Error::ShapeMismatch("band-pixel matrix geometry".into()));
    }
    let mut out = x.clone();
    for b in 0..x.bands() {
        let img = x.band_image(b);
        out.set_band_image(b, &convolve_circular(&img, &kernel.weights));
    }
    Ok(out)
}

/// Exact adjoint of `apply_blur` under the Frobenius inner product.
/// Equals `apply_blur` for symmetric kernels.
pub fn apply_blur_adjoint(y: &BandPixelMatrix, kernel: &BlurKernel) -> Result<BandPixelMatrix> {
    let flipped = BlurKernel {
        size: kernel.size,
        sigma: kernel.sigma,
        weights: flipped(&kernel.weights),
    };
    apply_blur(y, &flipped)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SrfMatrix {
    /// msi_bands x hsi_bands, nonnegative, row-stochastic, contiguous support.
    pub values: Array2<f64>,
}

impl SrfMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        for (i, row) in values.rows().into_iter().enumerate() {
            if row.iter().any(|&v| v < 0.0) {
                return Err(Error::Data(format!("SRF row {i} has negative weight")));
            }
            let sum: f64 = row.sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::Data(format!("SRF row {i} sums to {sum}, not 1")));
            }
            let support: Vec<usize> = row
                .iter()
                .enumerate()
                .filter(|(_, &v)| v > 0.0)
                .map(|(j, _)| j)
                .collect();
            if support.is_empty() {
                return Err(Error::Data(format!("SRF row {i} has empty support")));
            }
            if support[support.len() - 1] - support[0] + 1 != support.len() {
                return Err(Error::Data(format!("SRF row {i} support not contiguous")));
            }
        }
        Ok(SrfMatrix { values })
    }

    pub fn msi_bands(&self) -> usize {
        self.values.nrows()
    }

    pub fn hsi_bands(&self) -> usize {
        self.values.ncols()
    }
}

/// D * A.
pub fn apply_srf(d: &SrfMatrix, a: &BandPixelMatrix) -> Result<BandPixelMatrix> {
    if d.hsi_bands() != a.bands() {
        return Err(Error::ShapeMismatch(format!(
            "SRF expects {} bands, cube has {}",
            d.hsi_bands(),
            a.bands()
        )));
    }
    Ok(BandPixelMatrix {
        values: d.values.dot(&a.values),
        rows: a.rows,
        cols: a.cols,
    })
}

/// D^T * Y.
pub fn apply_srf_adjoint(d: &SrfMatrix, y: &BandPixelMatrix) -> Result<BandPixelMatrix> {
    if y.bands() != d.msi_bands() {
        return Err(Error::ShapeMismatch(format!(
            "SRF adjoint expects {} rows, got {}",
            d.msi_bands(),
            y.bands()
        )));
    }
    Ok(BandPixelMatrix {
        values: d.values.t().dot(&y.values),
        rows: y.rows,
        cols: y.cols,
    })
}

/// Anti-aliasing sigma for a decimation factor: half-amplitude at the new
/// Nyquist frequency.
pub fn degradation_sigma(factor: usize) -> f64 {
    0.4247 * factor as f64
}

fn degradation_kernel(factor: usize) -> Result<Option<BlurKernel>> {
    let sigma = degradation_sigma(factor);
    let side = 2 * (2.0 * sigma).ceil() as usize + 1;
    if side == 1 {
        return Ok(None);
    }
    Ok(Some(build_gaussian_kernel(side, sigma)?))
}

/// Circular Gaussian blur then decimation at block offset 0.
pub fn circular_blur_downsample(band: &Array2<f64>, factor: usize) -> Result<Array2<f64>> {
    if factor == 0 {
        return Err(Error::InvalidArgument("factor must be >= 1".into()));
    }
    let (rows, cols) = band.dim();
    if rows % factor != 0 || cols % factor != 0 {
        return Err(Error::InvalidArgument(format!(
            "dimensions {rows}x{cols} not divisible by factor {factor}"
        )));
    }
    let blurred = match degradation_kernel(factor)? {
        Some(kernel) => convolve_circular(band, &kernel.weights),
        None => band.clone(),
    };
    Ok(Array2::from_shape_fn(
        (rows / factor, cols / factor),
        |(r, c)| blurred[[r * factor, c * factor]],
    ))
}

/// Each source pixel becomes a factor x factor constant block.
pub fn replicate_upsample(band: &Array2<f64>, factor: usize) -> Result<Array2<f64>> {
    if factor == 0 {
        return Err(Error::InvalidArgument("factor must be >= 1".into()));
    }
    let (rows, cols) = band.dim();
    Ok(Array2::from_shape_fn(
        (rows * factor, cols * factor),
        |(r, c)| band[[r / factor, c / factor]],
    ))
}

// Catmull-Rom cubic weight (a = -0.5).
fn cubic_weight(t: f64) -> f64 {
    let a = -0.5;
    let t = t.abs();
    if t < 1.0 {
        (a + 2.0) * t * t * t - (a + 3.0) * t * t + 1.0
    } else if t < 2.0 {
        a * t * t * t - 5.0 * a * t * t + 8.0 * a * t - 4.0 * a
    } else {
        0.0
    }
}

/// Catmull-Rom bicubic resize with half-pixel-center alignment and
/// replicate boundary.
pub fn bicubic_resize(band: &Array2<f64>, out_rows: usize, out_cols: usize) -> Result<Array2<f64>> {
    let (rows, cols) = band.dim();
    if out_rows == 0 || out_cols == 0 || rows == 0 || cols == 0 {
        return Err(Error::InvalidArgument("degenerate image size".into()));
    }
    let row_scale = rows as f64 / out_rows as f64;
    let col_scale = cols as f64 / out_cols as f64;
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut out = Array2::zeros((out_rows, out_cols));
    for r in 0..out_rows {
        let src_r = (r as f64 + 0.5) * row_scale - 0.5;
        let r0 = src_r.floor() as isize;
        let fr = src_r - r0 as f64;
        for c in 0..out_cols {
            let src_c = (c as f64 + 0.5) * col_scale - 0.5;
            let c0 = src_c.floor() as isize;
            let fc = src_c - c0 as f64;
            let mut acc = 0.0;
            for i in -1..=2isize {
                let wr = cubic_weight(i as f64 - fr);
                if wr == 0.0 {
                    continue;
                }
                let sr = clamp(r0 + i, rows);
                for j in -1..=2isize {
                    let wc = cubic_weight(j as f64 - fc);
                    if wc == 0.0 {
                        continue;
                    }
                    acc += wr * wc * band[[sr, clamp(c0 + j, cols)]];
                }
            }
            out[[r, c]] = acc;
        }
    }
    Ok(out)
}
