//! Quantitative evaluation: PSNR, SAM, SSIM, RMSE, the spectrally adaptive
//! l1 measure, eigenvalue-based MDL model-order selection, and abundance
//! cross-correlation.

use ndarray::Array2;

use crate::cube::{BandPixelMatrix, HsiCube};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct MetricReport {
    pub psnr_db: f64,
    pub sam_deg: f64,
    pub ssim: f64,
    pub rmse: f64,
    pub l_g: f64,
    pub per_band_psnr: Vec<f64>,
    pub per_band_ssim: Vec<f64>,
}

fn check_shapes(reference: &HsiCube, estimate: &HsiCube) -> Result<()> {
    if reference.bands != estimate.bands
        || reference.rows != estimate.rows
        || reference.cols != estimate.cols
    {
        return Err(Error::ShapeMismatch(format!(
            "reference {}x{}x{} vs estimate {}x{}x{}",
            reference.bands,
            reference.rows,
            reference.cols,
            estimate.bands,
            estimate.rows,
            estimate.cols
        )));
    }
    Ok(())
}

/// Per-band PSNR against peak 1.0, averaged over bands. A zero-MSE band
/// yields the +inf sentinel.
pub fn psnr(reference: &HsiCube, estimate: &HsiCube) -> Result<f64> {
    Ok(mean(&psnr_per_band(reference, estimate)?))
}

pub fn psnr_per_band(reference: &HsiCube, estimate: &HsiCube) -> Result<Vec<f64>> {
    check_shapes(reference, estimate)?;
    let npix = reference.pixels();
    let mut out = Vec::with_capacity(reference.bands);
    for b in 0..reference.bands {
        let start = b * npix;
        let mse: f64 = (0..npix)
            .map(|j| {
                let d = reference.data[start + j] - estimate.data[start + j];
                d * d
            })
            .sum::<f64>()
            / npix as f64;
        out.push(if mse == 0.0 {
            f64::INFINITY
        } else {
            10.0 * (1.0 / mse).log10()
        });
    }
    Ok(out)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Per-pixel spectral angle in radians; None for a zero-norm spectrum in
/// either cube.
fn pixel_angles(reference: &HsiCube, estimate: &HsiCube) -> Vec<Option<f64>> {
    let npix = reference.pixels();
    let bands = reference.bands;
    (0..npix)
        .map(|j| {
            let mut dot = 0.0;
            let mut na = 0.0;
            let mut nb = 0.0;
            for b in 0..bands {
                let x = reference.data[b * npix + j];
                let y = estimate.data[b * npix + j];
                dot += x * y;
                na += x * x;
                nb += y * y;
            }
            if na == 0.0 || nb == 0.0 {
                None
            } else {
                Some((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0).acos())
            }
        })
        .collect()
}

/// Mean spectral angle in degrees over pixels with nonzero spectra.
pub fn sam(reference: &HsiCube, estimate: &HsiCube) -> Result<f64> {
    check_shapes(reference, estimate)?;
    let angles = pixel_angles(reference, estimate);
    let valid: Vec<f64> = angles.into_iter().flatten().collect();
    if valid.is_empty() {
        return Err(Error::Data("no pixel has a nonzero spectrum in both cubes".into()));
    }
    Ok(mean(&valid).to_degrees())
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

fn ssim_window_weights() -> Array2<f64> {
    let half = (SSIM_WINDOW / 2) as isize;
    let mut w = Array2::zeros((SSIM_WINDOW, SSIM_WINDOW));
    let mut sum = 0.0;
    for r in 0..SSIM_WINDOW {
        for c in 0..SSIM_WINDOW {
            let dy = r as isize - half;
            let dx = c as isize - half;
            let v = (-((dx * dx + dy * dy) as f64) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
            w[[r, c]] = v;
            sum += v;
        }
    }
    w.mapv_inplace(|v| v / sum);
    w
}

fn ssim_band(x: &Array2<f64>, y: &Array2<f64>, w: &Array2<f64>) -> f64 {
    let (rows, cols) = x.dim();
    let mut total = 0.0;
    let mut count = 0usize;
    // fully-interior windows only
    for r0 in 0..=rows - SSIM_WINDOW {
        for c0 in 0..=cols - SSIM_WINDOW {
            let mut mx = 0.0;
            let mut my = 0.0;
            for i in 0..SSIM_WINDOW {
                for j in 0..SSIM_WINDOW {
                    mx += w[[i, j]] * x[[r0 + i, c0 + j]];
                    my += w[[i, j]] * y[[r0 + i, c0 + j]];
                }
            }
            let mut vx = 0.0;
            let mut vy = 0.0;
            let mut cov = 0.0;
            for i in 0..SSIM_WINDOW {
                for j in 0..SSIM_WINDOW {
                    let dx = x[[r0 + i, c0 + j]] - mx;
                    let dy = y[[r0 + i, c0 + j]] - my;
                    vx += w[[i, j]] * dx * dx;
                    vy += w[[i, j]] * dy * dy;
                    cov += w[[i, j]] * dx * dy;
                }
            }
            let num = (2.0 * mx * my + SSIM_C1) * (2.0 * cov + SSIM_C2);
            let den = (mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2);
            total += num / den;
            count += 1;
        }
    }
    total / count as f64
}

/// Per-band SSIM with an 11x11 Gaussian window (sigma 1.5) over fully
/// interior positions, averaged over bands.
pub fn ssim(reference: &HsiCube, estimate: &HsiCube) -> Result<f64> {
    Ok(mean(&ssim_per_band(reference, estimate)?))
}

pub fn ssim_per_band(reference: &HsiCube, estimate: &HsiCube) -> Result<Vec<f64>> {
    check_shapes(reference, estimate)?;
    if reference.rows < SSIM_WINDOW || reference.cols < SSIM_WINDOW {
        return Err(Error::InvalidArgument(format!(
            "image {}x{} smaller than the {}x{} SSIM window",
            reference.rows, reference.cols, SSIM_WINDOW, SSIM_WINDOW
        )));
    }
    let w = ssim_window_weights();
    (0..reference.bands)
        .map(|b| Ok(ssim_band(&reference.band(b), &estimate.band(b), &w)))
        .collect()
}

pub fn rmse(reference: &HsiCube, estimate: &HsiCube) -> Result<f64> {
    check_shapes(reference, estimate)?;
    let n = reference.data.len();
    let mse: f64 = reference
        .data
        .iter()
        .zip(estimate.data.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n as f64;
    Ok(mse.sqrt())
}

/// Spectrally adaptive l1: mean over entries of alpha_j * |A_ij - Ahat_ij|
/// with alpha_j the per-pixel spectral angle in radians (zero-norm pixels
/// contribute zero).
pub fn adaptive_l1(reference: &HsiCube, estimate: &HsiCube) -> Result<f64> {
    check_shapes(reference, estimate)?;
    let npix = reference.pixels();
    let bands = reference.bands;
    let angles = pixel_angles(reference, estimate);
    let mut acc = 0.0;
    for (j, angle) in angles.iter().enumerate() {
        let alpha = angle.unwrap_or(0.0);
        if alpha == 0.0 {
            continue;
        }
        for b in 0..bands {
            acc += alpha * (reference.data[b * npix + j] - estimate.data[b * npix + j]).abs();
        }
    }
    Ok(acc / (bands * npix) as f64)
}

#[derive(Debug, Clone)]
pub struct MdlResult {
    pub selected: usize,
    /// Code length for k = 1..=max_k, index 0 holding k = 1.
    pub curve: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    pub floored: bool,
}

/// Eigenvalue-based minimum description length over the sample covariance:
/// MDL(k) = -L (M-k) ln(geoMean / arithMean of the trailing eigenvalues)
///        + k (2M - k) ln(L) / 2.
pub fn mdl_order(x: &BandPixelMatrix, max_k: usize) -> Result<MdlResult> {
    let (bands, pixels) = x.values.dim();
    if pixels <= bands {
        return Err(Error::InvalidArgument(format!(
            "need more pixels ({pixels}) than bands ({bands})"
        )));
    }
    if max_k == 0 || max_k >= bands {
        return Err(Error::InvalidArgument(format!(
            "max_k must be in [1, {})",
            bands
        )));
    }
    // sample covariance over pixels
    let mean: Vec<f64> = (0..bands)
        .map(|b| x.values.row(b).sum() / pixels as f64)
        .collect();
    let mut cov = Array2::<f64>::zeros((bands, bands));
    for j in 0..pixels {
        for a in 0..bands {
            let da = x.values[[a, j]] - mean[a];
            for b in a..bands {
                cov[[a, b]] += da * (x.values[[b, j]] - mean[b]);
            }
        }
    }
    for a in 0..bands {
        for b in a..bands {
            let v = cov[[a, b]] / pixels as f64;
            cov[[a, b]] = v;
            cov[[b, a]] = v;
        }
    }
    let na = nalgebra::DMatrix::from_fn(bands, bands, |i, j| cov[[i, j]]);
    let mut eigenvalues: Vec<f64> = na.symmetric_eigen().eigenvalues.iter().cloned().collect();
    eigenvalues.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let floor = 1e-12 * eigenvalues[0].max(f64::MIN_POSITIVE);
    let floored = eigenvalues.iter().any(|&v| v < floor);
    if floored {
        for v in eigenvalues.iter_mut() {
            *v = v.max(floor);
        }
    }

    let l = pixels as f64;
    let m = bands as f64;
    let mut curve = Vec::with_capacity(max_k);
    for k in 1..=max_k {
        let tail = &eigenvalues[k..];
        let n = tail.len() as f64;
        let log_geo = tail.iter().map(|v| v.ln()).sum::<f64>() / n;
        let arith = tail.iter().sum::<f64>() / n;
        let fit = -l * (m - k as f64) * (log_geo - arith.ln());
        let penalty = 0.5 * k as f64 * (2.0 * m - k as f64) * l.ln();
        curve.push(fit + penalty);
    }
    let selected = curve
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i + 1)
        .unwrap();
    Ok(MdlResult {
        selected,
        curve,
        eigenvalues,
        floored,
    })
}

/// Pearson correlation of two flattened maps.
pub fn cross_correlation(map_a: &Array2<f64>, map_b: &Array2<f64>) -> Result<f64> {
    if map_a.dim() != map_b.dim() {
        return Err(Error::ShapeMismatch("abundance maps differ in shape".into()));
    }
    let n = map_a.len() as f64;
    let ma = map_a.sum() / n;
    let mb = map_b.sum() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in map_a.iter().zip(map_b.iter()) {
        let dx = x - ma;
        let dy = y - mb;
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    // a numerically constant map (variance at rounding-noise level relative
    // to its mean) has no defined correlation
    let floor_a = n * (1e-12 * ma.abs().max(1.0)).powi(2);
    let floor_b = n * (1e-12 * mb.abs().max(1.0)).powi(2);
    if va <= floor_a || vb <= floor_b {
        return Err(Error::Data("constant map has undefined correlation".into()));
    }
    Ok(cov / (va.sqrt() * vb.sqrt()))
}

pub fn metric_report(reference: &HsiCube, estimate: &HsiCube) -> Result<MetricReport> {
    Ok(MetricReport {
        psnr_db: psnr(reference, estimate)?,
        sam_deg: sam(reference, estimate)?,
        ssim: ssim(reference, estimate)?,
        rmse: rmse(reference, estimate)?,
        l_g: adaptive_l1(reference, estimate)?,
        per_band_psnr: psnr_per_band(reference, estimate)?,
        per_band_ssim: ssim_per_band(reference, estimate)?,
    })
}
