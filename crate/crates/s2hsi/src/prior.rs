//! Classical substitutes for the learned priors: the spatial prior image
//! S_u (2x bicubic upsample of the product) and the spectral prior matrix
//! P ~ A A^T (pooled training Gram, rescaled to the target pixel count).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;

use crate::cube::HsiCube;
use crate::error::{Error, Result};
use crate::operators::bicubic_resize;
use crate::simulate::SentinelProduct;

const SPM_MAGIC: &[u8; 4] = b"SPM1";

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralPriorMatrix {
    /// bands x bands, symmetric by construction.
    pub matrix: Array2<f64>,
    /// Pixel count the matrix magnitude is scaled to.
    pub scale_pixels: usize,
}

impl SpectralPriorMatrix {
    pub fn bands(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn asymmetry(&self) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.bands() {
            for j in 0..self.bands() {
                let d = self.matrix[[i, j]] - self.matrix[[j, i]];
                acc += d * d;
            }
        }
        acc.sqrt()
    }

    /// Smallest eigenvalue, for the PSD diagnostic.
    pub fn min_eigenvalue(&self) -> f64 {
        let n = self.bands();
        let m = nalgebra::DMatrix::from_fn(n, n, |i, j| self.matrix[[i, j]]);
        let eig = m.symmetric_eigen();
        eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Pooled Gram estimator: P = (L / sum_i L_i) * sum_i A_i A_i^T over the
/// training cubes, so the magnitude matches a single cube with L pixels.
pub fn estimate_spectral_prior(
    training: &[HsiCube],
    target_pixels: usize,
) -> Result<SpectralPriorMatrix> {
    let first = training
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty training set".into()))?;
    let bands = first.bands;
    for c in training {
        if c.bands != bands {
            return Err(Error::ShapeMismatch(format!(
                "training cubes disagree on band count: {} vs {}",
                bands, c.bands
            )));
        }
    }
    let mut pooled: Array2<f64> = Array2::zeros((bands, bands));
    let mut total_pixels = 0usize;
    for c in training {
        let m = c.as_matrix();
        pooled = pooled + m.values.dot(&m.values.t());
        total_pixels += c.pixels();
    }
    let scale = target_pixels as f64 / total_pixels as f64;
    let mut matrix = pooled * scale;
    // symmetrize away accumulation round-off
    for i in 0..bands {
        for j in 0..i {
            let v = 0.5 * (matrix[[i, j]] + matrix[[j, i]]);
            matrix[[i, j]] = v;
            matrix[[j, i]] = v;
        }
    }
    Ok(SpectralPriorMatrix {
        matrix,
        scale_pixels: target_pixels,
    })
}

/// 2x bicubic upsample of every product band; the classical stand-in for
/// the learned spatial-resolution unification.
pub fn spatial_prior_image(s: &SentinelProduct) -> Result<HsiCube> {
    let (rows, cols) = (s.cube.rows, s.cube.cols);
    let mut out = HsiCube::zeros(s.cube.bands, rows * 2, cols * 2);
    for b in 0..s.cube.bands {
        let up = bicubic_resize(&s.cube.band(b), rows * 2, cols * 2)?;
        for r in 0..rows * 2 {
            for c in 0..cols * 2 {
                *out.sample_mut(b, r, c) = up[[r, c]];
            }
        }
    }
    Ok(out)
}

/// Canonical prior file: "SPM1" magic, u32 size, u64 scale pixels, then
/// size*size f64 values row-major (16-byte header total).
pub fn write_prior(p: &SpectralPriorMatrix, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(SPM_MAGIC).map_err(io)?;
    w.write_u32::<LittleEndian>(p.bands() as u32).map_err(io)?;
    w.write_u64::<LittleEndian>(p.scale_pixels as u64).map_err(io)?;
    for v in p.matrix.iter() {
        w.write_f64::<LittleEndian>(*v).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_prior(path: &Path) -> Result<SpectralPriorMatrix> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
    if &magic != SPM_MAGIC {
        return Err(Error::format(path, "bad magic, expected \"SPM1\""));
    }
    let size = r.read_u32::<LittleEndian>().map_err(|e| Error::io(path, e))? as usize;
    let scale_pixels = r.read_u64::<LittleEndian>().map_err(|e| Error::io(path, e))? as usize;
    let mut values = vec![0f64; size * size];
    r.read_f64_into::<LittleEndian>(&mut values)
        .map_err(|_| Error::corrupt(path, "truncated prior matrix"))?;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::corrupt(path, "non-finite prior entries"));
    }
    let matrix = Array2::from_shape_vec((size, size), values)
        .map_err(|_| Error::corrupt(path, "bad matrix shape"))?;
    Ok(SpectralPriorMatrix {
        matrix,
        scale_pixels,
    })
}
