//! Degradation simulation: AVIRIS-NG band preprocessing, SRF construction
//! from band centers/bandwidths, and synthesis of the 12-band multiresolution
//! product at the replicated 10 m grid.

use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cube::{HsiCube, ManifestEntry, SceneManifest, Split};
use crate::error::{Error, Result};
use crate::operators::{circular_blur_downsample, replicate_upsample, SrfMatrix};

/// One Sentinel-2 band of the simulated product.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SentinelBandSpec {
    /// 1-based band index.
    pub index: usize,
    pub center_wavelength_nm: f64,
    pub bandwidth_nm: f64,
    /// Native ground sampling distance in meters: 10, 20, or 60.
    pub native_gsd_m: u32,
    /// Blur-downsample factor from the 5 m grid to the native GSD.
    pub downsample_factor: usize,
}

/// The per-band degradation factors, bands 1-12 in order.
pub const BAND_FACTORS: [usize; 12] = [12, 2, 2, 2, 4, 4, 4, 2, 4, 12, 4, 4];

/// Default 12-band table: Sentinel-2A centers and bandwidths from the
/// public mission specification (B8a fills the slot of the 60 m water-vapor
/// band so all twelve effective bands carry surface signal).
pub fn default_band_specs() -> Vec<SentinelBandSpec> {
    let raw = [
        (1, 442.7, 21.0, 60),
        (2, 492.4, 66.0, 10),
        (3, 559.8, 36.0, 10),
        (4, 664.6, 31.0, 10),
        (5, 704.1, 15.0, 20),
        (6, 740.5, 15.0, 20),
        (7, 782.8, 20.0, 20),
        (8, 832.8, 106.0, 10),
        (9, 864.7, 21.0, 20),
        (10, 1373.5, 31.0, 60),
        (11, 1613.7, 91.0, 20),
        (12, 2202.4, 175.0, 20),
    ];
    raw.iter()
        .map(|&(index, center, bw, gsd)| SentinelBandSpec {
            index,
            center_wavelength_nm: center,
            bandwidth_nm: bw,
            native_gsd_m: gsd,
            downsample_factor: BAND_FACTORS[index - 1],
        })
        .collect()
}

fn factor_for_gsd(gsd: u32) -> Option<usize> {
    match gsd {
        10 => Some(2),
        20 => Some(4),
        60 => Some(12),
        _ => None,
    }
}

pub fn validate_band_specs(specs: &[SentinelBandSpec]) -> Result<()> {
    if specs.len() != 12 {
        return Err(Error::Data(format!(
            "band-spec table must have 12 bands, got {}",
            specs.len()
        )));
    }
    for (i, s) in specs.iter().enumerate() {
        if s.index != i + 1 {
            return Err(Error::Data(format!(
                "band-spec table out of order at line {}: index {}",
                i + 1,
                s.index
            )));
        }
        match factor_for_gsd(s.native_gsd_m) {
            Some(f) if f == s.downsample_factor => {}
            Some(f) => {
                return Err(Error::Data(format!(
                    "band {}: factor {} inconsistent with {} m GSD (expected {})",
                    s.index, s.downsample_factor, s.native_gsd_m, f
                )))
            }
            None => {
                return Err(Error::Data(format!(
                    "band {}: GSD must be 10/20/60 m, got {}",
                    s.index, s.native_gsd_m
                )))
            }
        }
        if s.downsample_factor != BAND_FACTORS[i] {
            return Err(Error::Data(format!(
                "band {}: factor {} differs from the fixed table value {}",
                s.index, s.downsample_factor, BAND_FACTORS[i]
            )));
        }
        if s.bandwidth_nm <= 0.0 || s.center_wavelength_nm <= 0.0 {
            return Err(Error::Data(format!("band {}: nonpositive wavelength", s.index)));
        }
    }
    Ok(())
}

/// Plain-text table: `index center_nm bandwidth_nm gsd_m factor`, one band
/// per line, '#' comments allowed.
pub fn read_band_specs(path: &Path) -> Result<Vec<SentinelBandSpec>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut specs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(Error::corrupt(
                path,
                format!("line {}: expected 5 fields, got {}", lineno + 1, fields.len()),
            ));
        }
        let parse_err = |what: &str| {
            Error::corrupt(path, format!("line {}: bad {what}", lineno + 1))
        };
        specs.push(SentinelBandSpec {
            index: fields[0].parse().map_err(|_| parse_err("index"))?,
            center_wavelength_nm: fields[1].parse().map_err(|_| parse_err("center"))?,
            bandwidth_nm: fields[2].parse().map_err(|_| parse_err("bandwidth"))?,
            native_gsd_m: fields[3].parse().map_err(|_| parse_err("gsd"))?,
            downsample_factor: fields[4].parse().map_err(|_| parse_err("factor"))?,
        });
    }
    validate_band_specs(&specs)?;
    Ok(specs)
}

pub fn write_band_specs(specs: &[SentinelBandSpec], path: &Path) -> Result<()> {
    let mut out = String::from("# index center_nm bandwidth_nm gsd_m factor\n");
    for s in specs {
        out.push_str(&format!(
            "{} {} {} {} {}\n",
            s.index, s.center_wavelength_nm, s.bandwidth_nm, s.native_gsd_m, s.downsample_factor
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// 1-indexed water-vapor bands dropped from the 425-band AVIRIS-NG cube:
/// band 1, bands 195-211, bands 281-315.
fn is_water_band(band_1idx: usize) -> bool {
    band_1idx == 1 || (195..=211).contains(&band_1idx) || (281..=315).contains(&band_1idx)
}

pub fn remove_water_bands(cube: &HsiCube) -> Result<HsiCube> {
    if cube.bands != 425 {
        return Err(Error::InvalidArgument(format!(
            "water-band removal expects a 425-band cube, got {} bands",
            cube.bands
        )));
    }
    let keep: Vec<usize> = (1..=425).filter(|&b| !is_water_band(b)).collect();
    debug_assert_eq!(keep.len(), 372);
    let npix = cube.pixels();
    let mut data = Vec::with_capacity(keep.len() * npix);
    for &b in &keep {
        let start = (b - 1) * npix;
        data.extend_from_slice(&cube.data[start..start + npix]);
    }
    let wavelengths = cube
        .wavelengths
        .as_ref()
        .map(|w| keep.iter().map(|&b| w[b - 1]).collect());
    HsiCube::new(keep.len(), cube.rows, cube.cols, data, wavelengths)
}

/// Average adjacent band pairs; wavelengths averaged pairwise.
pub fn spectral_downsample2(cube: &HsiCube) -> Result<HsiCube> {
    if cube.bands % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "spectral downsampling needs an even band count, got {}",
            cube.bands
        )));
    }
    let npix = cube.pixels();
    let out_bands = cube.bands / 2;
    let mut data = vec![0.0; out_bands * npix];
    for b in 0..out_bands {
        let lo = 2 * b * npix;
        let hi = (2 * b + 1) * npix;
        for j in 0..npix {
            data[b * npix + j] = 0.5 * (cube.data[lo + j] + cube.data[hi + j]);
        }
    }
    let wavelengths = cube
        .wavelengths
        .as_ref()
        .map(|w| (0..out_bands).map(|b| 0.5 * (w[2 * b] + w[2 * b + 1])).collect());
    HsiCube::new(out_bands, cube.rows, cube.cols, data, wavelengths)
}

/// Row k averages the bands within bandwidth/2 of the band center; an empty
/// window falls back to a one-hot row at the nearest band.
pub fn build_srf(hsi_wavelengths: &[f64], specs: &[SentinelBandSpec]) -> Result<SrfMatrix> {
    if hsi_wavelengths.windows(2).any(|p| !(p[0] < p[1])) {
        return Err(Error::Data("wavelengths not strictly increasing".into()));
    }
    validate_band_specs(specs)?;
    let n = hsi_wavelengths.len();
    let mut values = Array2::zeros((specs.len(), n));
    for (k, s) in specs.iter().enumerate() {
        let half = s.bandwidth_nm / 2.0;
        let members: Vec<usize> = (0..n)
            .filter(|&j| (hsi_wavelengths[j] - s.center_wavelength_nm).abs() <= half)
            .collect();
        if members.is_empty() {
            let nearest = (0..n)
                .min_by(|&a, &b| {
                    let da = (hsi_wavelengths[a] - s.center_wavelength_nm).abs();
                    let db = (hsi_wavelengths[b] - s.center_wavelength_nm).abs();
                    da.partial_cmp(&db).unwrap()
                })
                .unwrap();
            values[[k, nearest]] = 1.0;
        } else {
            let w = 1.0 / members.len() as f64;
            for j in members {
                values[[k, j]] = w;
            }
        }
    }
    SrfMatrix::new(values)
}

/// Plain-text SRF: first line `rows cols`, then one whitespace-separated
/// row of weights per line.
pub fn write_srf(d: &SrfMatrix, path: &Path) -> Result<()> {
    let mut out = format!("{} {}\n", d.msi_bands(), d.hsi_bands());
    for row in d.values.rows() {
        let fields: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
        out.push_str(&fields.join(" "));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_srf(path: &Path) -> Result<SrfMatrix> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::corrupt(path, "empty SRF file"))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|f| f.parse().map_err(|_| Error::corrupt(path, "bad SRF header")))
        .collect::<Result<_>>()?;
    if dims.len() != 2 {
        return Err(Error::corrupt(path, "SRF header needs `rows cols`"));
    }
    let (rows, cols) = (dims[0], dims[1]);
    let mut values = Array2::zeros((rows, cols));
    for i in 0..rows {
        let line = lines
            .next()
            .ok_or_else(|| Error::corrupt(path, format!("missing SRF row {i}")))?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != cols {
            return Err(Error::corrupt(
                path,
                format!("SRF row {i} has {} fields, expected {cols}", fields.len()),
            ));
        }
        for (j, f) in fields.iter().enumerate() {
            values[[i, j]] = f
                .parse()
                .map_err(|_| Error::corrupt(path, format!("bad SRF value at ({i},{j})")))?;
        }
    }
    SrfMatrix::new(values).map_err(|e| Error::corrupt(path, e.to_string()))
}

/// The simulated 12-band product at the replicated 10 m grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SentinelProduct {
    pub cube: HsiCube,
    /// Per-band native blur-downsample factor from the 5 m grid.
    pub factors: [usize; 12],
}

impl SentinelProduct {
    /// Replication count to the 10 m grid: 6 for 60 m bands, 2 for 20 m,
    /// 1 for 10 m.
    pub fn replication(factor: usize) -> usize {
        factor / 2
    }
}

/// Produce the uniform 12-band image S_u = D*A at the 5 m grid, degrade each
/// band to its native GSD by circular blur-downsampling, and replicate the
/// 60 m / 20 m bands back onto the common 10 m grid.
pub fn simulate_sentinel2(a: &HsiCube, d: &SrfMatrix) -> Result<(SentinelProduct, HsiCube)> {
    if a.bands != d.hsi_bands() {
        return Err(Error::ShapeMismatch(format!(
            "cube has {} bands, SRF expects {}",
            a.bands,
            d.hsi_bands()
        )));
    }
    if d.msi_bands() != 12 {
        return Err(Error::ShapeMismatch(format!(
            "product synthesis needs a 12-row SRF, got {}",
            d.msi_bands()
        )));
    }
    if a.rows % 12 != 0 || a.cols % 12 != 0 {
        return Err(Error::InvalidArgument(format!(
            "spatial size {}x{} must be divisible by 12",
            a.rows, a.cols
        )));
    }
    let s_u_mat = crate::operators::apply_srf(d, &a.as_matrix())?;
    let s_true_u = HsiCube::from_matrix(&s_u_mat, None)?;

    let grid_rows = a.rows / 2;
    let grid_cols = a.cols / 2;
    let nbands = d.msi_bands();
    let mut factors = [0usize; 12];
    let mut product = HsiCube::zeros(nbands, grid_rows, grid_cols);
    for b in 0..nbands {
        let f = BAND_FACTORS[b];
        factors[b] = f;
        let native = circular_blur_downsample(&s_true_u.band(b), f)?;
        let replicated = replicate_upsample(&native, SentinelProduct::replication(f))?;
        debug_assert_eq!(replicated.dim(), (grid_rows, grid_cols));
        for r in 0..grid_rows {
            for c in 0..grid_cols {
                *product.sample_mut(b, r, c) = replicated[[r, c]];
            }
        }
    }
    Ok((
        SentinelProduct {
            cube: product,
            factors,
        },
        s_true_u,
    ))
}

/// Deterministic shuffle-and-partition of scene paths into train/test/val.
pub fn make_dataset(
    cube_paths: &[(String, String)],
    sizes: (usize, usize, usize),
    seed: u64,
) -> Result<SceneManifest> {
    let (n_train, n_test, n_val) = sizes;
    let needed = n_train + n_test + n_val;
    if needed > cube_paths.len() {
        return Err(Error::InvalidArgument(format!(
            "split sizes need {} cubes, only {} available",
            needed,
            cube_paths.len()
        )));
    }
    let mut order: Vec<usize> = (0..cube_paths.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let mut entries = Vec::with_capacity(needed);
    for (pos, &i) in order.iter().take(needed).enumerate() {
        let split = if pos < n_train {
            Split::Train
        } else if pos < n_train + n_test {
            Split::Test
        } else {
            Split::Val
        };
        entries.push(ManifestEntry {
            path: cube_paths[i].0.clone(),
            split,
            scene_id: cube_paths[i].1.clone(),
        });
    }
    Ok(SceneManifest { entries, seed })
}
