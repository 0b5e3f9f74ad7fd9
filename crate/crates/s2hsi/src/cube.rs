//! Band-sequential hyperspectral cube data model and HSC1 file I/O.
//!
//! A cube stores `bands * rows * cols` reflectance samples, band-sequential
//! and row-major within each band. Arithmetic is done in f64; files store f32.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"HSC1";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct HsiCube {
    pub bands: usize,
    pub rows: usize,
    pub cols: usize,
    /// Band-sequential, row-major within band.
    pub data: Vec<f64>,
    /// Band-center wavelengths in nanometers, strictly increasing when present.
    pub wavelengths: Option<Vec<f64>>,
}

impl HsiCube {
    pub fn new(
        bands: usize,
        rows: usize,
        cols: usize,
        data: Vec<f64>,
        wavelengths: Option<Vec<f64>>,
    ) -> Result<Self> {
        let cube = HsiCube {
            bands,
            rows,
            cols,
            data,
            wavelengths,
        };
        cube.validate()?;
        Ok(cube)
    }

    pub fn zeros(bands: usize, rows: usize, cols: usize) -> Self {
        HsiCube {
            bands,
            rows,
            cols,
            data: vec![0.0; bands * rows * cols],
            wavelengths: None,
        }
    }

    pub fn pixels(&self) -> usize {
        self.rows * self.cols
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.len() != self.bands * self.rows * self.cols {
            return Err(Error::ShapeMismatch(format!(
                "data length {} != {}x{}x{}",
                self.data.len(),
                self.bands,
                self.rows,
                self.cols
            )));
        }
        if let Some(w) = &self.wavelengths {
            if w.len() != self.bands {
                return Err(Error::ShapeMismatch(format!(
                    "wavelength count {} != band count {}",
                    w.len(),
                    self.bands
                )));
            }
            if w.windows(2).any(|p| !(p[0] < p[1])) {
                return Err(Error::Data("wavelengths not strictly increasing".into()));
            }
        }
        if let Some(i) = self.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index: i });
        }
        Ok(())
    }

    pub fn sample(&self, band: usize, row: usize, col: usize) -> f64 {
        self.data[(band * self.rows + row) * self.cols + col]
    }

    pub fn sample_mut(&mut self, band: usize, row: usize, col: usize) -> &mut f64 {
        &mut self.data[(band * self.rows + row) * self.cols + col]
    }

    /// One band as a rows x cols matrix.
    pub fn band(&self, band: usize) -> Array2<f64> {
        let start = band * self.rows * self.cols;
        Array2::from_shape_vec(
            (self.rows, self.cols),
            self.data[start..start + self.rows * self.cols].to_vec(),
        )
        .expect("band slice has rows*cols samples")
    }

    /// Matrix view: band i, pixel j with pixels flattened row-major.
    pub fn as_matrix(&self) -> BandPixelMatrix {
        let values = Array2::from_shape_vec((self.bands, self.pixels()), self.data.clone())
            .expect("cube data is bands*pixels long");
        BandPixelMatrix {
            values,
            rows: self.rows,
            cols: self.cols,
        }
    }

    pub fn from_matrix(m: &BandPixelMatrix, wavelengths: Option<Vec<f64>>) -> Result<Self> {
        let (bands, pixels) = m.values.dim();
        if pixels != m.rows * m.cols {
            return Err(Error::ShapeMismatch(format!(
                "pixel count {} != {}x{}",
                pixels, m.rows, m.cols
            )));
        }
        let data = m
            .values
            .as_standard_layout()
            .iter()
            .copied()
            .collect::<Vec<f64>>();
        HsiCube::new(bands, m.rows, m.cols, data, wavelengths)
    }
}

/// Band x pixel matrix layout used by the solver equations, with the
/// originating spatial geometry so blurs can be applied per band.
#[derive(Debug, Clone, PartialEq)]
pub struct BandPixelMatrix {
    pub values: Array2<f64>,
    pub rows: usize,
    pub cols: usize,
}

impl BandPixelMatrix {
    pub fn new(values: Array2<f64>, rows: usize, cols: usize) -> Result<Self> {
        if values.ncols() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "matrix has {} columns, geometry is {}x{}",
                values.ncols(),
                rows,
                cols
            )));
        }
        Ok(BandPixelMatrix { values, rows, cols })
    }

    pub fn bands(&self) -> usize {
        self.values.nrows()
    }

    pub fn pixels(&self) -> usize {
        self.values.ncols()
    }

    /// One band reshaped to rows x cols.
    pub fn band_image(&self, band: usize) -> Array2<f64> {
        Array2::from_shape_fn((self.rows, self.cols), |(r, c)| {
            self.values[[band, r * self.cols + c]]
        })
    }

    pub fn set_band_image(&mut self, band: usize, img: &Array2<f64>) {
        debug_assert_eq!(img.dim(), (self.rows, self.cols));
        for r in 0..self.rows {
            for c in 0..self.cols {
                self.values[[band, r * self.cols + c]] = img[[r, c]];
            }
        }
    }
}

pub fn read_cube(path: &Path) -> Result<HsiCube> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
    if &magic != MAGIC {
        return Err(Error::format(
            path,
            format!("bad magic {:?}, expected \"HSC1\"", magic),
        ));
    }
    let version = r.read_u32::<LittleEndian>().map_err(|e| Error::io(path, e))?;
    if version != VERSION {
        return Err(Error::format(path, format!("unsupported version {version}")));
    }
    let bands = r.read_u32::<LittleEndian>().map_err(|e| Error::io(path, e))? as usize;
    let rows = r.read_u32::<LittleEndian>().map_err(|e| Error::io(path, e))? as usize;
    let cols = r.read_u32::<LittleEndian>().map_err(|e| Error::io(path, e))? as usize;
    let wl_present = r.read_u8().map_err(|e| Error::io(path, e))?;
    let mut pad = [0u8; 3];
    r.read_exact(&mut pad).map_err(|e| Error::io(path, e))?;
    if wl_present > 1 {
        return Err(Error::corrupt(
            path,
            format!("wavelength flag must be 0/1, got {wl_present}"),
        ));
    }

    let wavelengths = if wl_present == 1 {
        let mut w = vec![0f64; bands];
        r.read_f64_into::<LittleEndian>(&mut w)
            .map_err(|_| Error::corrupt(path, "truncated wavelength block"))?;
        Some(w)
    } else {
        None
    };

    let n = bands * rows * cols;
    let mut samples = vec![0f32; n];
    r.read_f32_into::<LittleEndian>(&mut samples)
        .map_err(|_| Error::corrupt(path, format!("truncated sample block, expected {n} samples")))?;
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(|e| Error::io(path, e))? != 0 {
        return Err(Error::corrupt(path, "trailing bytes after sample block"));
    }

    let data: Vec<f64> = samples.iter().map(|&v| v as f64).collect();
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index: i });
    }
    HsiCube::new(bands, rows, cols, data, wavelengths).map_err(|e| match e {
        Error::ShapeMismatch(reason) | Error::Data(reason) => Error::corrupt(path, reason),
        other => other,
    })
}

pub fn write_cube(cube: &HsiCube, path: &Path) -> Result<()> {
    cube.validate()?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);

    w.write_all(MAGIC).map_err(io)?;
    w.write_u32::<LittleEndian>(VERSION).map_err(io)?;
    w.write_u32::<LittleEndian>(cube.bands as u32).map_err(io)?;
    w.write_u32::<LittleEndian>(cube.rows as u32).map_err(io)?;
    w.write_u32::<LittleEndian>(cube.cols as u32).map_err(io)?;
    w.write_u8(cube.wavelengths.is_some() as u8).map_err(io)?;
    w.write_all(&[0u8; 3]).map_err(io)?;
    if let Some(wl) = &cube.wavelengths {
        for &v in wl {
            w.write_f64::<LittleEndian>(v).map_err(io)?;
        }
    }
    for &v in &cube.data {
        w.write_f32::<LittleEndian>(v as f32).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// 8-bit interleaved RGB raster.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

/// Min-max normalize the three selected bands, apply display gamma, and
/// pack them as R,G,B. A constant band maps to channel value 0.
pub fn truecolor_composite(cube: &HsiCube, band_indices: [usize; 3], gamma: f64) -> Result<RgbImage> {
    if gamma <= 0.0 {
        return Err(Error::InvalidArgument("gamma must be positive".into()));
    }
    for &b in &band_indices {
        if b >= cube.bands {
            return Err(Error::InvalidArgument(format!(
                "band index {b} out of range (cube has {} bands)",
                cube.bands
            )));
        }
    }
    let npix = cube.pixels();
    let mut pixels = vec![0u8; npix * 3];
    for (ch, &b) in band_indices.iter().enumerate() {
        let start = b * npix;
        let band = &cube.data[start..start + npix];
        let min = band.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = band.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for (j, &v) in band.iter().enumerate() {
            let byte = if max > min {
                let norm = ((v - min) / (max - min)).powf(1.0 / gamma);
                (norm * 255.0).round().clamp(0.0, 255.0) as u8
            } else {
                0
            };
            pixels[j * 3 + ch] = byte;
        }
    }
    Ok(RgbImage {
        width: cube.cols,
        height: cube.rows,
        pixels,
    })
}

/// Binary portable pixmap (P6) export.
pub fn write_ppm(img: &RgbImage, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write!(w, "P6\n{} {}\n255\n", img.width, img.height).map_err(|e| Error::io(path, e))?;
    w.write_all(&img.pixels).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
    Val,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Val => "val",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            "val" => Ok(Split::Val),
            other => Err(Error::Data(format!("unknown split tag {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub path: String,
    pub split: Split,
    pub scene_id: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneManifest {
    pub entries: Vec<ManifestEntry>,
    pub seed: u64,
}

impl SceneManifest {
    pub fn entries_for(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }
}

pub fn write_manifest(manifest: &SceneManifest, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "# seed\t{}", manifest.seed).map_err(|e| Error::io(path, e))?;
    for e in &manifest.entries {
        writeln!(w, "{}\t{}\t{}", e.path, e.split.as_str(), e.scene_id)
            .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<SceneManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut seed = 0u64;
    let mut entries = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("# seed\t") {
            seed = rest
                .trim()
                .parse()
                .map_err(|_| Error::corrupt(path, format!("bad seed on line {}", lineno + 1)))?;
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let mut parts = line.split('\t');
        let (p, s, id) = match (parts.next(), parts.next(), parts.next()) {
            (Some(p), Some(s), Some(id)) => (p, s, id),
            _ => {
                return Err(Error::corrupt(
                    path,
                    format!("line {} needs path\\tsplit\\tscene-id", lineno + 1),
                ))
            }
        };
        entries.push(ManifestEntry {
            path: p.to_string(),
            split: Split::parse(s).map_err(|_| {
                Error::corrupt(path, format!("bad split tag on line {}", lineno + 1))
            })?,
            scene_id: id.to_string(),
        });
    }
    Ok(SceneManifest { entries, seed })
}
