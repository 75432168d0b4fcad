//! Hyperspectral volumes stored as one spectrum per pixel.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `N_xi x N_p` cube, column-major: the spectrum of pixel `j` occupies
/// `data[j * N_xi .. (j + 1) * N_xi]`.
///
/// When a spatial shape `(N_x, N_y)` is attached, pixel `j` sits at
/// column `j % N_x` and row `j / N_x`.
#[derive(Debug, Clone, PartialEq)]
pub struct HsVolume<T> {
    n_xi: usize,
    n_p: usize,
    shape: Option<(usize, usize)>,
    data: Vec<T>,
}

/// JSON sidecar describing a flat binary volume.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VolumeHeader {
    #[serde(rename = "N_xi")]
    pub n_xi: usize,
    #[serde(rename = "N_x")]
    pub n_x: usize,
    #[serde(rename = "N_y")]
    pub n_y: usize,
}

impl<T: Scalar> HsVolume<T> {
    pub fn new(n_xi: usize, n_p: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != n_xi * n_p {
            return Err(Error::Dimension(format!(
                "{} values for a {n_xi} x {n_p} volume",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("volume has non-finite entries".into()));
        }
        Ok(Self {
            n_xi,
            n_p,
            shape: None,
            data,
        })
    }

    pub fn zeros(n_xi: usize, n_p: usize) -> Self {
        Self {
            n_xi,
            n_p,
            shape: None,
            data: vec![T::zero(); n_xi * n_p],
        }
    }

    pub fn from_pixels(n_xi: usize, pixels: Vec<Vec<T>>) -> Result<Self> {
        let n_p = pixels.len();
        if pixels.iter().any(|p| p.len() != n_xi) {
            return Err(Error::Dimension(format!("pixel spectra must have length {n_xi}")));
        }
        Self::new(n_xi, n_p, pixels.into_iter().flatten().collect())
    }

    pub fn with_shape(mut self, n_x: usize, n_y: usize) -> Result<Self> {
        if n_x * n_y != self.n_p {
            return Err(Error::Dimension(format!(
                "{n_x} x {n_y} does not match {} pixels",
                self.n_p
            )));
        }
        self.shape = Some((n_x, n_y));
        Ok(self)
    }

    pub fn n_xi(&self) -> usize {
        self.n_xi
    }

    pub fn n_p(&self) -> usize {
        self.n_p
    }

    pub fn shape(&self) -> Option<(usize, usize)> {
        self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn pixel(&self, j: usize) -> &[T] {
        &self.data[j * self.n_xi..(j + 1) * self.n_xi]
    }

    pub fn pixel_mut(&mut self, j: usize) -> &mut [T] {
        &mut self.data[j * self.n_xi..(j + 1) * self.n_xi]
    }

    pub fn pixels(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks(self.n_xi.max(1)).take(self.n_p)
    }

    /// Frobenius norm.
    pub fn norm(&self) -> T {
        self.data.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    pub fn header(&self) -> VolumeHeader {
        let (n_x, n_y) = self.shape.unwrap_or((self.n_p, 1));
        VolumeHeader {
            n_xi: self.n_xi,
            n_x,
            n_y,
        }
    }

    /// Write `path` as little-endian `f64` values and `path.json` as sidecar.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::with_capacity(self.data.len() * 8);
        for v in &self.data {
            bytes.extend_from_slice(&v.as_f64().to_le_bytes());
        }
        fs::write(path, bytes)?;
        let header = serde_json::to_string_pretty(&self.header())?;
        fs::write(sidecar_path(path), header + "\n")?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let header: VolumeHeader = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?;
        let bytes = fs::read(path)?;
        let n_p = header.n_x * header.n_y;
        if bytes.len() != header.n_xi * n_p * 8 {
            return Err(Error::Dimension(format!(
                "{} bytes for a {} x {n_p} volume",
                bytes.len(),
                header.n_xi
            )));
        }
        let data = bytes
            .chunks_exact(8)
            .map(|c| T::of(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
            .collect();
        Self::new(header.n_xi, n_p, data)?.with_shape(header.n_x, header.n_y)
    }

    /// One spectral band as an `N_y x N_x` CSV grid.
    pub fn band_map_csv(&self, band: usize) -> Result<String> {
        if band >= self.n_xi {
            return Err(Error::InvalidArgument(format!(
                "band {band} out of range for {} bands",
                self.n_xi
            )));
        }
        let (n_x, n_y) = self.shape.unwrap_or((self.n_p, 1));
        let mut w = csv::Writer::from_writer(Vec::new());
        for y in 0..n_y {
            let row: Vec<String> = (0..n_x)
                .map(|x| format!("{}", self.pixel(y * n_x + x)[band].as_f64()))
                .collect();
            w.write_record(&row)?;
        }
        let mut out = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        out.flush()?;
        Ok(String::from_utf8(out).expect("csv output is utf-8"))
    }
}

/// `volume.bin` -> `volume.bin.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}
