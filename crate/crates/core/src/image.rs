use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::FanBeamGeometry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Provenance {
    #[default]
    Synthetic,
    Reconstruction,
}

/// Square attenuation map in 1/mm, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    size: usize,
    values: Vec<f32>,
    pub provenance: Provenance,
}

impl Image {
    pub fn zeros(size: usize) -> Self {
        Self {
            size,
            values: vec![0.0; size * size],
            provenance: Provenance::Synthetic,
        }
    }

    pub fn from_vec(size: usize, values: Vec<f32>) -> Result<Self> {
        if size == 0 {
            return Err(Error::InvalidArgument("image size must be positive".into()));
        }
        if values.len() != size * size {
            return Err(Error::SizeMismatch {
                what: "image values",
                expected: size * size,
                found: values.len(),
            });
        }
        check_finite(&values)?;
        Ok(Self {
            size,
            values,
            provenance: Provenance::Synthetic,
        })
    }

    pub fn from_fn(size: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut values = Vec::with_capacity(size * size);
        for r in 0..size {
            for c in 0..size {
                values.push(f(r, c));
            }
        }
        Self {
            size,
            values,
            provenance: Provenance::Synthetic,
        }
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.values[row * self.size + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: f32) {
        self.values[row * self.size + col] = v;
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&v| v as f64).collect()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().map(|&v| v as f64).sum::<f64>() / self.values.len() as f64
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.values
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

/// Angle-by-detector matrix of line integrals `-log(I1/I0)`, row-major with
/// one row per acquisition angle.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    geometry: FanBeamGeometry,
    values: Vec<f32>,
}

impl Sinogram {
    pub fn zeros(geometry: FanBeamGeometry) -> Self {
        Self {
            values: vec![0.0; geometry.sinogram_len()],
            geometry,
        }
    }

    pub fn from_vec(geometry: FanBeamGeometry, values: Vec<f32>) -> Result<Self> {
        if values.len() != geometry.sinogram_len() {
            return Err(Error::SizeMismatch {
                what: "sinogram values",
                expected: geometry.sinogram_len(),
                found: values.len(),
            });
        }
        check_finite(&values)?;
        Ok(Self { geometry, values })
    }

    pub fn geometry(&self) -> &FanBeamGeometry {
        &self.geometry
    }

    pub fn num_angles(&self) -> usize {
        self.geometry.num_angles
    }

    pub fn num_detectors(&self) -> usize {
        self.geometry.num_detectors
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let n = self.geometry.num_detectors;
        &self.values[i * n..(i + 1) * n]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f32> {
        self.values.chunks_exact(self.geometry.num_detectors)
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&v| v as f64).collect()
    }

    /// Fails unless `geom` describes the same acquisition and angle grid.
    pub fn check_geometry(&self, geom: &FanBeamGeometry) -> Result<()> {
        if self.geometry != *geom {
            return Err(Error::GeometryMismatch(format!(
                "sinogram geometry {:?} differs from expected {:?}",
                self.geometry, geom
            )));
        }
        Ok(())
    }
}

fn check_finite(values: &[f32]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}
