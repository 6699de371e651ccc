use std::path::Path;

use lact_core::phantom::{self, DatasetManifest};
use lact_core::{io, projector, FanBeamGeometry, Image, Sinogram};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// A phantom and its full-scan sinogram.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub image: Image,
    pub sino: Sinogram,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub samples: Vec<Sample>,
}

impl Dataset {
    /// Reads a generated dataset directory. Sinograms must match the
    /// manifest geometry.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest = phantom::load_manifest(dir)?;
        let geom = require_geometry(&manifest)?;
        let samples = (0..manifest.count)
            .into_par_iter()
            .map(|i| {
                let image = io::read_image(dir.join(phantom::sample_name(i, "laim")))?;
                let sino = io::read_sinogram_expecting(dir.join(phantom::sample_name(i, "lasg")), &geom)?;
                if image.size() != manifest.image_size {
                    return Err(Error::Input(format!(
                        "sample {i} is {}x{0}, manifest says {}",
                        image.size(),
                        manifest.image_size
                    )));
                }
                Ok(Sample { id: sample_id(i), image, sino })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { manifest, samples })
    }

    /// Renders and projects the whole dataset without touching the disk.
    /// Produces the same samples as writing and re-loading it.
    pub fn generate(manifest: &DatasetManifest) -> Result<Self> {
        manifest.validate()?;
        let geom = require_geometry(manifest)?;
        let samples = (0..manifest.count)
            .into_par_iter()
            .map(|i| {
                let image = phantom::sample_spec(manifest, i).render(manifest.image_size)?;
                let sino = projector::forward_project(&image, &geom)?;
                let seed = phantom::derive_seed(!manifest.master_seed, i as u64);
                let sino = projector::add_noise(&sino, manifest.noise_sigma, seed)?;
                Ok(Sample { id: sample_id(i), image, sino })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { manifest: manifest.clone(), samples })
    }

    pub fn geometry(&self) -> FanBeamGeometry {
        self.manifest.geometry.expect("checked on construction")
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Splits off the trailing `ceil(fraction * len)` samples as a holdout
    /// set (at least one when `fraction > 0` and the dataset has two or more).
    pub fn split(&self, fraction: f64) -> (&[Sample], &[Sample]) {
        let n = self.samples.len();
        let mut held = (fraction * n as f64).ceil() as usize;
        if fraction > 0.0 && n >= 2 {
            held = held.clamp(1, n - 1);
        } else {
            held = held.min(n);
        }
        self.samples.split_at(n - held)
    }
}

pub fn sample_id(index: usize) -> String {
    format!("sample_{index:06}")
}

fn require_geometry(manifest: &DatasetManifest) -> Result<FanBeamGeometry> {
    manifest
        .geometry
        .ok_or_else(|| Error::Input("dataset manifest has no acquisition geometry".into()))
}
