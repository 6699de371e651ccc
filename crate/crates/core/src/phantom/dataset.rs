use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Fill, PhantomSpec, Shape, ShapeKind};
use crate::error::{Error, Result};
use crate::geometry::FanBeamGeometry;
use crate::io;
use crate::projector;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

/// Ranges of every randomized phantom parameter, in pixels of the
/// manifest's image size unless noted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRanges {
    pub radius: (f64, f64),
    /// Maximum offset of the disk center from the image center, per axis.
    pub center_jitter: f64,
    /// Brightness at the disk center (dimensionless).
    pub center_brightness: (f64, f64),
    /// Brightness at the disk rim (dimensionless).
    pub rim_brightness: (f64, f64),
    /// Cubic contribution at the rim (dimensionless).
    pub cubic_perturbation: (f64, f64),
    pub rim_band: (f64, f64),
    /// Inclusive range of hole counts.
    pub shape_count: (usize, usize),
    pub min_separation: (f64, f64),
    pub shape_scale: (f64, f64),
    pub hole_edge_band: (f64, f64),
    /// Fraction of shape-filled disks whose holes vary in kind, scale and
    /// rotation; the rest repeat one kind at one scale.
    pub varied_fraction: f64,
    /// Relative weight of crosses among the seven shape kinds (others weigh 1).
    pub cross_weight: f64,
    /// Inclusive range of Voronoi seed counts.
    pub voronoi_seeds: (usize, usize),
    pub border_radius: (f64, f64),
    pub corner_smoothing: (f64, f64),
}

impl ParamRanges {
    /// Defaults for a 128-pixel grid, scaled linearly to `image_size`.
    pub fn for_size(image_size: usize) -> Self {
        let k = image_size as f64 / 128.0;
        let s = |(a, b): (f64, f64)| (a * k, b * k);
        Self {
            radius: s((44.0, 51.0)),
            center_jitter: 10.0 * k,
            center_brightness: (0.7, 0.9),
            rim_brightness: (0.95, 1.1),
            cubic_perturbation: (-0.03, 0.03),
            rim_band: s((1.5, 4.0)),
            shape_count: (0, 6),
            min_separation: s((2.0, 6.0)),
            shape_scale: s((5.0, 14.0)),
            hole_edge_band: s((1.0, 2.0)),
            varied_fraction: 0.5,
            cross_weight: 1.0,
            voronoi_seeds: (3, 16),
            border_radius: s((0.5, 2.0)),
            corner_smoothing: s((0.5, 3.0)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub count: usize,
    pub image_size: usize,
    pub shape_fraction: f64,
    pub voronoi_fraction: f64,
    pub master_seed: u64,
    pub ranges: ParamRanges,
    /// When set, a sinogram is stored next to every image.
    pub geometry: Option<FanBeamGeometry>,
    pub noise_sigma: f64,
}

impl DatasetManifest {
    pub fn new(count: usize, image_size: usize, master_seed: u64) -> Self {
        Self {
            version: MANIFEST_VERSION,
            count,
            image_size,
            shape_fraction: 0.8,
            voronoi_fraction: 0.2,
            master_seed,
            ranges: ParamRanges::for_size(image_size),
            geometry: None,
            noise_sigma: 0.0,
        }
    }

    pub fn with_geometry(mut self, geometry: FanBeamGeometry) -> Self {
        self.geometry = Some(geometry);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.count == 0 || self.image_size == 0 {
            return bad("manifest count and image_size must be positive".into());
        }
        if self.shape_fraction < 0.0
            || self.voronoi_fraction < 0.0
            || (self.shape_fraction + self.voronoi_fraction - 1.0).abs() > 1e-9
        {
            return bad(format!(
                "fill fractions must be non-negative and sum to 1, got ({}, {})",
                self.shape_fraction, self.voronoi_fraction
            ));
        }
        if self.noise_sigma < 0.0 {
            return bad("noise_sigma must be >= 0".into());
        }
        let r = &self.ranges;
        let max_radius = 0.5 * (self.image_size as f64 - 1.0) - r.center_jitter;
        if r.radius.0 <= 0.0 || r.radius.1 > max_radius {
            return bad(format!(
                "disk radius range {:?} does not fit the image with jitter {}",
                r.radius, r.center_jitter
            ));
        }
        if r.voronoi_seeds.0 < 2 {
            return bad("Voronoi fills need at least 2 seeds".into());
        }
        for (name, (lo, hi)) in [
            ("radius", r.radius),
            ("rim_band", r.rim_band),
            ("shape_scale", r.shape_scale),
            ("hole_edge_band", r.hole_edge_band),
        ] {
            if !(lo > 0.0 && lo <= hi) {
                return bad(format!("range {name} = ({lo}, {hi}) must be positive and ordered"));
            }
        }
        if let Some(g) = &self.geometry {
            g.validate()?;
            if g.image_size != self.image_size {
                return Err(Error::SizeMismatch {
                    what: "geometry image size",
                    expected: self.image_size,
                    found: g.image_size,
                });
            }
        }
        Ok(())
    }

    /// Number of leading samples that receive holes; the rest get Voronoi cells.
    pub fn num_shape_filled(&self) -> usize {
        ((self.count as f64 * self.shape_fraction).round() as usize).min(self.count)
    }

    pub fn fill_kind(&self, index: usize) -> FillKind {
        if index < self.num_shape_filled() {
            FillKind::Shapes
        } else {
            FillKind::Voronoi
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FillKind {
    Shapes,
    Voronoi,
}

/// SplitMix64 finaliser applied to `master ^ mix(index)`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(master ^ mix(index))
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn random_kind<R: Rng + ?Sized>(rng: &mut R, cross_weight: f64) -> ShapeKind {
    let total = 6.0 + cross_weight.max(0.0);
    let mut pick = rng.random::<f64>() * total;
    let mut which = 6;
    for i in 0..7 {
        let w = if i == 5 { cross_weight.max(0.0) } else { 1.0 };
        if pick < w {
            which = i;
            break;
        }
        pick -= w;
    }
    match which {
        0 => ShapeKind::Circle,
        1 => ShapeKind::Ellipse { aspect: rng.random_range(0.4..0.9) },
        2 => ShapeKind::RoundedRectangle {
            half_width: 1.0,
            half_height: rng.random_range(0.4..1.0),
            corner: rng.random_range(0.15..0.4),
        },
        3 => ShapeKind::RoundedTriangle { corner: rng.random_range(0.1..0.3) },
        4 => ShapeKind::Capsule {
            half_length: rng.random_range(0.4..1.0),
            radius: rng.random_range(0.3..0.5),
        },
        5 => ShapeKind::Cross {
            arm_length: 1.0,
            arm_width: rng.random_range(0.25..0.4),
            corner: rng.random_range(0.05..0.15),
        },
        _ => ShapeKind::Blob {
            harmonics: (0..2)
                .map(|_| (rng.random_range(0.0..0.2), rng.random_range(0.0..std::f64::consts::TAU)))
                .collect(),
        },
    }
}

/// Draws the phantom parameters of sample `index`. Depends only on the
/// manifest and the index.
pub fn sample_spec(manifest: &DatasetManifest, index: usize) -> PhantomSpec {
    let r = &manifest.ranges;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(manifest.master_seed, index as u64));
    let mid = 0.5 * (manifest.image_size as f64 - 1.0);
    let jitter = (-r.center_jitter, r.center_jitter);
    let center = [mid + uniform(&mut rng, jitter), mid + uniform(&mut rng, jitter)];
    let radius = uniform(&mut rng, r.radius);

    let c0 = uniform(&mut rng, r.center_brightness);
    let rim = uniform(&mut rng, r.rim_brightness);
    let cubic = uniform(&mut rng, r.cubic_perturbation);
    let c3 = cubic / radius.powi(3);
    let c2 = (rim - c0 - cubic) / radius.powi(2);
    let band = uniform(&mut rng, r.rim_band).min(radius);

    let fill = match manifest.fill_kind(index) {
        FillKind::Shapes => {
            let count = rng.random_range(r.shape_count.0..=r.shape_count.1.max(r.shape_count.0));
            let varied = rng.random::<f64>() < r.varied_fraction;
            let base_kind = random_kind(&mut rng, r.cross_weight);
            let base_scale = uniform(&mut rng, r.shape_scale);
            let shapes = (0..count)
                .map(|_| {
                    if varied {
                        Shape {
                            kind: random_kind(&mut rng, r.cross_weight),
                            scale: uniform(&mut rng, r.shape_scale),
                            rotation_deg: rng.random_range(0.0..360.0),
                            translation: center,
                        }
                    } else {
                        Shape {
                            kind: base_kind.clone(),
                            scale: base_scale,
                            rotation_deg: 0.0,
                            translation: center,
                        }
                    }
                })
                .collect();
            Fill::Shapes {
                shapes,
                min_separation: uniform(&mut rng, r.min_separation),
                edge_band: uniform(&mut rng, r.hole_edge_band),
            }
        }
        FillKind::Voronoi => Fill::Voronoi {
            num_seeds: rng.random_range(r.voronoi_seeds.0..=r.voronoi_seeds.1.max(r.voronoi_seeds.0)),
            seed_points: Vec::new(),
            border_radius: uniform(&mut rng, r.border_radius),
            corner_smoothing: uniform(&mut rng, r.corner_smoothing),
        },
    };

    PhantomSpec {
        center,
        radius,
        brightness_coeffs: [c0, 0.0, c2, c3],
        edge: (0.0, band),
        fill,
        rng_seed: rng.next_u64(),
    }
}

pub fn sample_name(index: usize, ext: &str) -> String {
    format!("sample_{index:06}.{ext}")
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatasetSummary {
    pub images: usize,
    pub sinograms: usize,
    pub shape_filled: usize,
    pub voronoi_filled: usize,
}

/// Writes `manifest.json`, every `sample_NNNNNN.laim`, and (when the
/// manifest carries a geometry) the paired `sample_NNNNNN.lasg`.
pub fn generate_dataset(manifest: &DatasetManifest, out_dir: impl AsRef<Path>) -> Result<DatasetSummary> {
    manifest.validate()?;
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let json = serde_json::to_string_pretty(manifest)?;
    io::write_atomic(&dir.join(MANIFEST_FILE), json.as_bytes())?;

    (0..manifest.count).into_par_iter().try_for_each(|i| -> Result<()> {
        let spec = sample_spec(manifest, i);
        let image = spec.render(manifest.image_size)?;
        io::write_image(dir.join(sample_name(i, "laim")), &image)?;
        if let Some(g) = &manifest.geometry {
            let sino = projector::forward_project(&image, g)?;
            let sino = projector::add_noise(&sino, manifest.noise_sigma, derive_seed(!manifest.master_seed, i as u64))?;
            io::write_sinogram(dir.join(sample_name(i, "lasg")), &sino)?;
        }
        Ok(())
    })?;

    let shape_filled = manifest.num_shape_filled();
    Ok(DatasetSummary {
        images: manifest.count,
        sinograms: if manifest.geometry.is_some() { manifest.count } else { 0 },
        shape_filled,
        voronoi_filled: manifest.count - shape_filled,
    })
}

pub fn load_manifest(dir: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path: PathBuf = dir.as_ref().join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let m: DatasetManifest = serde_json::from_str(&text)?;
    if m.version != MANIFEST_VERSION {
        return Err(Error::UnsupportedVersion {
            format: "manifest",
            expected: MANIFEST_VERSION,
            found: m.version,
        });
    }
    Ok(m)
}
