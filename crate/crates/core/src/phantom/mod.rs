//! Synthetic phantoms: acrylic-like disks with a radial brightness profile,
//! soft rims, and either non-overlapping holes or Voronoi-cell walls.

mod dataset;
mod shapes;
mod voronoi;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

pub use dataset::{
    derive_seed, generate_dataset, load_manifest, sample_name, sample_spec, DatasetManifest,
    DatasetSummary, FillKind, ParamRanges, MANIFEST_FILE, MANIFEST_VERSION,
};
pub use shapes::{place_shapes, Placement, Shape, ShapeKind};
pub use voronoi::voronoi_fill;

/// Upper clamp applied to rendered attenuation values.
pub const MAX_VALUE: f64 = 1.5;

/// Cubic Hermite ramp: 0 below `e1`, 1 above `e2`, `3t^2 - 2t^3` between.
pub fn smoothstep(d: f64, e1: f64, e2: f64) -> Result<f64> {
    if !(e1 < e2) {
        return Err(Error::InvalidArgument(format!(
            "smoothstep needs e1 < e2, got e1 = {e1}, e2 = {e2}"
        )));
    }
    Ok(smoothstep_unchecked(d, e1, e2))
}

#[inline]
pub(crate) fn smoothstep_unchecked(d: f64, e1: f64, e2: f64) -> f64 {
    if d <= e1 {
        0.0
    } else if d >= e2 {
        1.0
    } else {
        let t = (d - e1) / (e2 - e1);
        t * t * (3.0 - 2.0 * t)
    }
}

/// Radial brightness polynomial `c0 + c1 d + c2 d^2 + c3 d^3` (unclamped).
pub fn brightness(d: f64, coeffs: &[f64; 4]) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * d + c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Fill {
    Empty,
    Shapes {
        shapes: Vec<Shape>,
        /// Minimum pixel distance between holes and from holes to the rim.
        min_separation: f64,
        /// Width of the soft edge inside each hole, in pixels.
        edge_band: f64,
    },
    Voronoi {
        num_seeds: usize,
        /// Seed points in pixel coordinates `(x, y) = (col, row)`. Drawn
        /// inside the disk when empty.
        seed_points: Vec<[f64; 2]>,
        border_radius: f64,
        corner_smoothing: f64,
    },
}

/// Generative parameters of one phantom. Coordinates are pixels with
/// `(x, y) = (col, row)` and pixel centers on integers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub center: [f64; 2],
    pub radius: f64,
    pub brightness_coeffs: [f64; 4],
    /// Rim edges; the rim fades to zero over the last `e2 - e1` pixels.
    pub edge: (f64, f64),
    pub fill: Fill,
    pub rng_seed: u64,
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0) {
            return Err(Error::InvalidArgument(format!("disk radius must be positive, got {}", self.radius)));
        }
        if !(self.edge.0 < self.edge.1) {
            return Err(Error::InvalidArgument(format!(
                "disk edge needs e1 < e2, got {:?}",
                self.edge
            )));
        }
        if self.edge.1 - self.edge.0 > self.radius {
            return Err(Error::InvalidArgument("rim band wider than the disk".into()));
        }
        Ok(())
    }

    pub fn rim_band(&self) -> f64 {
        self.edge.1 - self.edge.0
    }

    /// Attenuation of the empty disk at distance `d` from its center. Inside
    /// the rim band the brightness is held at its value where the band starts.
    pub fn disk_value(&self, d: f64) -> f64 {
        let inner = self.radius - self.rim_band();
        let fade = 1.0 - smoothstep_unchecked(d, inner, self.radius);
        brightness(d.min(inner), &self.brightness_coeffs).clamp(0.0, MAX_VALUE) * fade
    }

    /// Renders the full phantom (disk followed by its fill).
    pub fn render(&self, size: usize) -> Result<Image> {
        let disk = render_disk(self, size)?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
        match &self.fill {
            Fill::Empty => Ok(disk),
            Fill::Shapes { .. } => Ok(place_shapes(&disk, self, &mut rng)?.0),
            Fill::Voronoi { .. } => voronoi_fill(&disk, self, &mut rng),
        }
    }
}

/// Empty disk with brightness profile and soft rim. Background is exactly 0.
pub fn render_disk(spec: &PhantomSpec, size: usize) -> Result<Image> {
    spec.validate()?;
    let [cx, cy] = spec.center;
    let r = spec.radius;
    let max = size as f64 - 0.5;
    if cx - r < -0.5 || cy - r < -0.5 || cx + r > max || cy + r > max {
        return Err(Error::InvalidArgument(format!(
            "disk at ({cx}, {cy}) with radius {r} exceeds the {size}x{size} image"
        )));
    }
    Ok(Image::from_fn(size, |row, col| {
        let d = (col as f64 - cx).hypot(row as f64 - cy);
        if d >= r {
            0.0
        } else {
            spec.disk_value(d) as f32
        }
    }))
}
