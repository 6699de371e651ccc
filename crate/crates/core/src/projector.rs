//! Forward projection `y = A x` and its exact adjoint.
//!
//! Each sinogram entry is the line integral along the ray from the point
//! source to the center of one detector cell. `A` uses the pixel basis: a
//! row of `A` holds the exact intersection lengths of its ray with every
//! pixel (Siddon traversal).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{AngularWindow, FanBeamGeometry};
use crate::image::{Image, Sinogram};

/// Matrix-free fan-beam system operator for one geometry.
#[derive(Debug, Clone)]
pub struct FanBeamProjector {
    geom: FanBeamGeometry,
}

impl FanBeamProjector {
    pub fn new(geom: FanBeamGeometry) -> Result<Self> {
        geom.validate()?;
        Ok(Self { geom })
    }

    pub fn geometry(&self) -> &FanBeamGeometry {
        &self.geom
    }

    /// Visits `(pixel index, intersection length in mm)` for the ray of
    /// sinogram entry `(row, det)`, in increasing ray parameter.
    pub fn for_each_intersection(&self, row: usize, det: usize, f: impl FnMut(usize, f64)) {
        let src = self.geom.source_position(row);
        let dst = self.geom.detector_cell_center(row, det);
        siddon(&self.geom, src, dst, f);
    }

    /// Row `(row, det)` of `A` as a sparse list.
    pub fn ray_weights(&self, row: usize, det: usize) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        self.for_each_intersection(row, det, |i, w| out.push((i, w)));
        out
    }

    /// `A x` at double precision.
    pub fn forward(&self, image: &[f64]) -> Result<Vec<f64>> {
        check_len("image", self.geom.num_pixels(), image.len())?;
        let nd = self.geom.num_detectors;
        let mut out = vec![0.0; self.geom.sinogram_len()];
        out.par_chunks_mut(nd).enumerate().for_each(|(row, dst)| {
            for (det, d) in dst.iter_mut().enumerate() {
                let mut acc = 0.0;
                self.for_each_intersection(row, det, |i, w| acc += w * image[i]);
                *d = acc;
            }
        });
        Ok(out)
    }

    /// `Aᵀ y` at double precision, accumulated ray by ray in sinogram order.
    pub fn adjoint(&self, sino: &[f64]) -> Result<Vec<f64>> {
        check_len("sinogram", self.geom.sinogram_len(), sino.len())?;
        let nd = self.geom.num_detectors;
        let mut out = vec![0.0; self.geom.num_pixels()];
        for row in 0..self.geom.num_angles {
            for det in 0..nd {
                let y = sino[row * nd + det];
                if y != 0.0 {
                    self.for_each_intersection(row, det, |i, w| out[i] += w * y);
                }
            }
        }
        Ok(out)
    }
}

fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::SizeMismatch { what, expected, found });
    }
    Ok(())
}

/// Siddon traversal of the segment `src -> dst` through the pixel grid.
fn siddon(geom: &FanBeamGeometry, src: [f64; 2], dst: [f64; 2], mut f: impl FnMut(usize, f64)) {
    let n = geom.image_size;
    let nf = n as f64;
    let s = geom.image_pixel_size;
    let half = 0.5 * nf * s;
    // Grid coordinates: gx = column coordinate, gy = row coordinate, both in [0, n].
    let to_grid = |p: [f64; 2]| [(p[0] + half) / s, (half - p[1]) / s];
    let a = to_grid(src);
    let b = to_grid(dst);
    let d = [b[0] - a[0], b[1] - a[1]];
    let length = ((dst[0] - src[0]).powi(2) + (dst[1] - src[1]).powi(2)).sqrt();

    let mut tmin: f64 = 0.0;
    let mut tmax: f64 = 1.0;
    for axis in 0..2 {
        if d[axis] == 0.0 {
            if a[axis] <= 0.0 || a[axis] >= nf {
                return;
            }
        } else {
            let t0 = (0.0 - a[axis]) / d[axis];
            let t1 = (nf - a[axis]) / d[axis];
            tmin = tmin.max(t0.min(t1));
            tmax = tmax.min(t0.max(t1));
        }
    }
    if tmax <= tmin {
        return;
    }

    // Entry pixel and the parameter of the next grid line on each axis.
    // Lines are recomputed from their index rather than accumulated so the
    // crossings do not drift along long rays.
    let entry = [a[0] + tmin * d[0], a[1] + tmin * d[1]];
    let last = (n - 1) as i64;
    let start_cell = |axis: usize| -> i64 {
        let p = entry[axis];
        let c = if d[axis] < 0.0 { p.ceil() as i64 - 1 } else { p.floor() as i64 };
        c.clamp(0, last)
    };
    let step = |axis: usize| -> i64 {
        if d[axis] > 0.0 {
            1
        } else if d[axis] < 0.0 {
            -1
        } else {
            0
        }
    };
    let inv = [1.0 / d[0], 1.0 / d[1]];
    let crossing = |axis: usize, cell: i64, dir: i64| -> f64 {
        match dir {
            0 => f64::INFINITY,
            1 => ((cell + 1) as f64 - a[axis]) * inv[axis],
            _ => (cell as f64 - a[axis]) * inv[axis],
        }
    };
    let (sx, sy) = (step(0), step(1));
    let (mut col, mut row) = (start_cell(0), start_cell(1));
    let mut tx = crossing(0, col, sx);
    let mut ty = crossing(1, row, sy);

    let mut t = tmin;
    while t < tmax {
        let x_first = tx <= ty;
        let t_next = if x_first { tx } else { ty }.min(tmax);
        if t_next > t {
            f(row as usize * n + col as usize, (t_next - t) * length);
            t = t_next;
        }
        if x_first {
            col += sx;
            if col < 0 || col > last {
                break;
            }
            tx = crossing(0, col, sx);
        } else {
            row += sy;
            if row < 0 || row > last {
                break;
            }
            ty = crossing(1, row, sy);
        }
    }
}

/// Noiseless projection `A x`.
pub fn forward_project(image: &Image, geom: &FanBeamGeometry) -> Result<Sinogram> {
    if image.size() != geom.image_size {
        return Err(Error::SizeMismatch {
            what: "image size",
            expected: geom.image_size,
            found: image.size(),
        });
    }
    let projector = FanBeamProjector::new(*geom)?;
    let y = projector.forward(&image.to_f64())?;
    Sinogram::from_vec(*geom, y.into_iter().map(|v| v as f32).collect())
}

/// Unfiltered back projection `Aᵀ y`.
pub fn back_project(sino: &Sinogram, geom: &FanBeamGeometry) -> Result<Image> {
    sino.check_geometry(geom)?;
    let projector = FanBeamProjector::new(*geom)?;
    let x = projector.adjoint(&sino.to_f64())?;
    Image::from_vec(geom.image_size, x.into_iter().map(|v| v as f32).collect())
}

/// Rows `alpha/step ..= beta/step` of `sino`. The returned sinogram's
/// geometry starts at `alpha`.
pub fn extract_window(sino: &Sinogram, w: &AngularWindow) -> Result<Sinogram> {
    let g = sino.geometry();
    let outside = |reason: &str| Error::InvalidWindow {
        alpha: w.alpha_deg,
        beta: w.beta_deg,
        reason: reason.to_string(),
    };
    let first = g
        .row_of_angle(w.alpha_deg)
        .ok_or_else(|| outside("start angle is not on the sinogram's angle grid"))?;
    let last = g
        .row_of_angle(w.beta_deg)
        .ok_or_else(|| outside("end angle is not on the sinogram's angle grid"))?;
    if last < first {
        return Err(outside("end precedes start"));
    }
    let nd = g.num_detectors;
    let values = sino.values()[first * nd..(last + 1) * nd].to_vec();
    let geom = g.with_angles(g.angle_deg(first), g.angle_step_deg, last - first + 1);
    Sinogram::from_vec(geom, values)
}

/// Adds i.i.d. Gaussian noise of standard deviation `sigma`.
pub fn add_noise(sino: &Sinogram, sigma: f64, seed: u64) -> Result<Sinogram> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(sino.clone());
    }
    let normal = Normal::new(0.0, sigma).expect("sigma validated");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = sino.clone();
    for v in out.values_mut() {
        *v = (*v as f64 + normal.sample(&mut rng)) as f32;
    }
    Ok(out)
}

/// Sampling model used by [`line_integral_oracle`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interpolation {
    /// Bilinear between pixel centers, zero outside the grid.
    #[default]
    Bilinear,
    /// Piecewise-constant pixel basis.
    Nearest,
}

/// A ray in world coordinates (mm). `direction` need not be normalised.
#[derive(Debug, Clone, Copy)]
pub struct Ray {
    pub origin: [f64; 2],
    pub direction: [f64; 2],
}

impl Ray {
    pub fn through(a: [f64; 2], b: [f64; 2]) -> Self {
        Self {
            origin: a,
            direction: [b[0] - a[0], b[1] - a[1]],
        }
    }
}

/// Reference line integral by dense midpoint sampling along `ray` at
/// spacing `step` (mm). Used to check [`forward_project`].
pub fn line_integral_oracle(
    image: &Image,
    image_pixel_size: f64,
    ray: &Ray,
    step: f64,
    interp: Interpolation,
) -> f64 {
    assert!(step > 0.0, "oracle step must be positive");
    let n = image.size();
    let nf = n as f64;
    let s = image_pixel_size;
    let norm = (ray.direction[0].powi(2) + ray.direction[1].powi(2)).sqrt();
    if norm == 0.0 {
        return 0.0;
    }
    let dir = [ray.direction[0] / norm, ray.direction[1] / norm];
    // Sample the chord through a disk enclosing the grid plus a margin.
    let radius = nf * s;
    let oc = ray.origin[0] * dir[0] + ray.origin[1] * dir[1];
    let perp2 = ray.origin[0].powi(2) + ray.origin[1].powi(2) - oc * oc;
    if perp2 >= radius * radius {
        return 0.0;
    }
    let h = (radius * radius - perp2).sqrt();
    let t0 = -oc - h;
    let count = ((2.0 * h) / step).ceil() as usize;
    let c = 0.5 * (nf - 1.0);
    let mut acc = 0.0;
    for k in 0..count {
        let t = t0 + (k as f64 + 0.5) * step;
        let x = ray.origin[0] + t * dir[0];
        let y = ray.origin[1] + t * dir[1];
        // Continuous pixel coordinates with pixel centers on integers.
        let col = x / s + c;
        let row = c - y / s;
        acc += match interp {
            Interpolation::Bilinear => bilinear(image, row, col),
            Interpolation::Nearest => {
                let (r, cc) = ((row + 0.5).floor(), (col + 0.5).floor());
                if r >= 0.0 && cc >= 0.0 && r < nf && cc < nf {
                    image.get(r as usize, cc as usize) as f64
                } else {
                    0.0
                }
            }
        };
    }
    acc * step
}

fn bilinear(image: &Image, row: f64, col: f64) -> f64 {
    let n = image.size() as isize;
    let r0 = row.floor();
    let c0 = col.floor();
    let fr = row - r0;
    let fc = col - c0;
    let (r0, c0) = (r0 as isize, c0 as isize);
    let px = |r: isize, c: isize| -> f64 {
        if r >= 0 && c >= 0 && r < n && c < n {
            image.get(r as usize, c as usize) as f64
        } else {
            0.0
        }
    };
    (1.0 - fr) * ((1.0 - fc) * px(r0, c0) + fc * px(r0, c0 + 1))
        + fr * ((1.0 - fc) * px(r0 + 1, c0) + fc * px(r0 + 1, c0 + 1))
}
