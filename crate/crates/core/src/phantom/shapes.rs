use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{smoothstep_unchecked, Fill, PhantomSpec};
use crate::error::{Error, Result};
use crate::image::Image;

/// Hole outline. Parameters are relative to the shape's `scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ShapeKind {
    Circle,
    /// Semi-axes `1` and `aspect`.
    Ellipse { aspect: f64 },
    RoundedRectangle { half_width: f64, half_height: f64, corner: f64 },
    /// Equilateral triangle with unit circumradius, rounded by `corner`.
    RoundedTriangle { corner: f64 },
    Capsule { half_length: f64, radius: f64 },
    /// Plus-shaped union of two rounded bars.
    Cross { arm_length: f64, arm_width: f64, corner: f64 },
    /// Star-shaped contour `r(θ) = 1 + Σ a_k cos(kθ + φ_k)`, `k = 2, 3, ...`.
    Blob { harmonics: Vec<(f64, f64)> },
}

/// A hole outline with its placement transform. Translation is in pixels,
/// `(x, y) = (col, row)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shape {
    pub kind: ShapeKind,
    pub scale: f64,
    pub rotation_deg: f64,
    pub translation: [f64; 2],
}

impl ShapeKind {
    /// Signed distance (negative inside) in local units. Exact for circle,
    /// rectangle, triangle, capsule and cross exteriors; a first-order
    /// approximation for ellipse and blob with the correct sign.
    pub fn sdf(&self, p: [f64; 2]) -> f64 {
        let [x, y] = p;
        match self {
            ShapeKind::Circle => x.hypot(y) - 1.0,
            ShapeKind::Ellipse { aspect } => {
                let (a, b) = (1.0, *aspect);
                let k0 = (x / a).hypot(y / b);
                let k1 = (x / (a * a)).hypot(y / (b * b));
                if k1 == 0.0 {
                    -a.min(b)
                } else {
                    k0 * (k0 - 1.0) / k1
                }
            }
            ShapeKind::RoundedRectangle { half_width, half_height, corner } => {
                rounded_box(p, *half_width, *half_height, *corner)
            }
            ShapeKind::RoundedTriangle { corner } => triangle(p) - corner,
            ShapeKind::Capsule { half_length, radius } => {
                let cx = x.clamp(-half_length, *half_length);
                (x - cx).hypot(y) - radius
            }
            ShapeKind::Cross { arm_length, arm_width, corner } => {
                let h = rounded_box(p, *arm_length, *arm_width, *corner);
                let v = rounded_box(p, *arm_width, *arm_length, *corner);
                h.min(v)
            }
            ShapeKind::Blob { harmonics } => {
                let theta = y.atan2(x);
                let r: f64 = 1.0
                    + harmonics
                        .iter()
                        .enumerate()
                        .map(|(i, (a, phi))| a * ((i as f64 + 2.0) * theta + phi).cos())
                        .sum::<f64>();
                x.hypot(y) - r
            }
        }
    }

    /// Radius of a local-units disk containing the shape.
    pub fn extent(&self) -> f64 {
        match self {
            ShapeKind::Circle => 1.0,
            ShapeKind::RoundedTriangle { corner } => 1.0 + corner,
            ShapeKind::Ellipse { aspect } => aspect.max(1.0),
            ShapeKind::RoundedRectangle { half_width, half_height, .. } => half_width.hypot(*half_height),
            ShapeKind::Capsule { half_length, radius } => half_length + radius,
            ShapeKind::Cross { arm_length, arm_width, .. } => arm_length.hypot(*arm_width),
            ShapeKind::Blob { harmonics } => 1.0 + harmonics.iter().map(|h| h.0.abs()).sum::<f64>(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ShapeKind::Circle => "circle",
            ShapeKind::Ellipse { .. } => "ellipse",
            ShapeKind::RoundedRectangle { .. } => "rounded_rectangle",
            ShapeKind::RoundedTriangle { .. } => "rounded_triangle",
            ShapeKind::Capsule { .. } => "capsule",
            ShapeKind::Cross { .. } => "cross",
            ShapeKind::Blob { .. } => "blob",
        }
    }
}

fn rounded_box(p: [f64; 2], hw: f64, hh: f64, corner: f64) -> f64 {
    let c = corner.min(hw).min(hh);
    let qx = p[0].abs() - (hw - c);
    let qy = p[1].abs() - (hh - c);
    qx.max(0.0).hypot(qy.max(0.0)) + qx.max(qy).min(0.0) - c
}

/// Exact signed distance to an equilateral triangle with unit circumradius,
/// one vertex pointing along +y.
fn triangle(p: [f64; 2]) -> f64 {
    let k = 3f64.sqrt();
    // Half side length for circumradius 1.
    let r = 0.5 * k;
    let mut x = p[0].abs() - r;
    let mut y = p[1] + r / k;
    if x + k * y > 0.0 {
        let (nx, ny) = ((x - k * y) / 2.0, (-k * x - y) / 2.0);
        x = nx;
        y = ny;
    }
    x -= x.clamp(-2.0 * r, 0.0);
    -x.hypot(y) * y.signum()
}

impl Shape {
    /// Signed distance in pixels at pixel coordinates `(x, y)`.
    pub fn sdf(&self, x: f64, y: f64) -> f64 {
        let (s, c) = self.rotation_deg.to_radians().sin_cos();
        let dx = x - self.translation[0];
        let dy = y - self.translation[1];
        // Rows grow downwards; rotate counterclockwise as seen on screen.
        let lx = (c * dx - s * dy) / self.scale;
        let ly = (s * dx + c * dy) / self.scale;
        self.kind.sdf([lx, ly]) * self.scale
    }

    pub fn extent_px(&self) -> f64 {
        self.kind.extent() * self.scale
    }

    /// Pixel indices `(row, col)` whose centers lie strictly inside the shape.
    pub fn stencil(&self, size: usize) -> Vec<(usize, usize)> {
        let e = self.extent_px() + 1.0;
        let [tx, ty] = self.translation;
        let lo = |v: f64| (v - e).floor().max(0.0) as usize;
        let hi = |v: f64| ((v + e).ceil().max(0.0) as usize).min(size.saturating_sub(1));
        let mut out = Vec::new();
        for row in lo(ty)..=hi(ty) {
            for col in lo(tx)..=hi(tx) {
                if self.sdf(col as f64, row as f64) < 0.0 {
                    out.push((row, col));
                }
            }
        }
        out
    }
}

/// Result of hole placement: accepted shapes (with their sampled
/// translations) and indices of shapes that could not be placed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Placement {
    pub placed: Vec<Shape>,
    pub skipped: Vec<usize>,
}

pub(crate) const MAX_PLACEMENT_ATTEMPTS: usize = 200;

/// Cuts the shapes of a [`Fill::Shapes`] spec into `disk` as air holes.
///
/// Each shape's translation is resampled uniformly inside the disk until
/// its stencil keeps `min_separation` from the rim and from every
/// previously accepted stencil. Shapes that fail after
/// `MAX_PLACEMENT_ATTEMPTS` tries are skipped and reported.
pub fn place_shapes<R: Rng + ?Sized>(disk: &Image, spec: &PhantomSpec, rng: &mut R) -> Result<(Image, Placement)> {
    let Fill::Shapes { shapes, min_separation, edge_band } = &spec.fill else {
        return Err(Error::InvalidArgument("place_shapes needs a Shapes fill".into()));
    };
    let size = disk.size();
    let sep = min_separation.max(0.0);
    let band = edge_band.max(1e-6);
    let mut occupied = vec![false; size * size];
    let mut placement = Placement::default();
    let mut out = disk.clone();
    let [cx, cy] = spec.center;
    let limit = spec.radius - sep;

    for (index, template) in shapes.iter().enumerate() {
        let reach = limit - template.extent_px();
        let mut accepted = None;
        if reach > 0.0 {
            for _ in 0..MAX_PLACEMENT_ATTEMPTS {
                let rho = reach * rng.random::<f64>().sqrt();
                let phi = rng.random::<f64>() * std::f64::consts::TAU;
                let candidate = Shape {
                    translation: [cx + rho * phi.cos(), cy + rho * phi.sin()],
                    ..template.clone()
                };
                let stencil = candidate.stencil(size);
                if fits(&stencil, &occupied, size, sep, [cx, cy], limit) {
                    accepted = Some((candidate, stencil));
                    break;
                }
            }
        }
        match accepted {
            Some((shape, stencil)) => {
                for &(row, col) in &stencil {
                    occupied[row * size + col] = true;
                    let factor = smoothstep_unchecked(shape.sdf(col as f64, row as f64), -band, 0.0);
                    let v = out.get(row, col) * factor as f32;
                    out.set(row, col, v);
                }
                placement.placed.push(shape);
            }
            None => placement.skipped.push(index),
        }
    }
    Ok((out, placement))
}

fn fits(stencil: &[(usize, usize)], occupied: &[bool], size: usize, sep: f64, center: [f64; 2], limit: f64) -> bool {
    let r = sep.ceil() as isize;
    let sep2 = sep * sep;
    for &(row, col) in stencil {
        if (col as f64 - center[0]).hypot(row as f64 - center[1]) > limit {
            return false;
        }
        for dr in -r..=r {
            for dc in -r..=r {
                if ((dr * dr + dc * dc) as f64) >= sep2 {
                    continue;
                }
                let (rr, cc) = (row as isize + dr, col as isize + dc);
                if rr >= 0 && cc >= 0 && (rr as usize) < size && (cc as usize) < size && occupied[rr as usize * size + cc as usize] {
                    return false;
                }
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::render_disk;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn kinds() -> Vec<ShapeKind> {
        vec![
            ShapeKind::Circle,
            ShapeKind::Ellipse { aspect: 0.5 },
            ShapeKind::RoundedRectangle { half_width: 1.0, half_height: 0.6, corner: 0.2 },
            ShapeKind::RoundedTriangle { corner: 0.15 },
            ShapeKind::Capsule { half_length: 0.7, radius: 0.35 },
            ShapeKind::Cross { arm_length: 1.0, arm_width: 0.3, corner: 0.1 },
            ShapeKind::Blob { harmonics: vec![(0.15, 0.3), (0.1, 1.0)] },
        ]
    }

    #[test]
    fn sdf_sign_at_origin_and_far_away() {
        for k in kinds() {
            assert!(k.sdf([0.0, 0.0]) < 0.0, "{} origin", k.name());
            assert!(k.sdf([5.0, 5.0]) > 0.0, "{} far", k.name());
            // Extent bounds the shape.
            let e = k.extent();
            for i in 0..64 {
                let t = i as f64 / 64.0 * std::f64::consts::TAU;
                assert!(k.sdf([1.01 * e * t.cos(), 1.01 * e * t.sin()]) > 0.0, "{} outside extent", k.name());
            }
        }
    }

    #[test]
    fn triangle_distance_is_exact_on_axis() {
        // Base midpoint, apex and incenter of a unit-circumradius triangle.
        assert!((triangle([0.0, -0.5])).abs() < 1e-12);
        assert!((triangle([0.0, 1.0])).abs() < 1e-12);
        assert!((triangle([0.0, 0.0]) + 0.5).abs() < 1e-12);
    }

    fn spec_with(shapes: Vec<Shape>, sep: f64) -> PhantomSpec {
        PhantomSpec {
            center: [31.5, 31.5],
            radius: 28.0,
            brightness_coeffs: [1.0, 0.0, 0.0, 0.0],
            edge: (0.0, 2.0),
            fill: Fill::Shapes { shapes, min_separation: sep, edge_band: 1.5 },
            rng_seed: 3,
        }
    }

    #[test]
    fn zero_shapes_leave_disk_unchanged() {
        let spec = spec_with(vec![], 2.0);
        let disk = render_disk(&spec, 64).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (out, placement) = place_shapes(&disk, &spec, &mut rng).unwrap();
        assert_eq!(out, disk);
        assert!(placement.placed.is_empty() && placement.skipped.is_empty());
    }

    #[test]
    fn circle_hole_interior_is_air() {
        // A hole larger than any placement slack is forced to the center.
        let q = 10.0;
        let shape = Shape { kind: ShapeKind::Circle, scale: q, rotation_deg: 0.0, translation: [0.0, 0.0] };
        let spec = PhantomSpec { radius: 12.5, center: [31.5, 31.5], ..spec_with(vec![shape], 2.0) };
        let disk = render_disk(&spec, 64).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (out, placement) = place_shapes(&disk, &spec, &mut rng).unwrap();
        assert_eq!(placement.placed.len(), 1);
        let [hx, hy] = placement.placed[0].translation;
        let mut checked = 0;
        for row in 0..64 {
            for col in 0..64 {
                let d = (col as f64 - hx).hypot(row as f64 - hy);
                if d < q - 1.5 {
                    assert_eq!(out.get(row, col), 0.0);
                    checked += 1;
                }
            }
        }
        assert!(checked > 200);
    }

    #[test]
    fn impossible_shape_is_skipped() {
        let big = Shape { kind: ShapeKind::Circle, scale: 40.0, rotation_deg: 0.0, translation: [0.0, 0.0] };
        let spec = spec_with(vec![big], 2.0);
        let disk = render_disk(&spec, 64).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (out, placement) = place_shapes(&disk, &spec, &mut rng).unwrap();
        assert_eq!(placement.skipped, vec![0]);
        assert_eq!(out, disk);
    }

    #[test]
    fn wrong_fill_is_an_error() {
        let spec = PhantomSpec { fill: Fill::Empty, ..spec_with(vec![], 1.0) };
        let disk = render_disk(&spec, 64).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(place_shapes(&disk, &spec, &mut rng).is_err());
    }
}
