use rand::Rng;

use super::{smoothstep_unchecked, Fill, PhantomSpec};
use crate::error::{Error, Result};
use crate::image::Image;

/// Darkens the walls between Voronoi cells of the spec's seed points.
///
/// With `d1 <= d2` the distances from a pixel to its two nearest seeds, the
/// disk value is multiplied by
/// `smoothstep(d2 - d1, border_radius, border_radius + corner_smoothing)`.
/// Seeds are drawn uniformly inside the disk when the spec lists none.
pub fn voronoi_fill<R: Rng + ?Sized>(disk: &Image, spec: &PhantomSpec, rng: &mut R) -> Result<Image> {
    let Fill::Voronoi { num_seeds, seed_points, border_radius, corner_smoothing } = &spec.fill else {
        return Err(Error::InvalidArgument("voronoi_fill needs a Voronoi fill".into()));
    };
    let seeds: Vec<[f64; 2]> = if seed_points.is_empty() {
        (0..*num_seeds)
            .map(|_| {
                let rho = spec.radius * rng.random::<f64>().sqrt();
                let phi = rng.random::<f64>() * std::f64::consts::TAU;
                [spec.center[0] + rho * phi.cos(), spec.center[1] + rho * phi.sin()]
            })
            .collect()
    } else {
        seed_points.clone()
    };
    if seeds.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "Voronoi fill needs at least 2 seeds, got {}",
            seeds.len()
        )));
    }
    let lo = border_radius.max(0.0);
    let hi = lo + corner_smoothing.max(1e-9);

    let mut out = disk.clone();
    let size = disk.size();
    for row in 0..size {
        for col in 0..size {
            let v = disk.get(row, col);
            if v == 0.0 {
                continue;
            }
            let (x, y) = (col as f64, row as f64);
            let (mut d1, mut d2) = (f64::INFINITY, f64::INFINITY);
            for s in &seeds {
                let d = (x - s[0]).hypot(y - s[1]);
                if d < d1 {
                    d2 = d1;
                    d1 = d;
                } else if d < d2 {
                    d2 = d;
                }
            }
            let wall = smoothstep_unchecked(d2 - d1, lo, hi);
            out.set(row, col, v * wall as f32);
        }
    }
    Ok(out)
}
