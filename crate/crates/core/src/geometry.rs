//! Flat-detector fan-beam acquisition geometry.
//!
//! World coordinates are millimetres with the rotation center at the
//! origin, `x` pointing right and `y` pointing up. The object is fixed while
//! source and detector rotate counterclockwise; at angle 0 the source sits on
//! the `+x` axis. Pixel `(row, col)` of an `N x N` image has its center at
//! `x = (col - (N-1)/2) * s`, `y = ((N-1)/2 - row) * s`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when deciding whether an angle lies on the acquisition grid.
const GRID_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FanBeamGeometry {
    pub num_detectors: usize,
    /// Detector cell pitch in mm.
    pub detector_pixel_size: f64,
    pub source_to_center: f64,
    pub center_to_detector: f64,
    pub num_angles: usize,
    pub angle_start_deg: f64,
    pub angle_step_deg: f64,
    /// Side length of the square reconstruction grid in pixels.
    pub image_size: usize,
    /// Pixel pitch of the reconstruction grid in mm.
    pub image_pixel_size: f64,
}

impl Default for FanBeamGeometry {
    fn default() -> Self {
        Self::desk()
    }
}

impl FanBeamGeometry {
    /// Desk-scale geometry: a 128x128 grid covering a 70 mm field of view,
    /// full 360° scan at 0.5° steps (721 rows).
    pub fn desk() -> Self {
        Self {
            num_detectors: 140,
            detector_pixel_size: 0.7,
            source_to_center: 410.0,
            center_to_detector: 140.0,
            num_angles: 721,
            angle_start_deg: 0.0,
            angle_step_deg: 0.5,
            image_size: 128,
            image_pixel_size: 0.547,
        }
    }

    /// Same physical setup as [`desk`](Self::desk) resampled to an
    /// `image_size` grid and `num_detectors` cells spanning the same detector
    /// width.
    pub fn desk_scaled(image_size: usize, num_detectors: usize) -> Self {
        let base = Self::desk();
        let fov = base.image_size as f64 * base.image_pixel_size;
        let width = base.num_detectors as f64 * base.detector_pixel_size;
        Self {
            num_detectors,
            detector_pixel_size: width / num_detectors as f64,
            image_size,
            image_pixel_size: fov / image_size as f64,
            ..base
        }
    }

    pub fn with_angles(mut self, angle_start_deg: f64, angle_step_deg: f64, num_angles: usize) -> Self {
        self.angle_start_deg = angle_start_deg;
        self.angle_step_deg = angle_step_deg;
        self.num_angles = num_angles;
        self
    }

    /// Number of rows of a full scan over `span_deg` degrees with both
    /// endpoints included.
    pub fn rows_for_span(span_deg: f64, step_deg: f64) -> usize {
        (span_deg / step_deg).round() as usize + 1
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("detector_pixel_size", self.detector_pixel_size),
            ("source_to_center", self.source_to_center),
            ("center_to_detector", self.center_to_detector),
            ("angle_step_deg", self.angle_step_deg),
            ("image_pixel_size", self.image_pixel_size),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidGeometry(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.angle_start_deg.is_finite() {
            return Err(Error::InvalidGeometry("angle_start_deg must be finite".into()));
        }
        if self.num_detectors == 0 || self.num_angles == 0 || self.image_size == 0 {
            return Err(Error::InvalidGeometry(
                "num_detectors, num_angles and image_size must be at least 1".into(),
            ));
        }
        let required = self.required_half_fan_deg();
        let half_fan = self.half_fan_deg();
        if !required.is_finite() || half_fan < required {
            return Err(Error::FanCoverage {
                half_fan_deg: half_fan,
                required_deg: required,
            });
        }
        Ok(())
    }

    pub fn source_to_detector(&self) -> f64 {
        self.source_to_center + self.center_to_detector
    }

    /// Half opening angle of the fan subtended by the detector row.
    pub fn half_fan_deg(&self) -> f64 {
        let half_width = 0.5 * self.num_detectors as f64 * self.detector_pixel_size;
        (half_width / self.source_to_detector()).atan().to_degrees()
    }

    /// Half angle under which the inscribed circle of the image grid is seen
    /// from the source. NaN when the source lies inside that circle.
    pub fn required_half_fan_deg(&self) -> f64 {
        (self.fov_radius() / self.source_to_center).asin().to_degrees()
    }

    /// Radius of the circle inscribed in the image grid, in mm.
    pub fn fov_radius(&self) -> f64 {
        0.5 * self.image_size as f64 * self.image_pixel_size
    }

    pub fn num_pixels(&self) -> usize {
        self.image_size * self.image_size
    }

    pub fn sinogram_len(&self) -> usize {
        self.num_angles * self.num_detectors
    }

    pub fn angle_deg(&self, row: usize) -> f64 {
        self.angle_start_deg + row as f64 * self.angle_step_deg
    }

    /// Unit vector from the rotation center towards the source.
    pub fn source_direction(&self, row: usize) -> [f64; 2] {
        let theta = self.angle_deg(row).to_radians();
        [theta.cos(), theta.sin()]
    }

    pub fn source_position(&self, row: usize) -> [f64; 2] {
        let [c, s] = self.source_direction(row);
        [self.source_to_center * c, self.source_to_center * s]
    }

    /// Signed detector coordinate (mm) of the center of cell `k` along the
    /// detector axis `(-sin θ, cos θ)`.
    pub fn detector_offset(&self, k: usize) -> f64 {
        (k as f64 - 0.5 * (self.num_detectors as f64 - 1.0)) * self.detector_pixel_size
    }

    pub fn detector_cell_center(&self, row: usize, k: usize) -> [f64; 2] {
        let [c, s] = self.source_direction(row);
        let u = self.detector_offset(k);
        [-self.center_to_detector * c - u * s, -self.center_to_detector * s + u * c]
    }

    /// World coordinates of the center of pixel `(row, col)`.
    pub fn pixel_center(&self, row: usize, col: usize) -> [f64; 2] {
        let c = 0.5 * (self.image_size as f64 - 1.0);
        [
            (col as f64 - c) * self.image_pixel_size,
            (c - row as f64) * self.image_pixel_size,
        ]
    }

    /// Row index of `angle_deg` on this geometry's angle grid, if it lies on it.
    pub fn row_of_angle(&self, angle_deg: f64) -> Option<usize> {
        let r = (angle_deg - self.angle_start_deg) / self.angle_step_deg;
        let ri = r.round();
        if (r - ri).abs() > GRID_TOL || ri < 0.0 || ri as usize >= self.num_angles {
            None
        } else {
            Some(ri as usize)
        }
    }

    pub fn same_acquisition(&self, other: &Self) -> bool {
        self.num_detectors == other.num_detectors
            && self.detector_pixel_size == other.detector_pixel_size
            && self.source_to_center == other.source_to_center
            && self.center_to_detector == other.center_to_detector
            && self.image_size == other.image_size
            && self.image_pixel_size == other.image_pixel_size
    }
}

/// Contiguous range of acquisition angles `[alpha, beta]` in degrees, both
/// endpoints included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngularWindow {
    pub alpha_deg: f64,
    pub beta_deg: f64,
}

impl AngularWindow {
    pub const MIN_SPAN_DEG: f64 = 30.0;
    pub const MAX_SPAN_DEG: f64 = 90.0;

    /// A limited-angle window: `30 <= beta - alpha <= 90`, no wrap-around
    /// past 360°.
    pub fn new(alpha_deg: f64, beta_deg: f64) -> Result<Self> {
        let w = Self::span(alpha_deg, beta_deg)?;
        let span = w.span_deg();
        if span < Self::MIN_SPAN_DEG - GRID_TOL || span > Self::MAX_SPAN_DEG + GRID_TOL {
            return Err(w.invalid(format!(
                "span {span}° outside [{}, {}]",
                Self::MIN_SPAN_DEG,
                Self::MAX_SPAN_DEG
            )));
        }
        Ok(w)
    }

    /// Any non-wrapping window within `[0, 360]`, without the limited-angle
    /// span restriction (full scans, FBP comparisons).
    pub fn span(alpha_deg: f64, beta_deg: f64) -> Result<Self> {
        let w = Self { alpha_deg, beta_deg };
        if !(alpha_deg.is_finite() && beta_deg.is_finite()) {
            return Err(w.invalid("angles must be finite".into()));
        }
        if beta_deg < alpha_deg {
            return Err(w.invalid("beta precedes alpha".into()));
        }
        if alpha_deg < -GRID_TOL || beta_deg > 360.0 + GRID_TOL {
            return Err(w.invalid("window must lie within [0°, 360°]".into()));
        }
        Ok(w)
    }

    pub fn span_deg(&self) -> f64 {
        self.beta_deg - self.alpha_deg
    }

    /// Number of sinogram rows the window covers at `step_deg`.
    pub fn num_rows(&self, step_deg: f64) -> usize {
        FanBeamGeometry::rows_for_span(self.span_deg(), step_deg)
    }

    /// Checks that both endpoints are multiples of `step_deg`.
    pub fn check_grid(&self, step_deg: f64) -> Result<()> {
        for a in [self.alpha_deg, self.beta_deg] {
            let r = a / step_deg;
            if (r - r.round()).abs() > GRID_TOL {
                return Err(self.invalid(format!("{a}° is not a multiple of the {step_deg}° step")));
            }
        }
        Ok(())
    }

    fn invalid(&self, reason: String) -> Error {
        Error::InvalidWindow {
            alpha: self.alpha_deg,
            beta: self.beta_deg,
            reason,
        }
    }
}

impl std::fmt::Display for AngularWindow {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.alpha_deg, self.beta_deg)
    }
}

impl std::str::FromStr for AngularWindow {
    type Err = Error;

    /// Parses `"A:B"` in degrees. Only the ordering and `[0, 360]` bounds are
    /// checked here.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("expected range \"A:B\" in degrees, got {s:?}"));
        let (a, b) = s.split_once(':').ok_or_else(bad)?;
        let a: f64 = a.trim().parse().map_err(|_| bad())?;
        let b: f64 = b.trim().parse().map_err(|_| bad())?;
        Self::span(a, b)
    }
}

/// The seven difficulty levels: level `k` keeps `90 - 10 (k - 1)` degrees.
pub const LEVEL_RANGES_DEG: [f64; 7] = [90.0, 80.0, 70.0, 60.0, 50.0, 40.0, 30.0];

pub fn level_range_deg(level: usize) -> Option<f64> {
    LEVEL_RANGES_DEG.get(level.checked_sub(1)?).copied()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_geometry_is_valid() {
        FanBeamGeometry::desk().validate().unwrap();
        FanBeamGeometry::desk_scaled(64, 70).validate().unwrap();
        FanBeamGeometry::desk_scaled(32, 140).validate().unwrap();
    }

    #[test]
    fn full_scan_has_721_rows() {
        let g = FanBeamGeometry::desk();
        assert_eq!(FanBeamGeometry::rows_for_span(360.0, 0.5), 721);
        assert_eq!(g.num_angles, 721);
        assert_eq!(g.angle_deg(720), 360.0);
    }

    #[test]
    fn narrow_detector_violates_fan_coverage() {
        let g = FanBeamGeometry {
            detector_pixel_size: 0.4,
            ..FanBeamGeometry::desk()
        };
        assert!(matches!(g.validate(), Err(Error::FanCoverage { .. })));
    }

    #[test]
    fn nonpositive_lengths_rejected() {
        let g = FanBeamGeometry {
            source_to_center: 0.0,
            ..FanBeamGeometry::desk()
        };
        assert!(matches!(g.validate(), Err(Error::InvalidGeometry(_))));
        let g = FanBeamGeometry {
            num_angles: 0,
            ..FanBeamGeometry::desk()
        };
        assert!(g.validate().is_err());
    }

    #[test]
    fn source_starts_on_positive_x_and_rotates_ccw() {
        let g = FanBeamGeometry::desk();
        let s0 = g.source_position(0);
        assert!((s0[0] - 410.0).abs() < 1e-12 && s0[1].abs() < 1e-12);
        let s90 = g.source_position(180);
        assert!(s90[0].abs() < 1e-9 && (s90[1] - 410.0).abs() < 1e-9);
        // The central detector cell sits opposite the source.
        let g1 = FanBeamGeometry {
            num_detectors: 141,
            ..g
        };
        let d = g1.detector_cell_center(0, 70);
        assert!((d[0] + 140.0).abs() < 1e-12 && d[1].abs() < 1e-12);
    }

    #[test]
    fn window_span_limits() {
        assert!(AngularWindow::new(0.0, 30.0).is_ok());
        assert!(AngularWindow::new(10.0, 100.0).is_ok());
        assert!(AngularWindow::new(0.0, 29.5).is_err());
        assert!(AngularWindow::new(0.0, 90.5).is_err());
        assert!(AngularWindow::new(300.0, 361.0).is_err());
        assert!(AngularWindow::span(0.0, 359.5).is_ok());
        assert!(AngularWindow::span(20.0, 10.0).is_err());
    }

    #[test]
    fn window_parse() {
        let w: AngularWindow = "10:50".parse().unwrap();
        assert_eq!(w, AngularWindow { alpha_deg: 10.0, beta_deg: 50.0 });
        assert!("10-50".parse::<AngularWindow>().is_err());
        assert!("a:b".parse::<AngularWindow>().is_err());
        assert!(w.check_grid(0.5).is_ok());
        let off = AngularWindow::span(0.25, 40.0).unwrap();
        assert!(off.check_grid(0.5).is_err());
    }

    #[test]
    fn level_table() {
        let rows: Vec<usize> = (1..=7)
            .map(|l| FanBeamGeometry::rows_for_span(level_range_deg(l).unwrap(), 0.5))
            .collect();
        assert_eq!(rows, vec![181, 161, 141, 121, 101, 81, 61]);
        assert_eq!(level_range_deg(0), None);
        assert_eq!(level_range_deg(8), None);
    }
}
