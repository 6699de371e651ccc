//! Filtered back projection for flat-detector fan-beam data.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::FanBeamGeometry;
use crate::image::{Image, Provenance, Sinogram};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterKind {
    RamLak,
    Hann,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub kind: FilterKind,
    /// Fraction of the Nyquist frequency above which the response is zero.
    pub cutoff: f64,
}

impl Default for FilterSpec {
    fn default() -> Self {
        Self { kind: FilterKind::Hann, cutoff: 1.0 }
    }
}

impl FilterSpec {
    pub fn ram_lak() -> Self {
        Self { kind: FilterKind::RamLak, cutoff: 1.0 }
    }

    pub fn hann(cutoff: f64) -> Self {
        Self { kind: FilterKind::Hann, cutoff }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cutoff > 0.0 && self.cutoff <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "filter cutoff must lie in (0, 1], got {}",
                self.cutoff
            )));
        }
        Ok(())
    }

    /// Multiplier applied on top of the ramp at `f`, a fraction of Nyquist.
    fn window(&self, f: f64) -> f64 {
        if f > self.cutoff {
            return 0.0;
        }
        match self.kind {
            FilterKind::RamLak => 1.0,
            FilterKind::Hann => 0.5 * (1.0 + (PI * f / self.cutoff).cos()),
        }
    }
}

impl fmt::Display for FilterSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self.kind {
            FilterKind::RamLak => "ram-lak",
            FilterKind::Hann => "hann",
        };
        if self.cutoff == 1.0 {
            f.write_str(name)
        } else {
            write!(f, "{name}:{}", self.cutoff)
        }
    }
}

/// Parses `ram-lak`, `hann`, optionally followed by `:cutoff`.
impl FromStr for FilterSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, cutoff) = match s.split_once(':') {
            Some((n, c)) => (
                n,
                c.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidArgument(format!("bad filter cutoff {c:?}")))?,
            ),
            None => (s, 1.0),
        };
        let kind = match name.trim().to_ascii_lowercase().as_str() {
            "ram-lak" | "ramlak" | "ram_lak" | "ramp" => FilterKind::RamLak,
            "hann" | "hanning" => FilterKind::Hann,
            other => return Err(Error::InvalidArgument(format!("unknown filter {other:?}"))),
        };
        let spec = Self { kind, cutoff };
        spec.validate()?;
        Ok(spec)
    }
}

/// Length of the zero-padded rows used for filtering.
pub fn padded_len(num_detectors: usize) -> usize {
    (2 * num_detectors).next_power_of_two()
}

/// Frequency response of the band-limited ramp for sample spacing `delta`,
/// built from the spatial Ram-Lak kernel so a delta row reproduces it exactly.
fn ramp_response(len: usize, delta: f64, filter: &FilterSpec) -> Vec<Complex<f64>> {
    let mut h = vec![Complex::new(0.0, 0.0); len];
    h[0].re = 1.0 / (4.0 * delta * delta);
    for k in (1..len / 2).step_by(2) {
        let v = -1.0 / ((k * k) as f64 * PI * PI * delta * delta);
        h[k].re = v;
        h[len - k].re = v;
    }
    FftPlanner::new().plan_fft_forward(len).process(&mut h);
    h[0] = Complex::new(0.0, 0.0);
    for (i, c) in h.iter_mut().enumerate().skip(1) {
        let f = i.min(len - i) as f64 / (len as f64 / 2.0);
        *c = Complex::new(c.re * filter.window(f), 0.0);
    }
    h
}

struct RampFilter {
    response: Vec<Complex<f64>>,
    fwd: std::sync::Arc<dyn rustfft::Fft<f64>>,
    inv: std::sync::Arc<dyn rustfft::Fft<f64>>,
}

impl RampFilter {
    fn new(nd: usize, delta: f64, filter: &FilterSpec) -> Self {
        let len = padded_len(nd);
        let mut planner = FftPlanner::new();
        Self {
            response: ramp_response(len, delta, filter),
            fwd: planner.plan_fft_forward(len),
            inv: planner.plan_fft_inverse(len),
        }
    }

    /// Filters one row; the result covers the whole zero-padded length.
    fn apply_padded(&self, row: &[f64]) -> Vec<f64> {
        let len = self.response.len();
        let mut buf = vec![Complex::new(0.0, 0.0); len];
        for (b, &v) in buf.iter_mut().zip(row) {
            b.re = v;
        }
        self.fwd.process(&mut buf);
        for (b, h) in buf.iter_mut().zip(&self.response) {
            *b *= h.re;
        }
        self.inv.process(&mut buf);
        let scale = 1.0 / len as f64;
        buf.iter().map(|b| b.re * scale).collect()
    }
}

fn filter_rows(values: &mut [f64], nd: usize, delta: f64, filter: &FilterSpec) {
    let ramp = RampFilter::new(nd, delta, filter);
    values.par_chunks_mut(nd).for_each(|row| {
        let out = ramp.apply_padded(row);
        row.copy_from_slice(&out[..nd]);
    });
}

/// Ramp-filters a single row with sample spacing `delta` and returns the
/// full zero-padded result, wrap-around tail included.
pub fn ramp_filter_row_padded(row: &[f64], delta: f64, filter: &FilterSpec) -> Result<Vec<f64>> {
    filter.validate()?;
    if row.len() < 2 || !(delta > 0.0) {
        return Err(Error::InvalidArgument("ramp filtering needs at least 2 samples and a positive spacing".into()));
    }
    Ok(RampFilter::new(row.len(), delta, filter).apply_padded(row))
}

/// Convolves every row with the discrete ramp kernel for the geometry's
/// detector spacing. No spacing factor is applied, so a unit impulse maps
/// to the kernel itself.
pub fn ramp_filter_rows(sino: &Sinogram, filter: &FilterSpec) -> Result<Sinogram> {
    filter.validate()?;
    let g = *sino.geometry();
    if g.num_detectors < 2 {
        return Err(Error::InvalidArgument("ramp filtering needs at least 2 detectors".into()));
    }
    let mut values = sino.to_f64();
    filter_rows(&mut values, g.num_detectors, g.detector_pixel_size, filter);
    Sinogram::from_vec(g, values.into_iter().map(|v| v as f32).collect())
}

/// Flat-detector fan-beam FBP over the sinogram's angles.
///
/// Data are rescaled to a virtual detector through the rotation center, so
/// `a = du * Dso / Dsd` is the filtering pitch. Each pixel accumulates
/// `Δβ/2 · Q(u') / U²` with bilinear sampling of the filtered row `Q`.
pub fn fbp_reconstruct(sino: &Sinogram, geom: &FanBeamGeometry, filter: &FilterSpec) -> Result<Image> {
    filter.validate()?;
    geom.validate()?;
    sino.check_geometry(geom)?;
    let nd = geom.num_detectors;
    let na = geom.num_angles;
    let dso = geom.source_to_center;
    let dsd = dso + geom.center_to_detector;
    let a = geom.detector_pixel_size * dso / dsd;
    let mid = 0.5 * (nd as f64 - 1.0);

    let mut q = sino.to_f64();
    let weights: Vec<f64> = (0..nd)
        .map(|k| {
            let u = geom.detector_offset(k);
            dsd / (dsd * dsd + u * u).sqrt()
        })
        .collect();
    for row in q.chunks_mut(nd) {
        for (v, w) in row.iter_mut().zip(&weights) {
            *v *= w;
        }
    }
    filter_rows(&mut q, nd, a, filter);
    let half_step = 0.5 * geom.angle_step_deg.to_radians() * a;

    let trig: Vec<(f64, f64)> = (0..na).map(|i| geom.angle_deg(i).to_radians().sin_cos()).collect();
    let n = geom.image_size;
    let out: Vec<f32> = (0..n * n)
        .into_par_iter()
        .map(|idx| {
            let [x, y] = geom.pixel_center(idx / n, idx % n);
            let mut acc = 0.0;
            for (row, &(s, c)) in q.chunks(nd).zip(&trig) {
                // e points at the source, t along the detector.
                let along = x * c + y * s;
                let across = -x * s + y * c;
                let dist = dso - along;
                let u = across * dso / dist;
                let pos = u / a + mid;
                if pos < 0.0 || pos > (nd - 1) as f64 {
                    continue;
                }
                let k = (pos.floor() as usize).min(nd - 2);
                let t = pos - k as f64;
                let sample = row[k] * (1.0 - t) + row[k + 1] * t;
                let big_u = dist / dso;
                acc += sample / (big_u * big_u);
            }
            (acc * half_step) as f32
        })
        .collect();
    Ok(Image::from_vec(n, out)?.with_provenance(Provenance::Reconstruction))
}
