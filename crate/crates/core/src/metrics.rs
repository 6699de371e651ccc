//! Challenge scoring: mean thresholding, MCC, PSNR and SSIM.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    size: usize,
    values: Vec<bool>,
}

impl BinaryMask {
    pub fn from_vec(size: usize, values: Vec<bool>) -> Result<Self> {
        if values.len() != size * size {
            return Err(Error::SizeMismatch { what: "mask pixels", expected: size * size, found: values.len() });
        }
        Ok(Self { size, values })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn values(&self) -> &[bool] {
        &self.values
    }

    pub fn count(&self) -> usize {
        self.values.iter().filter(|&&v| v).count()
    }

    pub fn not(&self) -> Self {
        Self { size: self.size, values: self.values.iter().map(|v| !v).collect() }
    }

    pub fn to_image(&self) -> Image {
        let values = self.values.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect();
        Image::from_vec(self.size, values).expect("mask and image sizes agree")
    }
}

/// True where the pixel is strictly above the image mean.
pub fn threshold_mean(image: &Image) -> BinaryMask {
    let mean = image.mean();
    BinaryMask {
        size: image.size(),
        values: image.values().iter().map(|&v| v as f64 > mean).collect(),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

pub fn confusion(pred: &BinaryMask, gt: &BinaryMask) -> Result<Confusion> {
    if pred.size != gt.size {
        return Err(Error::SizeMismatch { what: "mask size", expected: gt.size, found: pred.size });
    }
    let mut c = Confusion::default();
    for (&p, &g) in pred.values.iter().zip(&gt.values) {
        match (p, g) {
            (true, true) => c.tp += 1,
            (false, false) => c.tn += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// Matthews correlation coefficient; 0 when any marginal is empty.
pub fn mcc(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    let c = confusion(pred, gt)?;
    let (tp, tn, fp, fn_) = (c.tp as f64, c.tn as f64, c.fp as f64, c.fn_ as f64);
    let den = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    if den == 0.0 {
        return Ok(0.0);
    }
    Ok((tp * tn - fp * fn_) / den.sqrt())
}

fn check_sizes(pred: &Image, gt: &Image) -> Result<()> {
    if pred.size() != gt.size() {
        return Err(Error::SizeMismatch { what: "image size", expected: gt.size(), found: pred.size() });
    }
    Ok(())
}

/// `max(gt) - min(gt)`, the default dynamic range.
pub fn data_range(gt: &Image) -> f64 {
    let (lo, hi) = gt.min_max();
    (hi - lo) as f64
}

pub fn mse(pred: &Image, gt: &Image) -> Result<f64> {
    check_sizes(pred, gt)?;
    let sum: f64 = pred
        .values()
        .iter()
        .zip(gt.values())
        .map(|(&p, &g)| {
            let d = p as f64 - g as f64;
            d * d
        })
        .sum();
    Ok(sum / gt.values().len() as f64)
}

/// Peak signal-to-noise ratio in dB; `f64::INFINITY` for identical images.
pub fn psnr(pred: &Image, gt: &Image, data_range: f64) -> Result<f64> {
    if !(data_range > 0.0) {
        return Err(Error::InvalidArgument(format!("data_range must be positive, got {data_range}")));
    }
    let m = mse(pred, gt)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (data_range * data_range / m).log10())
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Weighted means over every fully contained window, computed separably.
fn window_means(data: &[f64], n: usize, taps: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let m = n - SSIM_WINDOW + 1;
    let mut horiz = vec![0.0; n * m];
    for r in 0..n {
        for c in 0..m {
            horiz[r * m + c] = taps.iter().enumerate().map(|(k, t)| t * data[r * n + c + k]).sum();
        }
    }
    let mut out = vec![0.0; m * m];
    for r in 0..m {
        for c in 0..m {
            out[r * m + c] = taps.iter().enumerate().map(|(k, t)| t * horiz[(r + k) * m + c]).sum();
        }
    }
    out
}

/// Mean SSIM over all 11x11 Gaussian windows lying inside the image.
pub fn ssim(pred: &Image, gt: &Image, data_range: f64) -> Result<f64> {
    check_sizes(pred, gt)?;
    if !(data_range > 0.0) {
        return Err(Error::InvalidArgument(format!("data_range must be positive, got {data_range}")));
    }
    let n = gt.size();
    if n < SSIM_WINDOW {
        return Err(Error::InvalidArgument(format!("SSIM needs images of at least {SSIM_WINDOW} pixels, got {n}")));
    }
    let x = pred.to_f64();
    let y = gt.to_f64();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a * b).collect();
    let taps = gaussian_taps();
    let mx = window_means(&x, n, &taps);
    let my = window_means(&y, n, &taps);
    let mxx = window_means(&xx, n, &taps);
    let myy = window_means(&yy, n, &taps);
    let mxy = window_means(&xy, n, &taps);
    let c1 = (SSIM_K1 * data_range).powi(2);
    let c2 = (SSIM_K2 * data_range).powi(2);
    let total: f64 = (0..mx.len())
        .map(|i| {
            let (a, b) = (mx[i], my[i]);
            let vx = mxx[i] - a * a;
            let vy = myy[i] - b * b;
            let cov = mxy[i] - a * b;
            ((2.0 * a * b + c1) * (2.0 * cov + c2)) / ((a * a + b * b + c1) * (vx + vy + c2))
        })
        .sum();
    Ok(total / mx.len() as f64)
}

/// Sum of per-sample MCCs; a challenge level holds three samples.
pub fn score_level(preds: &[BinaryMask], gts: &[BinaryMask]) -> Result<f64> {
    if preds.len() != gts.len() {
        return Err(Error::SizeMismatch { what: "masks per level", expected: gts.len(), found: preds.len() });
    }
    preds.iter().zip(gts).map(|(p, g)| mcc(p, g)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleScore {
    pub mcc: f64,
    pub psnr_db: f64,
    pub ssim: f64,
}

/// Thresholds both images by their means, then scores them.
pub fn score_sample(pred: &Image, gt: &Image) -> Result<SampleScore> {
    let range = match data_range(gt) {
        r if r > 0.0 => r,
        _ => 1.0,
    };
    Ok(SampleScore {
        mcc: mcc(&threshold_mean(pred), &threshold_mean(gt))?,
        psnr_db: psnr(pred, gt, range)?,
        ssim: ssim(pred, gt, range)?,
    })
}

/// One line of the per-sample metrics CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub sample_id: String,
    pub level: u32,
    pub range_deg: f64,
    pub mcc: f64,
    pub psnr_db: f64,
    pub ssim: f64,
}
