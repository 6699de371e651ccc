use std::path::Path;

use lact_core::geometry::level_range_deg;
use lact_core::metrics::{score_sample, MetricsRow, SampleScore};
use lact_core::phantom::derive_seed;
use lact_core::AngularWindow;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::recon::Reconstructor;

/// How evaluation windows choose their start angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EvalStart {
    /// Every window starts here.
    Fixed(f64),
    /// Sample `i` starts at a grid angle drawn from `(seed, i)`, uniform
    /// over positions that avoid wrap-around.
    Seeded(u64),
}

impl EvalStart {
    pub fn window(&self, index: usize, span_deg: f64, step_deg: f64) -> Result<AngularWindow> {
        let alpha = match *self {
            EvalStart::Fixed(a) => a,
            EvalStart::Seeded(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, index as u64));
                let last = ((360.0 - span_deg) / step_deg + 1e-9).floor() as u64;
                rng.random_range(0..=last) as f64 * step_deg
            }
        };
        Ok(AngularWindow::span(alpha, alpha + span_deg)?)
    }
}

/// Aggregate scores of one difficulty level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelScore {
    pub level: u32,
    pub range_deg: f64,
    /// Sum of per-sample MCCs (the challenge score for that level).
    pub mcc_sum: f64,
    pub psnr_mean: f64,
    pub ssim_mean: f64,
}

impl LevelScore {
    pub fn from_scores(level: u32, range_deg: f64, scores: &[SampleScore]) -> Self {
        let n = scores.len().max(1) as f64;
        Self {
            level,
            range_deg,
            mcc_sum: scores.iter().map(|s| s.mcc).sum(),
            psnr_mean: scores.iter().map(|s| s.psnr_db).sum::<f64>() / n,
            ssim_mean: scores.iter().map(|s| s.ssim).sum::<f64>() / n,
        }
    }
}

/// Reconstructs every sample from a `span_deg` window and scores it against
/// its ground truth.
pub fn evaluate_span<R: Reconstructor + ?Sized>(
    rec: &mut R,
    samples: &[Sample],
    span_deg: f64,
    start: EvalStart,
    step_deg: f64,
) -> Result<Vec<SampleScore>> {
    let items = samples
        .iter()
        .enumerate()
        .map(|(i, s)| Ok((s, start.window(i, span_deg, step_deg)?)))
        .collect::<Result<Vec<_>>>()?;
    let preds = rec.reconstruct_all(&items)?;
    preds
        .iter()
        .zip(samples)
        .map(|(p, s)| Ok(score_sample(p, &s.image)?))
        .collect()
}

/// Scores the requested difficulty levels (1 = 90° ... 7 = 30°). Returns the
/// per-level aggregates and the per-sample rows.
pub fn evaluate_levels<R: Reconstructor + ?Sized>(
    rec: &mut R,
    samples: &[Sample],
    levels: &[usize],
    start: EvalStart,
    step_deg: f64,
) -> Result<(Vec<LevelScore>, Vec<MetricsRow>)> {
    let mut agg = Vec::with_capacity(levels.len());
    let mut rows = Vec::with_capacity(levels.len() * samples.len());
    for &level in levels {
        let range = level_range_deg(level).ok_or_else(|| Error::Config(format!("no difficulty level {level}")))?;
        let scores = evaluate_span(rec, samples, range, start, step_deg)?;
        for (s, sc) in samples.iter().zip(&scores) {
            rows.push(MetricsRow {
                sample_id: s.id.clone(),
                level: level as u32,
                range_deg: range,
                mcc: sc.mcc,
                psnr_db: sc.psnr_db,
                ssim: sc.ssim,
            });
        }
        agg.push(LevelScore::from_scores(level as u32, range, &scores));
    }
    Ok((agg, rows))
}

pub fn mean_mcc(scores: &[SampleScore]) -> f64 {
    scores.iter().map(|s| s.mcc).sum::<f64>() / scores.len().max(1) as f64
}

/// Writes serializable rows as a headed CSV file.
pub fn write_csv<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<T>, _>>()?)
}
