//! Ablation drivers: angular-range, positional, added-shape and
//! dataset-size experiments. Each returns rows ready for [`write_csv`].
//!
//! [`write_csv`]: crate::eval::write_csv

use lact_core::phantom::{self, DatasetManifest, PhantomSpec};
use lact_core::projector;
use lact_core::geometry::level_range_deg;
use lact_nn::Model;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::data::{sample_id, Dataset, Sample};
use crate::error::{Error, Result};
use crate::eval::{evaluate_span, EvalStart};
use crate::recon::{ModelReconstructor, Reconstructor};
use crate::trainer::{Outputs, Trainer};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpanRow {
    pub range_deg: f64,
    pub mcc_mean: f64,
    pub psnr_mean: f64,
    pub ssim_mean: f64,
}

/// Scores every span from `lo` to `hi` in `step` increments.
pub fn angular_sweep<R: Reconstructor + ?Sized>(
    rec: &mut R,
    samples: &[Sample],
    (lo, hi, step): (f64, f64, f64),
    start: EvalStart,
    angle_step_deg: f64,
) -> Result<Vec<SpanRow>> {
    if !(step > 0.0 && lo <= hi) {
        return Err(Error::Config(format!("bad sweep range {lo}..{hi} step {step}")));
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    (0..count)
        .map(|k| {
            let span = lo + k as f64 * step;
            Ok(span_row(span, &evaluate_span(rec, samples, span, start, angle_step_deg)?))
        })
        .collect()
}

fn span_row(range_deg: f64, scores: &[lact_core::metrics::SampleScore]) -> SpanRow {
    let n = scores.len().max(1) as f64;
    SpanRow {
        range_deg,
        mcc_mean: scores.iter().map(|s| s.mcc).sum::<f64>() / n,
        psnr_mean: scores.iter().map(|s| s.psnr_db).sum::<f64>() / n,
        ssim_mean: scores.iter().map(|s| s.ssim).sum::<f64>() / n,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionRow {
    pub offset_px: f64,
    pub range_deg: f64,
    pub mcc_mean: f64,
    pub psnr_mean: f64,
    pub ssim_mean: f64,
}

/// Phantom `spec` recentred at `(mid + offset, mid)` with its radius capped
/// at `max_radius`. A capped disk keeps its brightness profile, compressed
/// radially.
pub fn shifted_spec(spec: &PhantomSpec, image_size: usize, offset_px: f64, max_radius: f64) -> PhantomSpec {
    let mid = 0.5 * (image_size as f64 - 1.0);
    let mut s = spec.clone();
    s.center = [mid + offset_px, mid];
    if s.radius > max_radius {
        let k = s.radius / max_radius;
        for (p, c) in s.brightness_coeffs.iter_mut().enumerate() {
            *c *= k.powi(p as i32);
        }
        s.edge.1 = s.edge.1.min(max_radius);
        s.radius = max_radius;
    }
    s
}

/// Renders and projects the first `manifest.count` phantoms with their
/// centers shifted horizontally by `offset_px`.
pub fn shifted_samples(manifest: &DatasetManifest, offset_px: f64, max_radius: f64) -> Result<Vec<Sample>> {
    let geom = manifest
        .geometry
        .ok_or_else(|| Error::Input("sweep manifest has no acquisition geometry".into()))?;
    (0..manifest.count)
        .into_par_iter()
        .map(|i| {
            let spec = shifted_spec(&phantom::sample_spec(manifest, i), manifest.image_size, offset_px, max_radius);
            let image = spec.render(manifest.image_size)?;
            let sino = projector::forward_project(&image, &geom)?;
            let sino = projector::add_noise(&sino, manifest.noise_sigma, phantom::derive_seed(!manifest.master_seed, i as u64))?;
            Ok(Sample { id: sample_id(i), image, sino })
        })
        .collect()
}

/// Scores phantoms translated horizontally by each offset. Disk radii are
/// capped so that the largest offset still fits the grid.
pub fn position_sweep<R: Reconstructor + ?Sized>(
    rec: &mut R,
    manifest: &DatasetManifest,
    offsets_px: &[f64],
    span_deg: f64,
    start: EvalStart,
) -> Result<Vec<PositionRow>> {
    let mid = 0.5 * (manifest.image_size as f64 - 1.0);
    let reach = offsets_px.iter().fold(0.0f64, |m, o| m.max(o.abs()));
    let max_radius = mid - reach - 0.5;
    if max_radius < 0.25 * mid {
        return Err(Error::Config(format!("offset {reach} px leaves no room for a disk")));
    }
    let step = manifest.geometry.map(|g| g.angle_step_deg).unwrap_or(0.5);
    offsets_px
        .iter()
        .map(|&o| {
            let samples = shifted_samples(manifest, o, max_radius)?;
            let r = span_row(span_deg, &evaluate_span(rec, &samples, span_deg, start, step)?);
            Ok(PositionRow {
                offset_px: o,
                range_deg: span_deg,
                mcc_mean: r.mcc_mean,
                psnr_mean: r.psnr_mean,
                ssim_mean: r.ssim_mean,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model: String,
    pub eval_set: String,
    pub level: u32,
    pub range_deg: f64,
    pub mcc_mean: f64,
}

/// Manifest whose phantoms are filled with crosses only.
pub fn cross_only(manifest: &DatasetManifest) -> DatasetManifest {
    let mut m = manifest.clone();
    m.shape_fraction = 1.0;
    m.voronoi_fraction = 0.0;
    m.ranges.cross_weight = 1e9;
    m.ranges.shape_count = (m.ranges.shape_count.0.max(1), m.ranges.shape_count.1.max(1));
    m
}

/// Scores each named model on each named evaluation set at every level.
pub fn compare_models(
    models: &mut [(String, Model<f32>)],
    eval_sets: &[(String, Vec<Sample>)],
    levels: &[usize],
    start: EvalStart,
    angle_step_deg: f64,
) -> Result<Vec<ComparisonRow>> {
    let mut rows = Vec::new();
    for (name, model) in models.iter_mut() {
        let mut rec = ModelReconstructor::new(model);
        for (set, samples) in eval_sets {
            for &level in levels {
                let span = level_range_deg(level).ok_or_else(|| Error::Config(format!("no difficulty level {level}")))?;
                let scores = evaluate_span(&mut rec, samples, span, start, angle_step_deg)?;
                rows.push(ComparisonRow {
                    model: name.clone(),
                    eval_set: set.clone(),
                    level: level as u32,
                    range_deg: span,
                    mcc_mean: span_row(span, &scores).mcc_mean,
                });
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasizeRow {
    pub train_size: usize,
    pub steps: u64,
    pub range_deg: f64,
    pub mcc_mean: f64,
}

/// Trains one model per dataset size for the same number of parameter
/// updates, then scores each on `eval` at `span_deg`.
pub fn datasize_sweep(
    base: &TrainConfig,
    data: &Dataset,
    sizes: &[usize],
    steps: u64,
    eval: &[Sample],
    span_deg: f64,
    start: EvalStart,
) -> Result<Vec<DatasizeRow>> {
    let step_deg = data.geometry().angle_step_deg;
    sizes
        .iter()
        .map(|&n| {
            if n == 0 || n > data.len() {
                return Err(Error::Config(format!("train size {n} outside 1..={}", data.len())));
            }
            let cfg = TrainConfig { max_steps: Some(steps), eval_every: 0, ..base.clone() };
            let mut t = Trainer::new(cfg, step_deg)?;
            t.fit(&data.samples[..n], &[], &Outputs::default())?;
            log::info!("datasize {n}: trained {} steps", t.step());
            let scores = evaluate_span(&mut ModelReconstructor::new(t.model_mut()), eval, span_deg, start, step_deg)?;
            Ok(DatasizeRow { train_size: n, steps, range_deg: span_deg, mcc_mean: span_row(span_deg, &scores).mcc_mean })
        })
        .collect()
}
