use lact_core::fbp::{fbp_reconstruct, FilterSpec};
use lact_core::projector::extract_window;
use lact_core::{AngularWindow, Image, Sinogram};
use lact_nn::rotate::rotate_plane;
use lact_nn::{Model, Tensor};

use crate::data::Sample;
use crate::error::Result;
use crate::input::prepare_input;

/// Samples per forward pass when reconstructing many windows.
pub const EVAL_CHUNK: usize = 16;

/// Anything that turns a windowed sinogram into a world-frame image.
pub trait Reconstructor {
    fn reconstruct(&mut self, sample: &Sample, w: &AngularWindow) -> Result<Image>;

    fn reconstruct_all(&mut self, items: &[(&Sample, AngularWindow)]) -> Result<Vec<Image>> {
        items.iter().map(|(s, w)| self.reconstruct(s, w)).collect()
    }
}

/// Eval-mode network prediction rotated back by the window start angle.
pub struct ModelReconstructor<'a> {
    model: &'a mut Model<f32>,
}

impl<'a> ModelReconstructor<'a> {
    pub fn new(model: &'a mut Model<f32>) -> Self {
        Self { model }
    }
}

impl Reconstructor for ModelReconstructor<'_> {
    fn reconstruct(&mut self, sample: &Sample, w: &AngularWindow) -> Result<Image> {
        Ok(reconstruct_batch(self.model, &[(&sample.sino, *w)])?.remove(0))
    }

    fn reconstruct_all(&mut self, items: &[(&Sample, AngularWindow)]) -> Result<Vec<Image>> {
        let sinos: Vec<(&Sinogram, AngularWindow)> = items.iter().map(|(s, w)| (&s.sino, *w)).collect();
        let mut out = Vec::with_capacity(items.len());
        for chunk in sinos.chunks(EVAL_CHUNK) {
            out.extend(reconstruct_batch(self.model, chunk)?);
        }
        Ok(out)
    }
}

/// Reconstructs each `(sinogram, window)` pair in one eval-mode batch.
/// Sinograms may be full scans or already windowed, as long as the window's
/// rows are present.
pub fn reconstruct_batch(model: &mut Model<f32>, items: &[(&Sinogram, AngularWindow)]) -> Result<Vec<Image>> {
    let inputs = items
        .iter()
        .map(|(s, w)| prepare_input(s, w, model.config()))
        .collect::<Result<Vec<_>>>()?;
    let out = model.predict(Tensor::stack(&inputs)?)?;
    let n = model.config().output_size;
    let mut images = Vec::with_capacity(items.len());
    for (plane, (_, w)) in out.data().chunks_exact(n * n).zip(items) {
        let mut rotated = vec![0.0f32; n * n];
        rotate_plane(plane, n, w.alpha_deg, &mut rotated);
        images.push(Image::from_vec(n, rotated)?);
    }
    Ok(images)
}

/// Filtered back projection of the window alone.
pub struct FbpReconstructor {
    pub filter: FilterSpec,
}

impl Default for FbpReconstructor {
    fn default() -> Self {
        Self { filter: FilterSpec::hann(1.0) }
    }
}

impl Reconstructor for FbpReconstructor {
    fn reconstruct(&mut self, sample: &Sample, w: &AngularWindow) -> Result<Image> {
        let win = extract_window(&sample.sino, w)?;
        let geom = *win.geometry();
        Ok(fbp_reconstruct(&win, &geom, &self.filter)?)
    }
}

/// Returns the ground truth; an upper bound for scoring.
pub struct PerfectReconstructor;

impl Reconstructor for PerfectReconstructor {
    fn reconstruct(&mut self, sample: &Sample, _w: &AngularWindow) -> Result<Image> {
        Ok(sample.image.clone())
    }
}
