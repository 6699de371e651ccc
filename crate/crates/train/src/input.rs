use lact_core::projector::extract_window;
use lact_core::{AngularWindow, Image, Sinogram};
use lact_nn::{ModelConfig, Tensor};

use crate::error::{Error, Result};

/// Network input for the window `w` of a full-scan sinogram.
pub fn prepare_input(sino: &Sinogram, w: &AngularWindow, cfg: &ModelConfig) -> Result<Tensor<f32>> {
    prepare_windowed(&extract_window(sino, w)?, cfg)
}

/// Network input from an already windowed sinogram: its rows fill the top of
/// the `input_rows x input_cols` plane, the rest is zero. With the mask
/// channel enabled, channel 1 is 1 on the valid rows and 0 elsewhere.
pub fn prepare_windowed(windowed: &Sinogram, cfg: &ModelConfig) -> Result<Tensor<f32>> {
    let (m, nd) = (windowed.num_angles(), windowed.num_detectors());
    if nd != cfg.input_cols {
        return Err(Error::Input(format!(
            "sinogram has {nd} detectors, the model expects {}",
            cfg.input_cols
        )));
    }
    if m > cfg.input_rows {
        return Err(Error::Input(format!(
            "window covers {m} rows, the model accepts at most {}",
            cfg.input_rows
        )));
    }
    let plane = cfg.input_rows * nd;
    let mut data = vec![0.0f32; cfg.input_channels() * plane];
    data[..m * nd].copy_from_slice(windowed.values());
    if cfg.use_mask_channel {
        data[plane..plane + m * nd].fill(1.0);
    }
    Ok(Tensor::from_vec(&[1, cfg.input_channels(), cfg.input_rows, nd], data)?)
}

/// Recovers the `rows` valid sinogram rows from channel 0 of a prepared input.
pub fn valid_rows(input: &Tensor<f32>, rows: usize) -> Result<Vec<f32>> {
    let (_, _, h, w) = input.dims4()?;
    if rows > h {
        return Err(Error::Input(format!("{rows} rows requested from a {h}-row input")));
    }
    Ok(input.data()[..rows * w].to_vec())
}

pub fn image_to_tensor(image: &Image) -> Tensor<f32> {
    let n = image.size();
    Tensor::from_vec(&[1, 1, n, n], image.values().to_vec()).expect("image is n x n")
}

pub fn tensor_to_image(t: &Tensor<f32>) -> Result<Image> {
    let (b, c, h, w) = t.dims4()?;
    if b != 1 || c != 1 || h != w {
        return Err(Error::Input(format!("expected a 1x1xNxN tensor, got {:?}", t.shape())));
    }
    Ok(Image::from_vec(h, t.data().to_vec())?)
}
