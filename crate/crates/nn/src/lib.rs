//! Small reverse-mode autodiff engine over NCHW tensors and the
//! sinogram-to-image network built on it.

pub mod adam;
pub mod checkpoint;
pub mod conv;
pub mod error;
pub mod float;
pub mod gradcheck;
pub mod graph;
pub mod model;
pub mod params;
pub mod rotate;
pub mod tensor;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::Checkpoint;
pub use error::{Error, Result};
pub use float::Float;
pub use graph::{BatchNormStats, Graph, Var};
pub use model::{Model, ModelConfig};
pub use params::Params;
pub use tensor::Tensor;
