//! Limited-angle fan-beam CT toolkit: acquisition geometry, the discrete
//! projector and its adjoint, synthetic phantoms, filtered back projection,
//! challenge metrics and the binary file formats shared by the pipeline.

pub mod error;
pub mod geometry;
pub mod image;
pub mod fbp;
pub mod io;
pub mod metrics;
pub mod phantom;
pub mod projector;

pub use error::{Error, Result};
pub use geometry::{AngularWindow, FanBeamGeometry};
pub use image::{Image, Provenance, Sinogram};
