//! Training and evaluation for the limited-angle reconstruction network:
//! window sampling, input padding and masking, the rotation-corrected loss,
//! per-level scoring and the ablation sweeps.

pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod input;
pub mod recon;
pub mod sweeps;
pub mod trainer;
pub mod window;

pub use config::TrainConfig;
pub use data::{Dataset, Sample};
pub use error::{Error, Result};
pub use eval::{evaluate_levels, evaluate_span, EvalStart, LevelScore};
pub use input::prepare_input;
pub use recon::{FbpReconstructor, ModelReconstructor, PerfectReconstructor, Reconstructor};
pub use trainer::{History, Outputs, Trainer};
pub use window::WindowSampler;
