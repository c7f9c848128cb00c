//! Coordinate networks for fitting images: the subtractive modulative
//! network (SMN), three baselines, a reverse-mode tape to train them, and the
//! image and spectrum utilities around them.

pub mod ablation;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod filter;
pub mod gradcheck;
pub mod kernels;
pub mod model;
pub mod oscillator;
pub mod params;
pub mod probe;
pub mod rng;
pub mod signal;
pub mod tape;
pub mod tensor;
pub mod train;

pub use error::{ModelError, SignalError, TensorError};
pub use model::{build_model, Architecture, Model, ModelConfig};
pub use params::{Param, ParamStore};
pub use rng::Rng;
pub use tape::{Gradients, NodeId, Tape};
pub use tensor::ValueGrid;
pub use train::{fit, FitData, FitReport, TrainConfig};
