//! Differentiable 3D-aware image generation: learnt feature volumes, rigid
//! transforms with trilinear resampling, a learnt projection unit, AdaIN
//! modulation and multi-scale style discriminators, trained end-to-end on
//! unlabelled images.

pub mod data;
pub mod discriminator;
pub mod error;
pub mod generator;
pub mod geometry;
pub mod gradcheck;
pub mod init;
pub mod layers;
pub mod losses;
pub mod params;
pub mod tensor;
pub mod training;

pub use error::ModelError;
pub use params::ParamStore;
pub use tensor::{Real, Tape, Tensor, TensorError, Var};
