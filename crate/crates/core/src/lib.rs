//! Semi-supervised sparse-view radiance fields.
//!
//! A small MLP radiance field is pretrained on a handful of views, then
//! finetuned as a student under sparse-view degradations (τ-noise on
//! rendering weights and head-layer features, brightest-colour dilation)
//! against high-confidence pseudo-labels from an EMA teacher.

pub mod augment;
pub mod confidence;
mod error;
pub mod field;
pub mod harness;
pub mod image;
pub mod renderer;
pub mod rng;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use field::{FieldConfig, FieldParams};
pub use image::ImageBuffer;
pub use renderer::{Camera, RenderConfig};
pub use tensor::{GradientSet, NumericArray, ParameterStore};
