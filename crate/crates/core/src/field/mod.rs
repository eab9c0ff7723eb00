//! The radiance field shared by teacher and student.

mod checkpoint;
mod ema;
mod encoding;
mod network;
mod sensitivity;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use ema::ema_update;
pub use encoding::{encoded_len, positional_encode};
pub use network::{
    bias_name, weight_name, DropoutSpec, FieldAugment, FieldBatch, FieldConfig, FieldOutput, FieldParams,
    FieldSample, FieldVars, LayerInfo, LayerNoiseSpec, HEAD_RGB, HEAD_SIGMA,
};
pub use sensitivity::{layer_sensitivity, SensitivityReport};
