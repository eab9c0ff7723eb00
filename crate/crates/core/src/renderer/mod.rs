//! Rays, stratified sampling, transmittance and compositing.

mod camera;
mod compositing;
mod render;
mod sampling;

pub use camera::{generate_rays, Camera, Ray};
pub use compositing::{compute_weights, composite, CompositeOp, Composited, RaySampleBatch, WeightPerturbSpec, Weights};
pub use render::{
    ray_key, render_image, render_rays, sample_rays, AugmentedField, DensityNoise, RadianceSource, RaySamples,
    RaySummary, RenderAugment, RenderConfig, RenderOutput,
};
pub use sampling::{stratified_sample, SampleDepths};
