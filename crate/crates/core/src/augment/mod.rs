//! Sparse-view augmentations: τ-noise, the ω schedule, patch sampling and
//! brightest-colour dilation.

mod patch;
mod schedule;
mod tau;

pub use patch::{brightest_dilate, brightest_sources, sample_patch, Patch, PatchSpec};
pub use schedule::NoiseSchedule;
pub use tau::{sample_tau_with, tau_normalizer, tau_pdf, TauNoiseSampler, DEFAULT_BOUND};
