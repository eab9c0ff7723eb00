use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::camera::{generate_rays, Camera, Ray};
use super::compositing::{composite, RaySampleBatch, WeightPerturbSpec};
use super::sampling::stratified_sample;
use crate::error::{Error, Result};
use crate::field::{FieldAugment, FieldBatch, FieldParams};
use crate::image::ImageBuffer;
use crate::rng::{stream_rng, Stream};

/// Anything that maps sample points and view directions to density and
/// colour.
pub trait RadianceSource: Sync {
    fn query(&self, batch: &FieldBatch) -> Result<(Vec<f64>, Vec<[f64; 3]>)>;
}

impl RadianceSource for FieldParams {
    fn query(&self, batch: &FieldBatch) -> Result<(Vec<f64>, Vec<[f64; 3]>)> {
        self.evaluate_batch(batch, &FieldAugment::none())
    }
}

/// A field evaluated with dropout and/or layer noise.
pub struct AugmentedField<'a> {
    pub params: &'a FieldParams,
    pub augment: FieldAugment,
}

impl RadianceSource for AugmentedField<'_> {
    fn query(&self, batch: &FieldBatch) -> Result<(Vec<f64>, Vec<[f64; 3]>)> {
        self.params.evaluate_batch(batch, &self.augment)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderConfig {
    pub near: f64,
    pub far: f64,
    pub samples: usize,
    /// Stratified jitter; midpoints when off.
    pub jitter: bool,
    pub background: [f64; 3],
    /// Seed of the depth-jitter streams.
    pub seed: u64,
    /// Mixed into every per-ray stream so successive iterations differ.
    pub step: u64,
    pub chunk_rays: usize,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            near: 0.5,
            far: 3.5,
            samples: 64,
            jitter: false,
            background: [0.0; 3],
            seed: 0,
            step: 0,
            chunk_rays: 64,
        }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.near >= 0.0 && self.near < self.far) {
            return Err(Error::invalid(format!("need 0 ≤ near < far, got {} / {}", self.near, self.far)));
        }
        if self.samples == 0 || self.chunk_rays == 0 {
            return Err(Error::invalid("samples per ray and chunk size must be positive"));
        }
        Ok(())
    }
}

/// Uniform noise `u ~ U(−a, a)` added to every sample density, floored at 0.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensityNoise {
    pub amplitude: f64,
    pub seed: u64,
}

/// Render-side augmentations; field-side ones live in [`AugmentedField`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RenderAugment {
    pub weight_perturb: Option<WeightPerturbSpec>,
    pub density_noise: Option<DensityNoise>,
}

/// Per-ray outcome of rendering.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RaySummary {
    pub raw: [f64; 3],
    pub clipped: [f64; 3],
    pub weight_sum: f64,
    pub expected_depth: f64,
    pub final_transmittance: f64,
}

#[derive(Clone, Debug)]
pub struct RenderOutput {
    /// Clipped to `[0, 1]`.
    pub image: ImageBuffer,
    pub summaries: Vec<RaySummary>,
}

impl RenderOutput {
    /// Unclipped colours as an image.
    pub fn raw_image(&self) -> ImageBuffer {
        ImageBuffer::new(
            self.image.width(),
            self.image.height(),
            self.summaries.iter().map(|s| s.raw).collect(),
        )
        .expect("dims come from the rendered image")
    }
}

/// Key identifying a ray's random streams: its row-major pixel index.
pub fn ray_key(ray: &Ray, width: usize) -> u64 {
    (ray.pixel.1 * width + ray.pixel.0) as u64
}

/// Sample points for a set of rays, ray-major.
#[derive(Clone, Debug, Default)]
pub struct RaySamples {
    pub batch: FieldBatch,
    pub depths: Vec<f64>,
    pub deltas: Vec<f64>,
    pub samples: usize,
}

/// Stratified depths and the matching field query for each ray. `keys`
/// seeds the jitter and point streams; one key per ray.
pub fn sample_rays(rays: &[Ray], keys: &[u64], config: &RenderConfig) -> Result<RaySamples> {
    if keys.len() != rays.len() {
        return Err(Error::shape("sample_rays", format!("{} keys for {} rays", keys.len(), rays.len())));
    }
    let n = config.samples;
    let mut out = RaySamples {
        samples: n,
        ..Default::default()
    };
    out.batch.positions.reserve(rays.len() * n);
    for (ray, &key) in rays.iter().zip(keys) {
        let depths = if config.jitter {
            let mut rng = stream_rng(config.seed, Stream::Jitter, &[config.step, key]);
            stratified_sample(config.near, config.far, n, Some(&mut rng))?
        } else {
            stratified_sample::<crate::rng::StreamRng>(config.near, config.far, n, None)?
        };
        for (i, t) in depths.depths.iter().enumerate() {
            let o = ray.origin;
            let d = ray.direction;
            out.batch.positions.push([o[0] + t * d[0], o[1] + t * d[1], o[2] + t * d[2]]);
            out.batch.directions.push(d);
            out.batch.keys.push(key * n as u64 + i as u64);
        }
        out.depths.extend(depths.depths);
        out.deltas.extend(depths.deltas);
    }
    Ok(out)
}

/// Renders arbitrary rays; `keys` gives each ray's stream identity.
pub fn render_rays(
    source: &dyn RadianceSource,
    rays: &[Ray],
    keys: &[u64],
    config: &RenderConfig,
    augment: Option<&RenderAugment>,
) -> Result<Vec<RaySummary>> {
    config.validate()?;
    if keys.len() != rays.len() {
        return Err(Error::shape("render_rays", format!("{} keys for {} rays", keys.len(), rays.len())));
    }
    let chunks: Vec<Result<Vec<RaySummary>>> = rays
        .par_chunks(config.chunk_rays)
        .zip(keys.par_chunks(config.chunk_rays))
        .map(|(rays, keys)| render_chunk(source, rays, keys, config, augment))
        .collect();
    let mut out = Vec::with_capacity(rays.len());
    for c in chunks {
        out.extend(c?);
    }
    Ok(out)
}

fn render_chunk(
    source: &dyn RadianceSource,
    rays: &[Ray],
    keys: &[u64],
    config: &RenderConfig,
    augment: Option<&RenderAugment>,
) -> Result<Vec<RaySummary>> {
    let samples = sample_rays(rays, keys, config)?;
    let (mut sigmas, colors) = source.query(&samples.batch)?;
    let n = config.samples;
    let perturb = augment.and_then(|a| a.weight_perturb).filter(WeightPerturbSpec::is_active);
    let density_noise = augment.and_then(|a| a.density_noise).filter(|d| d.amplitude > 0.0);

    let mut out = Vec::with_capacity(rays.len());
    for (r, &key) in keys.iter().enumerate() {
        let range = r * n..(r + 1) * n;
        if let Some(noise) = density_noise {
            let mut rng = stream_rng(noise.seed, Stream::DensityNoise, &[config.step, key]);
            for s in &mut sigmas[range.clone()] {
                let u = rng.random_range(-noise.amplitude..noise.amplitude);
                *s = (*s + u).max(0.0);
            }
        }
        let batch = RaySampleBatch::new(
            samples.depths[range.clone()].to_vec(),
            samples.deltas[range.clone()].to_vec(),
            sigmas[range.clone()].to_vec(),
            colors[range].to_vec(),
        )?;
        let c = match perturb {
            Some(spec) => {
                let mut rng = stream_rng(spec.seed, Stream::WeightNoise, &[config.step, key]);
                let offsets = spec.draw_offsets(n, &mut rng);
                composite(&batch, Some(&offsets), spec.clamp, config.background)
            }
            None => composite(&batch, None, true, config.background),
        };
        out.push(RaySummary {
            raw: c.raw,
            clipped: c.clipped,
            weight_sum: batch.weight_sum(),
            expected_depth: batch.expected_depth(),
            final_transmittance: batch.final_transmittance,
        });
    }
    Ok(out)
}

/// Renders every pixel of `camera`.
pub fn render_image(
    source: &dyn RadianceSource,
    camera: &Camera,
    config: &RenderConfig,
    augment: Option<&RenderAugment>,
) -> Result<RenderOutput> {
    let rays = generate_rays(camera, None)?;
    let keys: Vec<u64> = rays.iter().map(|r| ray_key(r, camera.width())).collect();
    let summaries = render_rays(source, &rays, &keys, config, augment)?;
    let image = ImageBuffer::new(camera.width(), camera.height(), summaries.iter().map(|s| s.clipped).collect())?;
    Ok(RenderOutput { image, summaries })
}
