use std::sync::Arc;

use rand::Rng;

use crate::augment::{brightest_sources, Patch};
use crate::confidence::PseudoLabelSet;
use crate::error::{Error, Result};
use crate::field::{FieldAugment, FieldParams, FieldVars};
use crate::image::ImageBuffer;
use crate::renderer::{generate_rays, sample_rays, Camera, CompositeOp, Ray, RenderConfig, WeightPerturbSpec};
use crate::rng::{stream_rng, Stream};
use crate::tensor::{GradientSet, NumericArray, Tape, Var};

/// Ray keys of novel (pseudo-labelled) views start here so their noise
/// streams never collide with training-view rays.
pub const NOVEL_KEY_BASE: u64 = 1 << 40;

/// Rays rendered per tape; gradients of the chunks are summed in order.
const TAPE_CHUNK_RAYS: usize = 64;

/// Real rays from the sparse training views, each with its ground-truth
/// colour.
#[derive(Clone, Debug, Default)]
pub struct TrainBatch {
    pub rays: Vec<Ray>,
    pub keys: Vec<u64>,
    pub targets: Vec<[f64; 3]>,
}

impl TrainBatch {
    pub fn len(&self) -> usize {
        self.rays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rays.is_empty()
    }

    fn validate(&self) -> Result<()> {
        if self.keys.len() != self.rays.len() || self.targets.len() != self.rays.len() {
            return Err(Error::shape(
                "train batch",
                format!("{} rays, {} keys, {} targets", self.rays.len(), self.keys.len(), self.targets.len()),
            ));
        }
        Ok(())
    }
}

/// A square patch of a novel view. `targets[i]` is the pseudo label of
/// patch pixel `i` (row-major within the patch), `None` where the pixel is
/// not a selected label.
#[derive(Clone, Debug)]
pub struct PseudoBatch {
    pub camera: Camera,
    pub patch: Patch,
    pub targets: Vec<Option<[f64; 3]>>,
}

impl PseudoBatch {
    /// Attaches the labels of `labels` falling inside `patch`.
    pub fn from_labels(labels: &PseudoLabelSet, patch: Patch) -> Result<Self> {
        let (w, h) = (labels.camera.width(), labels.camera.height());
        if patch.pixels.iter().any(|&(x, y)| x >= w || y >= h) {
            return Err(Error::invalid("patch extends outside the novel view"));
        }
        let targets = patch.pixels.iter().map(|&(x, y)| labels.get(x, y).map(|l| l.rgb)).collect();
        Ok(Self {
            camera: labels.camera.clone(),
            patch,
            targets,
        })
    }

    pub fn supervised_count(&self) -> usize {
        self.targets.iter().flatten().count()
    }

    /// Every supervised pixel must be a selected label with the same colour.
    pub fn check_against(&self, labels: &PseudoLabelSet) -> Result<()> {
        if self.targets.len() != self.patch.pixels.len() {
            return Err(Error::shape("pseudo batch", "one target slot per patch pixel expected"));
        }
        for (&(x, y), t) in self.patch.pixels.iter().zip(&self.targets) {
            if let Some(rgb) = t {
                match labels.get(x, y) {
                    Some(l) if l.rgb == *rgb => {}
                    Some(_) => return Err(Error::invalid(format!("pseudo target at ({x}, {y}) differs from its label"))),
                    None => return Err(Error::invalid(format!("pixel ({x}, {y}) is not in the pseudo-label set"))),
                }
            }
        }
        Ok(())
    }
}

/// Augmentations applied to the student during one step.
#[derive(Clone, Debug, Default)]
pub struct StepAugment {
    pub field: FieldAugment,
    pub weight_perturb: Option<WeightPerturbSpec>,
    /// Brightest-colour dilation window on pseudo patches; 1 disables it.
    pub dilation_window: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConfig {
    /// Weight of the pseudo term; the real term gets `1 − mix`.
    pub mix: f64,
}

impl LossConfig {
    pub fn new(mix: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&mix) {
            return Err(Error::invalid(format!("pseudo/real mixing ratio must lie in [0, 1], got {mix}")));
        }
        Ok(Self { mix })
    }
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { mix: 0.5 }
    }
}

/// Records a differentiable render of `rays` and returns the raw
/// (pre-clip) colours `[rays, 3]`.
pub fn render_on_tape(
    params: &FieldParams,
    tape: &mut Tape,
    vars: &FieldVars,
    rays: &[Ray],
    keys: &[u64],
    config: &RenderConfig,
    field_augment: &FieldAugment,
    weight_perturb: Option<&WeightPerturbSpec>,
) -> Result<Var> {
    config.validate()?;
    let samples = sample_rays(rays, keys, config)?;
    let out = params.forward(tape, vars, &samples.batch, field_augment)?;
    let n = config.samples;
    let (offsets, clamp) = match weight_perturb.filter(|s| s.is_active()) {
        Some(spec) => {
            let mut offsets = Vec::with_capacity(rays.len() * n);
            for &key in keys {
                let mut rng = stream_rng(spec.seed, Stream::WeightNoise, &[config.step, key]);
                offsets.extend(spec.draw_offsets(n, &mut rng));
            }
            (Some(offsets), spec.clamp)
        }
        None => (None, true),
    };
    let op = CompositeOp {
        samples: n,
        deltas: samples.deltas,
        offsets,
        clamp,
        background: config.background,
    };
    tape.custom(vec![out.sigma, out.rgb], Arc::new(op))
}

fn targets_matrix(targets: &[[f64; 3]]) -> Result<NumericArray> {
    NumericArray::matrix(targets.len(), 3, targets.iter().flatten().copied().collect())
}

/// Mean squared error over rays and channels of `batch`, with its gradient.
/// Rays are rendered in chunks, one tape each.
pub fn real_loss_and_grad(
    params: &FieldParams,
    batch: &TrainBatch,
    config: &RenderConfig,
    augment: &StepAugment,
) -> Result<(f64, GradientSet)> {
    batch.validate()?;
    if batch.is_empty() {
        return Err(Error::invalid("empty training batch"));
    }
    let row_weight = 1.0 / (3.0 * batch.len() as f64);
    let mut loss = 0.0;
    let mut grads = GradientSet::zeros_like(params.store());
    for start in (0..batch.len()).step_by(TAPE_CHUNK_RAYS) {
        let end = (start + TAPE_CHUNK_RAYS).min(batch.len());
        let mut tape = Tape::new();
        let vars = params.register(&mut tape, true);
        let pred = render_on_tape(
            params,
            &mut tape,
            &vars,
            &batch.rays[start..end],
            &batch.keys[start..end],
            config,
            &augment.field,
            augment.weight_perturb.as_ref(),
        )?;
        let target = targets_matrix(&batch.targets[start..end])?;
        let l = tape.weighted_squared_error(pred, target, vec![row_weight; end - start])?;
        loss += tape.value(l).values()[0];
        grads.merge(&tape.backward(l)?);
    }
    Ok((loss, grads))
}

/// Records `Σ_selected Σ_c (pred − target)² / (3·|selected|)` where only rows
/// with a target contribute. Rows without a target get weight zero, so their
/// gradient is exactly zero.
pub fn masked_pseudo_loss(tape: &mut Tape, pred: Var, targets: &[Option<[f64; 3]>]) -> Result<Var> {
    let count = targets.iter().flatten().count();
    if count == 0 {
        return Err(Error::invalid("pseudo batch has no supervised pixel"));
    }
    let w = 1.0 / (3.0 * count as f64);
    let weights = targets.iter().map(|t| if t.is_some() { w } else { 0.0 }).collect();
    let dense: Vec<[f64; 3]> = targets.iter().map(|t| t.unwrap_or([0.0; 3])).collect();
    tape.weighted_squared_error(pred, targets_matrix(&dense)?, weights)
}

/// Pseudo term of the student loss and its gradient: the student renders
/// the whole patch, dilates its own rendering, and is compared with the
/// undilated labels at supervised pixels.
pub fn pseudo_loss_and_grad(
    params: &FieldParams,
    batch: &PseudoBatch,
    config: &RenderConfig,
    augment: &StepAugment,
) -> Result<(f64, GradientSet)> {
    let rays = generate_rays(&batch.camera, Some(&batch.patch.pixels))?;
    let width = batch.camera.width() as u64;
    let keys: Vec<u64> = batch
        .patch
        .pixels
        .iter()
        .map(|&(x, y)| NOVEL_KEY_BASE + y as u64 * width + x as u64)
        .collect();
    let mut tape = Tape::new();
    let vars = params.register(&mut tape, true);
    let raw = render_on_tape(
        params,
        &mut tape,
        &vars,
        &rays,
        &keys,
        config,
        &augment.field,
        augment.weight_perturb.as_ref(),
    )?;
    let pred = if augment.dilation_window > 1 {
        let values: Vec<[f64; 3]> = tape.value(raw).values().chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        let side = batch.patch.side;
        let sources = brightest_sources(&values, side, side, augment.dilation_window)?;
        tape.gather_rows(raw, sources)?
    } else {
        raw
    };
    let loss = masked_pseudo_loss(&mut tape, pred, &batch.targets)?;
    let value = tape.value(loss).values()[0];
    Ok((value, tape.backward(loss)?))
}

/// A pose between two distinct random training cameras: translation lerp,
/// rotation slerp, factor uniform in [0.2, 0.8].
pub fn sample_novel_pose(cameras: &[Camera], seed: u64, draw: u64) -> Result<Camera> {
    let mut rng = stream_rng(seed, Stream::NovelPose, &[draw]);
    let (a, b, t) = novel_pose_choice(cameras.len(), &mut rng)?;
    cameras[a].interpolate(&cameras[b], t)
}

pub(crate) fn novel_pose_choice<R: Rng + ?Sized>(count: usize, rng: &mut R) -> Result<(usize, usize, f64)> {
    if count < 2 {
        return Err(Error::invalid(format!("novel poses need at least two training cameras, got {count}")));
    }
    let a = rng.random_range(0..count);
    let mut b = rng.random_range(0..count - 1);
    if b >= a {
        b += 1;
    }
    Ok((a, b, rng.random_range(0.2..=0.8)))
}

/// Places a `side`×`side` patch containing a randomly chosen label.
pub fn sample_pseudo_patch<R: Rng + ?Sized>(labels: &PseudoLabelSet, side: usize, rng: &mut R) -> Result<Patch> {
    let (w, h) = (labels.camera.width(), labels.camera.height());
    if side == 0 || side > w || side > h {
        return Err(Error::invalid(format!("patch side {side} does not fit a {w}x{h} view")));
    }
    if labels.is_empty() {
        return Err(Error::invalid("no pseudo labels to anchor a patch"));
    }
    let anchor = labels.labels[rng.random_range(0..labels.len())];
    let dx = rng.random_range(0..side);
    let dy = rng.random_range(0..side);
    let x0 = anchor.x.saturating_sub(dx).min(w - side);
    let y0 = anchor.y.saturating_sub(dy).min(h - side);
    Ok(Patch::at(x0, y0, side))
}

/// Real rays sampled uniformly (with replacement) across training views.
pub fn sample_train_batch(
    cameras: &[Camera],
    images: &[ImageBuffer],
    count: usize,
    seed: u64,
    step: u64,
) -> Result<TrainBatch> {
    if cameras.is_empty() || cameras.len() != images.len() {
        return Err(Error::invalid(format!("{} cameras for {} images", cameras.len(), images.len())));
    }
    for (c, img) in cameras.iter().zip(images) {
        if c.width() != img.width() || c.height() != img.height() {
            return Err(Error::shape("training views", "camera and image sizes differ"));
        }
    }
    let mut rng = stream_rng(seed, Stream::RayBatch, &[step]);
    let mut batch = TrainBatch::default();
    for _ in 0..count {
        let v = rng.random_range(0..cameras.len());
        let cam = &cameras[v];
        let p = rng.random_range(0..cam.pixel_count());
        let (x, y) = (p % cam.width(), p / cam.width());
        batch.rays.push(cam.ray(x, y)?);
        batch.keys.push((v * cam.pixel_count() + p) as u64);
        batch.targets.push(images[v].get(x, y));
    }
    Ok(batch)
}
