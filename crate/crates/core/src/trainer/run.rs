use std::fmt::Write as _;
use std::path::Path;

use super::optim::{Adam, AdamConfig};
use super::step::{
    pseudo_loss_and_grad, real_loss_and_grad, sample_pseudo_patch, sample_novel_pose, sample_train_batch, LossConfig,
    PseudoBatch, StepAugment, TrainBatch,
};
use crate::augment::{NoiseSchedule, DEFAULT_BOUND};
use crate::confidence::{render_ensemble, select_pseudo, ConfidenceMap, EnsembleConfig, HsvThresholds, PseudoLabelSet};
use crate::error::{Error, Result};
use crate::field::{ema_update, FieldAugment, FieldParams, LayerNoiseSpec, HEAD_RGB, HEAD_SIGMA};
use crate::harness::psnr;
use crate::image::ImageBuffer;
use crate::renderer::{render_image, Camera, RenderConfig, WeightPerturbSpec};
use crate::rng::{derive_seed, stream_rng, Stream};
use crate::tensor::GradientSet;

const PRETRAIN_TAG: u64 = 1;
const FINETUNE_TAG: u64 = 2;

/// Posed images with ground truth.
#[derive(Clone, Debug, Default)]
pub struct ViewSet {
    pub cameras: Vec<Camera>,
    pub images: Vec<ImageBuffer>,
}

impl ViewSet {
    pub fn len(&self) -> usize {
        self.cameras.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cameras.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.cameras.len() != self.images.len() {
            return Err(Error::invalid(format!(
                "{} cameras for {} images",
                self.cameras.len(),
                self.images.len()
            )));
        }
        for (c, i) in self.cameras.iter().zip(&self.images) {
            if c.width() != i.width() || c.height() != i.height() {
                return Err(Error::shape("view set", "camera and image sizes differ"));
            }
        }
        Ok(())
    }
}

/// Mean PSNR of plain renders of `params` against the views' images.
pub fn mean_view_psnr(params: &FieldParams, views: &ViewSet, config: &RenderConfig) -> Result<f64> {
    views.validate()?;
    if views.is_empty() {
        return Err(Error::invalid("no views to evaluate"));
    }
    let plain = RenderConfig {
        jitter: false,
        ..config.clone()
    };
    let mut total = 0.0;
    for (cam, gt) in views.cameras.iter().zip(&views.images) {
        total += psnr(&render_image(params, cam, &plain, None)?.image, gt)?;
    }
    Ok(total / views.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Pretrain,
    Finetune,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Pretrain => "pretrain",
            Stage::Finetune => "finetune",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub step: u64,
    pub stage: Stage,
    pub loss: f64,
    pub omega: f64,
    pub train_psnr: Option<f64>,
    pub heldout_psnr: Option<f64>,
}

pub const METRICS_FORMAT_VERSION: u32 = 1;

/// Append-only training log.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsLog {
    rows: Vec<MetricsRow>,
}

impl MetricsLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, row: MetricsRow) {
        self.rows.push(row);
    }

    pub fn rows(&self) -> &[MetricsRow] {
        &self.rows
    }

    pub fn last_with_train_psnr(&self) -> Option<&MetricsRow> {
        self.rows.iter().rev().find(|r| r.train_psnr.is_some())
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("# ssnerf-metrics v{METRICS_FORMAT_VERSION}\nstep,stage,loss,omega,train_psnr,heldout_psnr\n");
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.step,
                r.stage.as_str(),
                r.loss,
                r.omega,
                opt(r.train_psnr),
                opt(r.heldout_psnr)
            );
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

fn evaluate_row(
    params: &FieldParams,
    train: &ViewSet,
    heldout: Option<&ViewSet>,
    render: &RenderConfig,
) -> Result<(Option<f64>, Option<f64>)> {
    let t = mean_view_psnr(params, train, render)?;
    let h = match heldout {
        Some(v) if !v.is_empty() => Some(mean_view_psnr(params, v, render)?),
        _ => None,
    };
    Ok((Some(t), h))
}

fn should_eval(every: u64, done: u64, total: u64) -> bool {
    every > 0 && (done % every == 0 || done == total)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PretrainConfig {
    pub steps: u64,
    pub batch_rays: usize,
    pub adam: AdamConfig,
    /// Sampling used for training rays; jitter is normally on.
    pub render: RenderConfig,
    /// Steps between PSNR evaluations; 0 disables them.
    pub eval_every: u64,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch_rays: 128,
            adam: AdamConfig::with_learning_rate(5e-3),
            render: RenderConfig {
                jitter: true,
                ..RenderConfig::default()
            },
            eval_every: 500,
            seed: 0,
        }
    }
}

/// One supervised step: MSE of the composited colour against ground truth.
pub fn pretrain_step(params: &mut FieldParams, optimizer: &mut Adam, batch: &TrainBatch, render: &RenderConfig) -> Result<f64> {
    let (loss, grads) = real_loss_and_grad(params, batch, render, &StepAugment::default())?;
    optimizer.step(params.store_mut(), &grads)?;
    Ok(loss)
}

/// Plain supervised training on the sparse views. `on_step` sees the
/// number of completed steps and the current parameters.
pub fn run_pretrain(
    mut params: FieldParams,
    train: &ViewSet,
    heldout: Option<&ViewSet>,
    config: &PretrainConfig,
    log: &mut MetricsLog,
    mut on_step: impl FnMut(u64, &FieldParams) -> Result<()>,
) -> Result<FieldParams> {
    train.validate()?;
    if config.batch_rays == 0 {
        return Err(Error::invalid("batch must contain at least one ray"));
    }
    let mut optimizer = Adam::new(config.adam, params.store())?;
    let batch_seed = derive_seed(&[config.seed, PRETRAIN_TAG]);
    for step in 0..config.steps {
        let batch = sample_train_batch(&train.cameras, &train.images, config.batch_rays, batch_seed, step)?;
        let render = RenderConfig {
            seed: batch_seed,
            step,
            ..config.render.clone()
        };
        let loss = pretrain_step(&mut params, &mut optimizer, &batch, &render)?;
        let (train_psnr, heldout_psnr) = if should_eval(config.eval_every, step + 1, config.steps) {
            evaluate_row(&params, train, heldout, &config.render)?
        } else {
            (None, None)
        };
        log.push(MetricsRow {
            step,
            stage: Stage::Pretrain,
            loss,
            omega: 0.0,
            train_psnr,
            heldout_psnr,
        });
        on_step(step + 1, &params)?;
    }
    Ok(params)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SemiConfig {
    pub steps: u64,
    pub real_batch_rays: usize,
    pub patch_side: usize,
    pub dilation_window: usize,
    pub refresh_every: u64,
    pub ema_momentum: f64,
    pub mix: f64,
    pub adam: AdamConfig,
    pub layer_noise_max: f64,
    pub weight_noise_max: f64,
    pub warmup_fraction: f64,
    pub tau_bound: f64,
    pub clamp_weights: bool,
    pub layer_targets: Vec<String>,
    pub kappa: f64,
    pub global_share: f64,
    pub thresholds: HsvThresholds,
    pub ensemble: EnsembleConfig,
    pub render: RenderConfig,
    pub eval_every: u64,
    pub seed: u64,
}

impl Default for SemiConfig {
    fn default() -> Self {
        Self {
            steps: 500,
            real_batch_rays: 64,
            patch_side: 8,
            dilation_window: 3,
            refresh_every: 50,
            ema_momentum: 0.99,
            mix: 0.5,
            adam: AdamConfig::with_learning_rate(1e-3),
            layer_noise_max: 0.1,
            weight_noise_max: 0.05,
            warmup_fraction: 0.25,
            tau_bound: DEFAULT_BOUND,
            clamp_weights: true,
            layer_targets: vec![HEAD_RGB.to_owned(), HEAD_SIGMA.to_owned()],
            kappa: 0.1,
            global_share: 0.5,
            thresholds: HsvThresholds::default(),
            ensemble: EnsembleConfig::default(),
            render: RenderConfig {
                jitter: true,
                ..RenderConfig::default()
            },
            eval_every: 100,
            seed: 0,
        }
    }
}

/// Teacher and student branches of the semi-supervised stage.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub teacher: FieldParams,
    pub student: FieldParams,
    pub optimizer: Adam,
    pub step: u64,
    pub seed: u64,
    pub momentum: f64,
    pub layer_schedule: NoiseSchedule,
    pub weight_schedule: NoiseSchedule,
}

impl TrainState {
    /// Both branches start from the pretrained field.
    pub fn from_pretrained(pretrained: FieldParams, config: &SemiConfig) -> Result<Self> {
        if !(0.0..=1.0).contains(&config.ema_momentum) {
            return Err(Error::invalid(format!("EMA momentum must lie in [0, 1], got {}", config.ema_momentum)));
        }
        Ok(Self {
            optimizer: Adam::new(config.adam, pretrained.store())?,
            student: pretrained.clone(),
            teacher: pretrained,
            step: 0,
            seed: config.seed,
            momentum: config.ema_momentum,
            layer_schedule: NoiseSchedule::with_warmup_fraction(config.layer_noise_max, config.warmup_fraction, config.steps)?,
            weight_schedule: NoiseSchedule::with_warmup_fraction(config.weight_noise_max, config.warmup_fraction, config.steps)?,
        })
    }

    /// Augmentations at the current step.
    pub fn augment(&self, config: &SemiConfig) -> StepAugment {
        let layer_w = self.layer_schedule.noise_weight(self.step);
        let weight_w = self.weight_schedule.noise_weight(self.step);
        let layer_noise = (layer_w > 0.0).then(|| LayerNoiseSpec {
            targets: config.layer_targets.clone(),
            weight: layer_w,
            seed: derive_seed(&[self.seed, Stream::LayerNoise as u64, self.step]),
            bound: config.tau_bound,
        });
        let weight_perturb = (weight_w > 0.0).then(|| WeightPerturbSpec {
            weight: weight_w,
            bound: config.tau_bound,
            clamp: config.clamp_weights,
            seed: derive_seed(&[self.seed, Stream::WeightNoise as u64]),
        });
        StepAugment {
            field: FieldAugment {
                dropout: None,
                layer_noise,
            },
            weight_perturb,
            dilation_window: config.dilation_window,
        }
    }
}

/// One student update: `mix · pseudo + (1 − mix) · real`. Only the student
/// is differentiated; the teacher is untouched.
pub fn student_step(
    state: &mut TrainState,
    pseudo: &PseudoBatch,
    labels: &PseudoLabelSet,
    real: &TrainBatch,
    loss: LossConfig,
    render: &RenderConfig,
    augment: &StepAugment,
) -> Result<f64> {
    pseudo.check_against(labels)?;
    let mut total = 0.0;
    let mut grads = GradientSet::zeros_like(state.student.store());
    if loss.mix > 0.0 {
        let (l, mut g) = pseudo_loss_and_grad(&state.student, pseudo, render, augment)?;
        g.scale(loss.mix);
        grads.merge(&g);
        total += loss.mix * l;
    }
    if loss.mix < 1.0 {
        let real_augment = StepAugment {
            dilation_window: 1,
            ..augment.clone()
        };
        let (l, mut g) = real_loss_and_grad(&state.student, real, render, &real_augment)?;
        if loss.mix > 0.0 {
            g.scale(1.0 - loss.mix);
            total += (1.0 - loss.mix) * l;
        } else {
            total = l;
        }
        grads.merge(&g);
    }
    state.optimizer.step(state.student.store_mut(), &grads)?;
    Ok(total)
}

/// Teacher-side pseudo labels for one novel view.
pub fn generate_pseudo_labels(
    teacher: &FieldParams,
    cameras: &[Camera],
    config: &SemiConfig,
    draw: u64,
) -> Result<PseudoLabelSet> {
    let pose = sample_novel_pose(cameras, config.seed, draw)?;
    let plain = RenderConfig {
        jitter: false,
        ..config.render.clone()
    };
    let dropout_seed = derive_seed(&[config.seed, Stream::Dropout as u64, draw]);
    let stack = render_ensemble(teacher, &pose, &plain, &config.ensemble, dropout_seed)?;
    let stack = if stack.len() == 1 {
        // a lone plain render carries no ensemble spread
        vec![stack[0].clone(), stack[0].clone()]
    } else {
        stack
    };
    let map = ConfidenceMap::from_stack(&stack, &config.thresholds)?;
    select_pseudo(&map, &stack[0], config.kappa, config.global_share, &pose)
}

/// The teacher-student loop. Returns the final teacher; `on_step` sees the
/// number of completed steps and the current teacher.
pub fn run_semi_supervised(
    state: &mut TrainState,
    train: &ViewSet,
    heldout: Option<&ViewSet>,
    config: &SemiConfig,
    log: &mut MetricsLog,
    mut on_step: impl FnMut(u64, &FieldParams) -> Result<()>,
) -> Result<FieldParams> {
    train.validate()?;
    state.teacher.check_same_architecture(&state.student)?;
    if config.refresh_every == 0 {
        return Err(Error::invalid("pseudo-label refresh period must be positive"));
    }
    if config.ensemble.ratios.first() != Some(&0.0) {
        return Err(Error::invalid("the first ensemble ratio must be 0 (the plain teacher render)"));
    }
    let loss_config = LossConfig::new(config.mix)?;
    let batch_seed = derive_seed(&[config.seed, FINETUNE_TAG]);
    let mut labels: Option<PseudoLabelSet> = None;
    for i in 0..config.steps {
        if i % config.refresh_every == 0 || labels.is_none() {
            labels = Some(generate_pseudo_labels(&state.teacher, &train.cameras, config, i / config.refresh_every)?);
        }
        let labels = labels.as_ref().expect("generated above");
        let step = state.step;
        let augment = state.augment(config);
        let omega = augment.field.layer_noise.as_ref().map_or(0.0, |n| n.weight);
        let mut patch_rng = stream_rng(batch_seed, Stream::Patch, &[step]);
        let patch = sample_pseudo_patch(labels, config.patch_side, &mut patch_rng)?;
        let pseudo = PseudoBatch::from_labels(labels, patch)?;
        let real = sample_train_batch(&train.cameras, &train.images, config.real_batch_rays, batch_seed, step)?;
        let render = RenderConfig {
            seed: batch_seed,
            step,
            ..config.render.clone()
        };
        let loss = student_step(state, &pseudo, labels, &real, loss_config, &render, &augment)?;
        ema_update(&mut state.teacher, &state.student, state.momentum)?;
        state.step += 1;
        let (train_psnr, heldout_psnr) = if should_eval(config.eval_every, i + 1, config.steps) {
            evaluate_row(&state.teacher, train, heldout, &config.render)?
        } else {
            (None, None)
        };
        log.push(MetricsRow {
            step,
            stage: Stage::Finetune,
            loss,
            omega,
            train_psnr,
            heldout_psnr,
        });
        on_step(i + 1, &state.teacher)?;
    }
    Ok(state.teacher.clone())
}
