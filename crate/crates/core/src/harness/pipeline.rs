use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::config::RunConfig;
use super::metrics::{psnr, ssim};
use super::robustness::{robustness_report, RobustnessReport};
use super::scene::{make_scene, Scene};
use crate::error::{Error, Result};
use crate::field::{layer_sensitivity, load_checkpoint, save_checkpoint, FieldParams, SensitivityReport};
use crate::image::ImageBuffer;
use crate::renderer::{render_image, Camera};
use crate::rng::{derive_seed, Stream};
use crate::trainer::{run_pretrain, run_semi_supervised, MetricsLog, TrainState};

pub const PRETRAIN_CHECKPOINT: &str = "pretrain.ckpt";
pub const TEACHER_CHECKPOINT: &str = "teacher.ckpt";
pub const PRETRAIN_METRICS: &str = "pretrain_metrics.csv";
pub const FINETUNE_METRICS: &str = "finetune_metrics.csv";

pub fn build_scene(config: &RunConfig) -> Result<Scene> {
    config.validate()?;
    make_scene(
        &config.scene_spec()?,
        config.train_views,
        config.heldout_views,
        config.near,
        config.far,
    )
}

/// Freshly initialised field for the run's seed.
pub fn initial_field(config: &RunConfig) -> Result<FieldParams> {
    FieldParams::init(config.field_config(), derive_seed(&[config.seed, Stream::Init as u64]))
}

pub fn pretrain(config: &RunConfig, scene: &Scene) -> Result<(FieldParams, MetricsLog)> {
    pretrain_with(config, scene, |_, _| Ok(()))
}

fn pretrain_with(
    config: &RunConfig,
    scene: &Scene,
    on_step: impl FnMut(u64, &FieldParams) -> Result<()>,
) -> Result<(FieldParams, MetricsLog)> {
    let mut log = MetricsLog::new();
    let params = run_pretrain(
        initial_field(config)?,
        &scene.train,
        Some(&scene.heldout),
        &config.pretrain_config(),
        &mut log,
        on_step,
    )?;
    Ok((params, log))
}

pub fn finetune(config: &RunConfig, scene: &Scene, pretrained: FieldParams) -> Result<(FieldParams, MetricsLog)> {
    finetune_with(config, scene, pretrained, |_, _| Ok(()))
}

fn finetune_with(
    config: &RunConfig,
    scene: &Scene,
    pretrained: FieldParams,
    on_step: impl FnMut(u64, &FieldParams) -> Result<()>,
) -> Result<(FieldParams, MetricsLog)> {
    if pretrained.config() != &config.field_config() {
        return Err(Error::Architecture(format!(
            "checkpoint holds {:?} but the config asks for {:?}",
            pretrained.config(),
            config.field_config()
        )));
    }
    let semi = config.semi_config()?;
    let mut state = TrainState::from_pretrained(pretrained, &semi)?;
    let mut log = MetricsLog::new();
    let teacher = run_semi_supervised(&mut state, &scene.train, Some(&scene.heldout), &semi, &mut log, on_step)?;
    Ok((teacher, log))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn checkpoint_saver<'a>(
    every: u64,
    dir: &'a Path,
    stem: &'a str,
) -> impl FnMut(u64, &FieldParams) -> Result<()> + 'a {
    move |done, params| {
        if every > 0 && done % every == 0 {
            save_checkpoint(params, &dir.join(format!("{stem}_{done:06}.ckpt")))?;
        }
        Ok(())
    }
}

/// Files written by a pipeline stage.
#[derive(Clone, Debug)]
pub struct StageOutput {
    pub checkpoint: PathBuf,
    pub metrics: PathBuf,
    pub params: FieldParams,
    pub log: MetricsLog,
}

/// Pretrains on the configured scene and writes the checkpoint, metrics
/// log and effective config into `out_dir`.
pub fn pretrain_to_dir(config: &RunConfig, out_dir: &Path) -> Result<StageOutput> {
    ensure_dir(out_dir)?;
    let scene = build_scene(config)?;
    let (params, log) = pretrain_with(config, &scene, checkpoint_saver(config.checkpoint_every, out_dir, "pretrain"))?;
    let checkpoint = out_dir.join(PRETRAIN_CHECKPOINT);
    let metrics = out_dir.join(PRETRAIN_METRICS);
    save_checkpoint(&params, &checkpoint)?;
    log.save(&metrics)?;
    config.save(&out_dir.join("config.toml"))?;
    Ok(StageOutput {
        checkpoint,
        metrics,
        params,
        log,
    })
}

/// Runs the teacher-student stage from a pretraining checkpoint and writes
/// the final teacher and its metrics log into `out_dir`.
pub fn finetune_to_dir(config: &RunConfig, checkpoint: &Path, out_dir: &Path) -> Result<StageOutput> {
    if !checkpoint.is_file() {
        return Err(Error::InvalidArgument(format!(
            "pretraining checkpoint {} does not exist",
            checkpoint.display()
        )));
    }
    let pretrained = load_checkpoint(checkpoint)?;
    ensure_dir(out_dir)?;
    let scene = build_scene(config)?;
    let (params, log) = finetune_with(
        config,
        &scene,
        pretrained,
        checkpoint_saver(config.checkpoint_every, out_dir, "teacher"),
    )?;
    let ckpt = out_dir.join(TEACHER_CHECKPOINT);
    let metrics = out_dir.join(FINETUNE_METRICS);
    save_checkpoint(&params, &ckpt)?;
    log.save(&metrics)?;
    Ok(StageOutput {
        checkpoint: ckpt,
        metrics,
        params,
        log,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ViewScore {
    pub split: &'static str,
    pub index: usize,
    pub psnr: f64,
    pub ssim: Option<f64>,
}

/// Per-frame PSNR along an interpolated pose sweep; frame-to-frame quality
/// swings show up as variance.
#[derive(Clone, Debug, PartialEq)]
pub struct FlickerReport {
    pub frame_psnr: Vec<f64>,
}

impl FlickerReport {
    pub fn mean(&self) -> f64 {
        self.frame_psnr.iter().sum::<f64>() / self.frame_psnr.len() as f64
    }

    /// Population variance of the per-frame PSNR.
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.frame_psnr.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / self.frame_psnr.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationReport {
    pub views: Vec<ViewScore>,
    pub robustness: RobustnessReport,
    pub flicker: FlickerReport,
}

impl EvaluationReport {
    pub fn mean_psnr(&self, split: &str) -> Option<f64> {
        let v: Vec<f64> = self.views.iter().filter(|s| s.split == split).map(|s| s.psnr).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("split     view  psnr      ssim\n");
        for s in &self.views {
            let ssim = s.ssim.map_or_else(|| "-".to_owned(), |v| format!("{v:.4}"));
            let _ = writeln!(out, "{:<9} {:<5} {:<9.4} {}", s.split, s.index, s.psnr, ssim);
        }
        out.push('\n');
        out.push_str(&self.robustness.to_text());
        let _ = writeln!(
            out,
            "\nflicker: {} frames, mean psnr {:.4}, psnr variance {:.6}",
            self.flicker.frame_psnr.len(),
            self.flicker.mean(),
            self.flicker.variance()
        );
        out
    }
}

/// Poses evenly spaced from the first to the last training camera.
pub fn pose_sweep(cameras: &[Camera], frames: usize) -> Result<Vec<Camera>> {
    let (Some(first), Some(last)) = (cameras.first(), cameras.last()) else {
        return Err(Error::invalid("pose sweep needs cameras"));
    };
    if frames < 2 {
        return Err(Error::invalid("pose sweep needs at least two frames"));
    }
    (0..frames)
        .map(|i| first.interpolate(last, i as f64 / (frames - 1) as f64))
        .collect()
}

pub fn evaluate(params: &FieldParams, config: &RunConfig, scene: &Scene) -> Result<EvaluationReport> {
    if params.config() != &config.field_config() {
        return Err(Error::Architecture(format!(
            "checkpoint holds {:?} but the config asks for {:?}",
            params.config(),
            config.field_config()
        )));
    }
    let render = config.render_config();
    let score = |split: &'static str, index: usize, cam: &Camera, gt: &ImageBuffer| -> Result<ViewScore> {
        let img = render_image(params, cam, &render, None)?.image;
        let ssim = if gt.width() >= 11 && gt.height() >= 11 {
            Some(ssim(&img, gt)?)
        } else {
            None
        };
        Ok(ViewScore {
            split,
            index,
            psnr: psnr(&img, gt)?,
            ssim,
        })
    };
    let mut views = Vec::new();
    for (i, (c, g)) in scene.train.cameras.iter().zip(&scene.train.images).enumerate() {
        views.push(score("train", i, c, g)?);
    }
    for (i, (c, g)) in scene.heldout.cameras.iter().zip(&scene.heldout.images).enumerate() {
        views.push(score("heldout", i, c, g)?);
    }
    let robust_views = if scene.heldout.is_empty() { &scene.train } else { &scene.heldout };
    let robustness = robustness_report(
        params,
        robust_views,
        config.robustness_amplitude,
        &render,
        derive_seed(&[config.seed, Stream::DensityNoise as u64]),
    )?;
    let mut frame_psnr = Vec::with_capacity(config.flicker_frames);
    for cam in pose_sweep(&scene.train.cameras, config.flicker_frames)? {
        let img = render_image(params, &cam, &render, None)?.image;
        frame_psnr.push(psnr(&img, &scene.render_oracle(&cam)?)?);
    }
    Ok(EvaluationReport {
        views,
        robustness,
        flicker: FlickerReport { frame_psnr },
    })
}

/// Loads a checkpoint and evaluates it on the configured scene.
pub fn evaluate_checkpoint(checkpoint: &Path, config: &RunConfig) -> Result<EvaluationReport> {
    let params = load_checkpoint(checkpoint)?;
    let scene = build_scene(config)?;
    evaluate(&params, config, &scene)
}

pub fn analyze_layers(checkpoints: &[PathBuf]) -> Result<SensitivityReport> {
    let params = checkpoints.iter().map(|p| load_checkpoint(p)).collect::<Result<Vec<_>>>()?;
    layer_sensitivity(&params)
}

/// Camera pose for `render`:
/// `identity`, `orbit:<azimuth>,<elevation>,<radius>` (degrees), or twelve
/// comma-separated numbers giving a row-major `[R|T]`.
#[derive(Clone, Debug, PartialEq)]
pub enum PoseSpec {
    Identity,
    Orbit { azimuth: f64, elevation: f64, radius: f64 },
    Matrix([f64; 12]),
}

impl PoseSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        let numbers = |s: &str| -> Result<Vec<f64>> {
            s.split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::InvalidArgument(format!("bad number `{v}` in pose: {e}")))
                })
                .collect()
        };
        if text == "identity" {
            return Ok(PoseSpec::Identity);
        }
        if let Some(rest) = text.strip_prefix("orbit:") {
            let v = numbers(rest)?;
            let [azimuth, elevation, radius] = v[..] else {
                return Err(Error::InvalidArgument("orbit pose takes azimuth,elevation,radius".into()));
            };
            return Ok(PoseSpec::Orbit {
                azimuth,
                elevation,
                radius,
            });
        }
        let v = numbers(text)?;
        let m: [f64; 12] = v
            .try_into()
            .map_err(|_| Error::InvalidArgument(format!("pose `{text}` is not identity, orbit:..., or 12 numbers")))?;
        Ok(PoseSpec::Matrix(m))
    }

    pub fn camera(&self, focal: f64, width: usize, height: usize) -> Result<Camera> {
        match *self {
            PoseSpec::Identity => Camera::identity(focal, width, height),
            PoseSpec::Orbit {
                azimuth,
                elevation,
                radius,
            } => Camera::orbit(azimuth, elevation, radius, nalgebra::Vector3::zeros(), focal, width, height),
            PoseSpec::Matrix(m) => Camera::from_pose_values(&m, focal, width, height),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pose_specs() {
        assert_eq!(PoseSpec::parse("identity").unwrap(), PoseSpec::Identity);
        assert_eq!(
            PoseSpec::parse("orbit:10, -5,2").unwrap(),
            PoseSpec::Orbit {
                azimuth: 10.0,
                elevation: -5.0,
                radius: 2.0
            }
        );
        let m = PoseSpec::parse("1,0,0,0, 0,1,0,0, 0,0,1,2").unwrap();
        let cam = m.camera(50.0, 8, 8).unwrap();
        assert_eq!(cam.translation().z, 2.0);
        assert!(PoseSpec::parse("orbit:1,2").is_err());
        assert!(PoseSpec::parse("1,2,3").is_err());
        assert!(PoseSpec::parse("spin").is_err());
        assert!(PoseSpec::parse("2,0,0,0,0,1,0,0,0,0,1,0").unwrap().camera(50.0, 8, 8).is_err());
    }

    #[test]
    fn sweep_endpoints_are_the_training_cameras() {
        let config = RunConfig::default();
        let rig = config.rig();
        let cams: Vec<Camera> = rig.train_azimuths(3).into_iter().map(|a| rig.camera(a).unwrap()).collect();
        let sweep = pose_sweep(&cams, 5).unwrap();
        assert_eq!(sweep.len(), 5);
        assert_eq!(sweep[0], cams[0]);
        assert_eq!(sweep[4].rotation(), cams[2].rotation());
        assert!(pose_sweep(&cams, 1).is_err());
    }

    #[test]
    fn flicker_variance() {
        let f = FlickerReport {
            frame_psnr: vec![20.0, 22.0, 24.0],
        };
        assert_eq!(f.mean(), 22.0);
        assert!((f.variance() - 8.0 / 3.0).abs() < 1e-12);
    }
}
