use std::path::Path;

use serde::{Deserialize, Serialize};

use super::scene::{CameraRig, SyntheticScene};
use crate::confidence::{EnsembleConfig, HsvThresholds};
use crate::error::{Error, Result};
use crate::field::{FieldConfig, HEAD_RGB, HEAD_SIGMA};
use crate::renderer::RenderConfig;
use crate::trainer::{AdamConfig, PretrainConfig, SemiConfig};

pub const CONFIG_FORMAT_VERSION: u32 = 1;

/// Every knob of a run, read from a flat TOML file. Missing keys take the
/// defaults below; unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub format_version: u32,
    pub seed: u64,

    /// `default` (two spheres and a bar) or `empty`.
    pub scene: String,
    pub width: usize,
    pub height: usize,
    pub fov_deg: f64,
    pub rig_radius: f64,
    pub elevation_deg: f64,
    pub arc_deg: f64,
    pub train_views: usize,
    pub heldout_views: usize,
    pub background: [f64; 3],

    pub samples: usize,
    pub near: f64,
    pub far: f64,
    pub chunk_rays: usize,

    pub hidden_width: usize,
    pub trunk_depth: usize,
    pub pos_frequencies: usize,
    pub dir_frequencies: usize,

    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub pretrain_steps: u64,
    pub pretrain_batch_rays: usize,
    pub pretrain_lr: f64,

    pub finetune_steps: u64,
    pub finetune_lr: f64,
    pub real_batch_rays: usize,
    pub patch_side: usize,
    pub dilation_window: usize,
    pub refresh_every: u64,
    pub ema_momentum: f64,
    pub mix: f64,
    pub layer_noise_max: f64,
    pub weight_noise_max: f64,
    pub warmup_fraction: f64,
    pub tau_bound: f64,
    pub clamp_weights: bool,
    pub layer_targets: Vec<String>,

    pub kappa: f64,
    pub global_share: f64,
    pub v_lower: f64,
    pub s_lower: f64,
    pub dropout_ratios: Vec<f64>,

    /// Steps between PSNR rows in the metrics log; 0 disables them.
    pub eval_every: u64,
    /// Steps between intermediate checkpoints; 0 keeps only the final one.
    pub checkpoint_every: u64,
    pub robustness_amplitude: f64,
    pub flicker_frames: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let rig = CameraRig::default();
        let semi = SemiConfig::default();
        let field = FieldConfig::default();
        let render = RenderConfig::default();
        Self {
            format_version: CONFIG_FORMAT_VERSION,
            seed: 0,
            scene: "default".into(),
            width: rig.width,
            height: rig.height,
            fov_deg: rig.fov_deg,
            rig_radius: rig.radius,
            elevation_deg: rig.elevation_deg,
            arc_deg: rig.arc_deg,
            train_views: 3,
            heldout_views: 2,
            background: [0.0; 3],
            samples: render.samples,
            near: render.near,
            far: render.far,
            chunk_rays: render.chunk_rays,
            hidden_width: field.width,
            trunk_depth: field.trunk_depth,
            pos_frequencies: field.pos_frequencies,
            dir_frequencies: field.dir_frequencies,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            pretrain_steps: 2000,
            pretrain_batch_rays: 128,
            pretrain_lr: 5e-3,
            finetune_steps: semi.steps,
            finetune_lr: 1e-3,
            real_batch_rays: semi.real_batch_rays,
            patch_side: semi.patch_side,
            dilation_window: semi.dilation_window,
            refresh_every: semi.refresh_every,
            ema_momentum: semi.ema_momentum,
            mix: semi.mix,
            layer_noise_max: semi.layer_noise_max,
            weight_noise_max: semi.weight_noise_max,
            warmup_fraction: semi.warmup_fraction,
            tau_bound: semi.tau_bound,
            clamp_weights: semi.clamp_weights,
            layer_targets: vec![HEAD_RGB.into(), HEAD_SIGMA.into()],
            kappa: semi.kappa,
            global_share: semi.global_share,
            v_lower: semi.thresholds.v_lower,
            s_lower: semi.thresholds.s_lower,
            dropout_ratios: semi.ensemble.ratios.clone(),
            eval_every: semi.eval_every,
            checkpoint_every: 0,
            robustness_amplitude: 0.5,
            flicker_frames: 12,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config fields are plain values")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != CONFIG_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported config format version {} (expected {CONFIG_FORMAT_VERSION})",
                self.format_version
            )));
        }
        self.scene_spec()?.validate()?;
        self.field_config().validate()?;
        self.render_config().validate()?;
        self.pretrain_config().adam.validate()?;
        let semi = self.semi_config()?;
        semi.adam.validate()?;
        if self.train_views < 2 {
            return Err(Error::Config("at least two training views are needed".into()));
        }
        if self.pretrain_batch_rays == 0 || self.real_batch_rays == 0 {
            return Err(Error::Config("ray batches must be non-empty".into()));
        }
        if self.patch_side == 0 || self.patch_side > self.width.min(self.height) {
            return Err(Error::Config(format!("patch side {} does not fit the image", self.patch_side)));
        }
        if self.dilation_window % 2 == 0 || self.dilation_window > self.patch_side {
            return Err(Error::Config(format!(
                "dilation window {} must be odd and at most the patch side",
                self.dilation_window
            )));
        }
        if self.refresh_every == 0 {
            return Err(Error::Config("refresh_every must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.ema_momentum) || !(0.0..=1.0).contains(&self.mix) {
            return Err(Error::Config("ema_momentum and mix must lie in [0, 1]".into()));
        }
        if !(self.kappa > 0.0 && self.kappa <= 1.0) || !(0.0..=1.0).contains(&self.global_share) {
            return Err(Error::Config("kappa must lie in (0, 1] and global_share in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.warmup_fraction) {
            return Err(Error::Config("warmup_fraction must lie in [0, 1]".into()));
        }
        if self.layer_noise_max < 0.0 || self.weight_noise_max < 0.0 || !(self.tau_bound > 0.0) {
            return Err(Error::Config("noise weights must be non-negative and tau_bound positive".into()));
        }
        let layers = self.field_config().layers();
        for t in &self.layer_targets {
            if !layers.iter().any(|l| &l.name == t) {
                return Err(Error::Config(format!("layer target `{t}` is not a field layer")));
            }
        }
        if self.dropout_ratios.first() != Some(&0.0) || self.dropout_ratios.len() < 2 {
            return Err(Error::Config("dropout_ratios must start with 0 and list at least two ratios".into()));
        }
        semi.ensemble.validate()?;
        if !(self.robustness_amplitude >= 0.0) {
            return Err(Error::Config("robustness_amplitude must be non-negative".into()));
        }
        if self.flicker_frames < 2 {
            return Err(Error::Config("flicker_frames must be at least 2".into()));
        }
        Ok(())
    }

    pub fn scene_spec(&self) -> Result<SyntheticScene> {
        let base = match self.scene.as_str() {
            "default" => SyntheticScene::default_scene(),
            "empty" => SyntheticScene::empty(),
            other => return Err(Error::Config(format!("unknown scene `{other}` (expected `default` or `empty`)"))),
        };
        Ok(SyntheticScene {
            background: self.background,
            rig: self.rig(),
            ..base
        })
    }

    pub fn rig(&self) -> CameraRig {
        CameraRig {
            radius: self.rig_radius,
            elevation_deg: self.elevation_deg,
            arc_deg: self.arc_deg,
            fov_deg: self.fov_deg,
            width: self.width,
            height: self.height,
        }
    }

    pub fn field_config(&self) -> FieldConfig {
        FieldConfig {
            width: self.hidden_width,
            trunk_depth: self.trunk_depth,
            pos_frequencies: self.pos_frequencies,
            dir_frequencies: self.dir_frequencies,
        }
    }

    /// Plain sampling (no jitter) used for evaluation renders.
    pub fn render_config(&self) -> RenderConfig {
        RenderConfig {
            near: self.near,
            far: self.far,
            samples: self.samples,
            jitter: false,
            background: self.background,
            seed: self.seed,
            step: 0,
            chunk_rays: self.chunk_rays,
        }
    }

    fn adam(&self, learning_rate: f64) -> AdamConfig {
        AdamConfig {
            learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            ..AdamConfig::default()
        }
    }

    pub fn pretrain_config(&self) -> PretrainConfig {
        PretrainConfig {
            steps: self.pretrain_steps,
            batch_rays: self.pretrain_batch_rays,
            adam: self.adam(self.pretrain_lr),
            render: RenderConfig {
                jitter: true,
                ..self.render_config()
            },
            eval_every: self.eval_every,
            seed: self.seed,
        }
    }

    pub fn semi_config(&self) -> Result<SemiConfig> {
        Ok(SemiConfig {
            steps: self.finetune_steps,
            real_batch_rays: self.real_batch_rays,
            patch_side: self.patch_side,
            dilation_window: self.dilation_window,
            refresh_every: self.refresh_every,
            ema_momentum: self.ema_momentum,
            mix: self.mix,
            adam: self.adam(self.finetune_lr),
            layer_noise_max: self.layer_noise_max,
            weight_noise_max: self.weight_noise_max,
            warmup_fraction: self.warmup_fraction,
            tau_bound: self.tau_bound,
            clamp_weights: self.clamp_weights,
            layer_targets: self.layer_targets.clone(),
            kappa: self.kappa,
            global_share: self.global_share,
            thresholds: HsvThresholds::new(self.v_lower, self.s_lower)?,
            ensemble: EnsembleConfig {
                ratios: self.dropout_ratios.clone(),
            },
            render: RenderConfig {
                jitter: true,
                ..self.render_config()
            },
            eval_every: self.eval_every,
            seed: self.seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = RunConfig::default();
        c.validate().unwrap();
        let text = c.to_toml();
        assert!(text.starts_with("format_version = 1"));
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(RunConfig::from_toml(&back.to_toml()).unwrap(), back);
    }

    #[test]
    fn partial_file_takes_defaults() {
        let c = RunConfig::from_toml("seed = 7\ntrain_views = 6\n").unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.train_views, 6);
        assert_eq!(c.width, 64);
        assert_eq!(c.kappa, 0.1);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(RunConfig::from_toml("learning_rate = 0.1\n").is_err());
        assert!(RunConfig::from_toml("format_version = 2\n").is_err());
        assert!(RunConfig::from_toml("kappa = 0.0\n").is_err());
        assert!(RunConfig::from_toml("dilation_window = 4\n").is_err());
        assert!(RunConfig::from_toml("scene = \"teapot\"\n").is_err());
        assert!(RunConfig::from_toml("layer_targets = [\"head.alpha\"]\n").is_err());
        assert!(RunConfig::from_toml("dropout_ratios = [0.1, 0.2]\n").is_err());
        assert!(RunConfig::from_toml("train_views = 1\n").is_err());
    }

    #[test]
    fn derived_configs_carry_the_knobs() {
        let c = RunConfig::from_toml("finetune_lr = 0.002\nrefresh_every = 25\nv_lower = 0.3\n").unwrap();
        let semi = c.semi_config().unwrap();
        assert_eq!(semi.adam.learning_rate, 0.002);
        assert_eq!(semi.refresh_every, 25);
        assert_eq!(semi.thresholds.v_lower, 0.3);
        assert!(semi.render.jitter);
        assert!(!c.render_config().jitter);
        assert_eq!(c.pretrain_config().adam.learning_rate, 5e-3);
    }
}
