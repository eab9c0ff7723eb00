//! Synthetic scenes with analytic ground truth, image metrics, the
//! density-noise robustness analysis, run configuration and pipelines.

mod metrics;

pub use metrics::{mse, psnr, psnr_from_mse, ssim, PSNR_CAP};
mod scene;

pub use scene::{make_scene, AnalyticField, CameraRig, Primitive, Scene, Shape, SyntheticScene, ORACLE_SAMPLES};
mod robustness;

pub use robustness::{robustness_report, RobustnessReport};
mod config;

pub use config::{RunConfig, CONFIG_FORMAT_VERSION};
mod pipeline;

pub use pipeline::{
    analyze_layers, build_scene, evaluate, evaluate_checkpoint, finetune, finetune_to_dir, initial_field, pose_sweep,
    pretrain, pretrain_to_dir, EvaluationReport, FlickerReport, PoseSpec, StageOutput, ViewScore, FINETUNE_METRICS,
    PRETRAIN_CHECKPOINT, PRETRAIN_METRICS, TEACHER_CHECKPOINT,
};
