//! Supervised pretraining and the teacher-student finetuning loop.

mod optim;
mod run;
mod step;

pub use optim::{Adam, AdamConfig};
pub use run::{
    generate_pseudo_labels, mean_view_psnr, pretrain_step, run_pretrain, run_semi_supervised, student_step,
    MetricsLog, MetricsRow, PretrainConfig, SemiConfig, Stage, TrainState, ViewSet, METRICS_FORMAT_VERSION,
};
pub use step::{
    masked_pseudo_loss, pseudo_loss_and_grad, real_loss_and_grad, render_on_tape, sample_novel_pose,
    sample_pseudo_patch, sample_train_batch, LossConfig, PseudoBatch, StepAugment, TrainBatch, NOVEL_KEY_BASE,
};
