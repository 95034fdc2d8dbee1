//! Image-domain diffusion backbone: noise schedule, denoiser network,
//! training objective and sampler.

mod edm;
mod schedule;
mod train;
mod unet;

pub use edm::{
    edm_loss, edm_loss_with, heun_step, heun_step_batch, initial_noise, sample_unguided, Denoiser, FnDenoiser,
    ImageDenoiser, NoiseDraw, Preconditioning, P_MEAN, P_STD,
};
pub use schedule::NoiseSchedule;
pub use train::{train_backbone, BackboneTrainConfig, BackboneTrainer};
pub use unet::DenoiserConfig;
