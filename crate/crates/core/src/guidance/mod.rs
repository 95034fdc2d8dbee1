//! Style-guided kernel and the guidance transformers it drives.

mod net;
mod thd;
mod train;

pub use net::{guidance_input, guide_component, GuidanceConfig, GuidanceNet};
pub use thd::{
    sample_guided, sample_unguided_series, thd_step, thd_step_traced, Guide, GuidedSample, KernelConfig, StyleEntry,
    StyleLibrary, StyleSelection, ThdTrace,
};
pub use train::{
    build_training_pairs, guidance_loss_and_grad, train_guidance, GuidanceModels, GuidanceTrainConfig, GuidanceTrainer,
    Part, TrainingPair,
};
