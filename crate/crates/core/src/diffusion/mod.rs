//! Conditional denoising diffusion over pose sequences.

pub mod denoiser;
pub mod sampler;
pub mod schedule;

pub use denoiser::{
    step_embedding, Denoiser, DenoiserConfig, DiffusionClip, DiffusionLog, DiffusionTrainer,
    FeatureStats, TrainOptions,
};
pub use sampler::{
    denoising_loss, guide, guided_epsilon, sample, EpsilonModel, GuidanceParams, SampleOptions,
};
pub use schedule::{NoiseSchedule, ScheduleKind};
