//! Noise schedule, forward process and the time-conditioned MLP denoiser.

mod denoiser;
mod schedule;

pub use denoiser::{
    backward_accumulate, denoiser_backward, denoiser_forward, forward_with_time, init_params,
    positional_encode, predict_noise, time_embedding, BackwardFault, DenoiserConfig,
    DenoiserGrads, DenoiserParams, ParamTensor, Tape, TimeEmbedding, LAYER_NORM_EPS,
};
pub(crate) use schedule::diffuse_into;
pub use schedule::{
    build_linear_schedule, diffuse_with_alpha_bar, forward_diffuse, DiffusionSchedule,
    ScheduleConfig,
};
