//! Forward-only wavelet-flow autoencoder.

mod config;
mod model;
mod weights;

pub use config::{
    ModelConfig, NormKind, ParamEntry, ParamRole, LATENT_CHOICES, LEVEL2D_CHANNELS, LEVEL3D_CHANNELS, PRESETS,
};
pub use model::{
    decode_plan, latent_time, recombine_level1, recombine_level2, sample_latent, video_time, DecodeOutput, EncodeOutput,
    ForwardOutput, GaussianLatent, WfVae,
};
pub use weights::{init_weights, Param, WeightStore, NORM_EPS, WEIGHT_MAGIC, WEIGHT_VERSION};
