//! Causal temporal operators and chunked (streamed) execution.

pub mod cache;
pub mod conv;
pub mod exec;
pub mod norm;
pub mod stack;

pub use cache::{cache_len, cached_frames, simulate_cache_len, CacheState, FrameWindow};
pub use conv::{causal_conv3d, ConvParams, ConvSpec, TemporalPad};
pub use exec::{add_features, concat_features, ExecMode, Executor, Feature};
pub use norm::{frame_layernorm, groupnorm_whole_clip, Activation, NormParams};
pub use stack::{run_chunked, run_chunked_many, run_layer_stack, LayerDef, LayerKind};
