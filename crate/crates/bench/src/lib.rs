//! Shared inputs for the benchmarks.

use wfcodec_core::causal::{Activation, ConvSpec, LayerDef};
use wfcodec_core::net::{init_weights, ModelConfig, WfVae};
use wfcodec_core::{Rng, Shape, VideoTensor};

pub fn clip(c: usize, t: usize, h: usize, w: usize, seed: u64) -> VideoTensor {
    let shape = Shape::new(c, t, h, w).expect("benchmark shapes are valid");
    VideoTensor::random_normal(&mut Rng::new(seed), shape, 0.0, 1.0).expect("unit normal")
}

/// conv -> layer norm -> SiLU -> strided conv -> conv.
pub fn layer_stack(channels: usize, seed: u64) -> Vec<LayerDef> {
    let mut rng = Rng::new(seed);
    let mut conv = |spec| LayerDef::random_conv(spec, &mut rng).expect("valid spec");
    vec![
        conv(ConvSpec::cubic(3, channels, 3)),
        LayerDef::layernorm(channels),
        LayerDef::Nonlinearity(Activation::Silu),
        conv(ConvSpec::cubic(channels, channels, 3).with_stride([2, 1, 1])),
        conv(ConvSpec::cubic(channels, 3, 3)),
    ]
}

pub fn model(base_channels: usize, seed: u64) -> WfVae {
    let config = ModelConfig::new(base_channels, base_channels, 4).expect("valid config");
    let weights = init_weights(&config, &mut Rng::new(seed)).expect("init");
    WfVae::new(config, weights).expect("weights match config")
}
