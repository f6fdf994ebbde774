//! Layer stacks driven through either execution mode.

use serde::{Deserialize, Serialize};

use super::conv::{ConvParams, ConvSpec};
use super::exec::{ExecMode, Executor, Feature};
use super::norm::{Activation, NormParams};
use crate::error::{Error, Result};
use crate::plan::ChunkPlan;
use crate::tensor::{Rng, VideoTensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayerKind {
    CausalConv,
    FrameLayerNorm,
    GroupNorm,
    Nonlinearity,
    Resample,
}

#[derive(Debug, Clone)]
pub enum LayerDef {
    CausalConv {
        spec: ConvSpec,
        weight: Vec<f32>,
        bias: Vec<f32>,
    },
    FrameLayerNorm {
        gain: Vec<f32>,
        bias: Vec<f32>,
        eps: f32,
    },
    /// Statistics pooled over time; breaks chunked equivalence.
    GroupNorm {
        groups: usize,
        gain: Vec<f32>,
        bias: Vec<f32>,
        eps: f32,
    },
    Nonlinearity(Activation),
    /// Nearest 2x spatial; `temporal` also maps `T -> 2T - 1`.
    Resample {
        temporal: bool,
    },
}

impl LayerDef {
    /// Convolution with weights drawn from `N(0, 1/fan_in)` and zero bias.
    pub fn random_conv(spec: ConvSpec, rng: &mut Rng) -> Result<Self> {
        spec.validate()?;
        let std = 1.0 / (spec.fan_in() as f32).sqrt();
        Ok(LayerDef::CausalConv {
            spec,
            weight: rng.normal_vec(spec.weight_len(), 0.0, std)?,
            bias: vec![0.0; spec.out_channels],
        })
    }

    pub fn layernorm(channels: usize) -> Self {
        LayerDef::FrameLayerNorm {
            gain: vec![1.0; channels],
            bias: vec![0.0; channels],
            eps: 1e-6,
        }
    }

    pub fn groupnorm(channels: usize, groups: usize) -> Self {
        LayerDef::GroupNorm {
            groups,
            gain: vec![1.0; channels],
            bias: vec![0.0; channels],
            eps: 1e-6,
        }
    }

    pub fn kind(&self) -> LayerKind {
        match self {
            LayerDef::CausalConv { .. } => LayerKind::CausalConv,
            LayerDef::FrameLayerNorm { .. } => LayerKind::FrameLayerNorm,
            LayerDef::GroupNorm { .. } => LayerKind::GroupNorm,
            LayerDef::Nonlinearity(_) => LayerKind::Nonlinearity,
            LayerDef::Resample { .. } => LayerKind::Resample,
        }
    }

    /// Whether chunked execution reproduces whole-clip execution.
    pub fn is_stream_safe(&self) -> bool {
        !matches!(self, LayerDef::GroupNorm { .. })
    }

    pub fn apply(&self, ex: &mut Executor, x: Option<&VideoTensor>) -> Result<Feature> {
        match self {
            LayerDef::CausalConv { spec, weight, bias } => {
                ex.conv(x, &ConvParams::new(*spec, weight, bias)?)
            }
            LayerDef::FrameLayerNorm { gain, bias, eps } => {
                ex.layernorm(x, &NormParams { gain, bias, eps: *eps })
            }
            LayerDef::GroupNorm { groups, gain, bias, eps } => {
                ex.groupnorm(x, *groups, &NormParams { gain, bias, eps: *eps })
            }
            LayerDef::Nonlinearity(act) => ex.activation(x, *act),
            LayerDef::Resample { temporal } => ex.upsample(x, *temporal),
        }
    }
}

/// Runs a graph over `x` chunk by chunk (or once, for [`ChunkPlan::Direct`])
/// and concatenates the frames produced.
pub fn run_chunked<F>(x: &VideoTensor, plan: &ChunkPlan, mut graph: F) -> Result<VideoTensor>
where
    F: FnMut(&mut Executor, &VideoTensor) -> Result<Feature>,
{
    let (mut outs, _) = run_chunked_many(x, plan, 1, |ex, chunk| Ok(vec![graph(ex, chunk)?]))?;
    Ok(outs.remove(0))
}

/// Multi-output form of [`run_chunked`]. Also returns how many frames of
/// output 0 each chunk produced, skipping chunks that produced none.
pub fn run_chunked_many<F>(
    x: &VideoTensor,
    plan: &ChunkPlan,
    outputs: usize,
    mut graph: F,
) -> Result<(Vec<VideoTensor>, Vec<usize>)>
where
    F: FnMut(&mut Executor, &VideoTensor) -> Result<Vec<Feature>>,
{
    let mode = if plan.is_direct() { ExecMode::Direct } else { ExecMode::Streamed };
    let mut ex = Executor::new(mode);
    let mut parts: Vec<Vec<VideoTensor>> = vec![Vec::new(); outputs];
    let mut counts = Vec::new();
    let mut start = 0;
    for n in plan.chunk_sizes(x.time())? {
        ex.begin_chunk();
        let ys = graph(&mut ex, &x.slice_time(start, n)?)?;
        if ys.len() != outputs {
            return Err(Error::State(format!("graph returned {} outputs, expected {outputs}", ys.len())));
        }
        if let Some(y) = &ys[0] {
            counts.push(y.time());
        }
        for (part, y) in parts.iter_mut().zip(ys) {
            part.extend(y);
        }
        start += n;
    }
    ex.finish();
    let outs = parts
        .iter()
        .map(|p| {
            if p.is_empty() {
                return Err(Error::State("stream produced no frames".into()));
            }
            VideoTensor::concat_time(&p.iter().collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((outs, counts))
}

pub fn run_layer_stack(layers: &[LayerDef], x: &VideoTensor, plan: &ChunkPlan) -> Result<VideoTensor> {
    run_chunked(x, plan, |ex, chunk| {
        let mut h = Some(chunk.clone());
        for layer in layers {
            h = layer.apply(ex, h.as_ref())?;
        }
        Ok(h)
    })
}
