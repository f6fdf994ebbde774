//! Normalization and pointwise nonlinearity.
//!
//! [`frame_layernorm`] takes its statistics from one frame at a time and is
//! therefore unaffected by how a stream is chunked. [`groupnorm_whole_clip`]
//! pools over time as well; it exists as the counterexample.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{FrameGeom, VideoTensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    /// `x * sigmoid(x)`
    #[default]
    Silu,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f32) -> f32 {
        match self {
            Activation::Silu => x / (1.0 + (-x).exp()),
            Activation::Identity => x,
        }
    }

    pub fn apply_tensor(self, x: &VideoTensor) -> VideoTensor {
        x.map(|v| self.apply(v))
    }
}

/// Borrowed per-channel affine parameters of a normalization layer.
#[derive(Debug, Clone, Copy)]
pub struct NormParams<'a> {
    pub gain: &'a [f32],
    pub bias: &'a [f32],
    pub eps: f32,
}

impl NormParams<'_> {
    fn check(&self, channels: usize) -> Result<()> {
        if !(self.eps > 0.0) {
            return Err(Error::param(format!("eps must be > 0, got {}", self.eps)));
        }
        if self.gain.len() != channels || self.bias.len() != channels {
            return Err(Error::shape(format!(
                "normalization expects {channels} gains and biases, got {} and {}",
                self.gain.len(),
                self.bias.len()
            )));
        }
        Ok(())
    }
}

/// Mean and biased variance, accumulated in `f64`.
fn moments<'a>(values: impl Iterator<Item = &'a f32> + Clone) -> (f64, f64) {
    let (mut n, mut sum) = (0usize, 0.0f64);
    for &v in values.clone() {
        sum += v as f64;
        n += 1;
    }
    let mean = sum / n as f64;
    let var = values.map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n as f64;
    (mean, var)
}

/// Layer norm of one `(c, h, w)` frame over all of its elements.
pub(crate) fn layernorm_frame(frame: &[f32], geom: FrameGeom, p: &NormParams<'_>) -> Vec<f32> {
    let (mean, var) = moments(frame.iter());
    let inv = 1.0 / (var + p.eps as f64).sqrt();
    let plane = geom.plane();
    let mut out = Vec::with_capacity(frame.len());
    for c in 0..geom.channels {
        let (g, b) = (p.gain[c] as f64, p.bias[c] as f64);
        out.extend(
            frame[c * plane..(c + 1) * plane]
                .iter()
                .map(|&x| (((x as f64 - mean) * inv) * g + b) as f32),
        );
    }
    out
}

/// Per-frame layer normalization over `(channels, height, width)`.
pub fn frame_layernorm(x: &VideoTensor, p: &NormParams<'_>) -> Result<VideoTensor> {
    p.check(x.channels())?;
    let geom = x.shape().frame_geom();
    let frames: Vec<Vec<f32>> = x
        .frames()
        .iter()
        .map(|f| layernorm_frame(f, geom, p))
        .collect();
    VideoTensor::from_frames(geom, &frames)
}

/// Group normalization with statistics over `(group channels, time, height,
/// width)` of the whole tensor it is given.
pub fn groupnorm_whole_clip(x: &VideoTensor, groups: usize, p: &NormParams<'_>) -> Result<VideoTensor> {
    p.check(x.channels())?;
    if groups == 0 || x.channels() % groups != 0 {
        return Err(Error::param(format!(
            "{} channels not divisible into {groups} groups",
            x.channels()
        )));
    }
    let per_group = x.channels() / groups;
    let block = x.time() * x.height() * x.width();
    let mut out = x.clone();
    let data = out.data_mut();
    for g in 0..groups {
        let span = g * per_group * block..(g + 1) * per_group * block;
        let (mean, var) = moments(x.data()[span.clone()].iter());
        let inv = 1.0 / (var + p.eps as f64).sqrt();
        for (i, v) in data[span].iter_mut().enumerate() {
            let c = g * per_group + i / block;
            *v = (((*v as f64 - mean) * inv) * p.gain[c] as f64 + p.bias[c] as f64) as f32;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Rng, Shape};

    fn ones(n: usize) -> Vec<f32> {
        vec![1.0; n]
    }

    #[test]
    fn layernorm_constant_frame_gives_bias() {
        let x = VideoTensor::new(3, 2, 4, 4, 0.1).unwrap();
        let bias = [0.5, -1.0, 2.0];
        let p = NormParams { gain: &ones(3), bias: &bias, eps: 1e-6 };
        let y = frame_layernorm(&x, &p).unwrap();
        for c in 0..3 {
            for v in y.slice_channels(c, 1).unwrap().data() {
                assert!((v - bias[c]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn layernorm_statistics_per_frame() {
        let x = VideoTensor::random_normal(&mut Rng::new(3), Shape::new(4, 3, 5, 5).unwrap(), 2.0, 3.0)
            .unwrap();
        let zeros = vec![0.0; 4];
        let y = frame_layernorm(&x, &NormParams { gain: &ones(4), bias: &zeros, eps: 1e-6 }).unwrap();
        for t in 0..3 {
            let f = y.frame(t);
            let mean: f64 = f.iter().map(|&v| v as f64).sum::<f64>() / f.len() as f64;
            let var: f64 = f.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / f.len() as f64;
            assert!(mean.abs() < 1e-5);
            assert!((var - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn layernorm_rejects_bad_eps() {
        let x = VideoTensor::new(1, 1, 1, 1, 0.0).unwrap();
        for eps in [0.0, -1.0, f32::NAN] {
            let p = NormParams { gain: &[1.0], bias: &[0.0], eps };
            assert!(matches!(frame_layernorm(&x, &p), Err(Error::Parameter(_))));
        }
    }

    #[test]
    fn groupnorm_single_frame_matches_layernorm_with_one_group() {
        let x = VideoTensor::random_normal(&mut Rng::new(4), Shape::new(4, 1, 3, 3).unwrap(), 0.0, 1.0)
            .unwrap();
        let gain = [1.0, 2.0, 0.5, 1.5];
        let bias = [0.0, 0.1, -0.2, 0.3];
        let p = NormParams { gain: &gain, bias: &bias, eps: 1e-5 };
        let a = groupnorm_whole_clip(&x, 1, &p).unwrap();
        let b = frame_layernorm(&x, &p).unwrap();
        assert!(a.max_abs_diff(&b).unwrap() < 1e-6);
    }

    #[test]
    fn groupnorm_constant_and_errors() {
        let x = VideoTensor::new(4, 3, 2, 2, 7.0).unwrap();
        let bias = [1.0, 2.0, 3.0, 4.0];
        let p = NormParams { gain: &ones(4), bias: &bias, eps: 1e-6 };
        let y = groupnorm_whole_clip(&x, 2, &p).unwrap();
        for c in 0..4 {
            assert!(y.slice_channels(c, 1).unwrap().data().iter().all(|v| (v - bias[c]).abs() < 1e-6));
        }
        assert!(matches!(groupnorm_whole_clip(&x, 3, &p), Err(Error::Parameter(_))));
        assert!(matches!(groupnorm_whole_clip(&x, 0, &p), Err(Error::Parameter(_))));
    }

    #[test]
    fn silu_values() {
        assert_eq!(Activation::Silu.apply(0.0), 0.0);
        assert!((Activation::Silu.apply(1.0) - 0.731_058_6).abs() < 1e-6);
        assert!((Activation::Silu.apply(-1.0) + 0.268_941_4).abs() < 1e-6);
    }
}
