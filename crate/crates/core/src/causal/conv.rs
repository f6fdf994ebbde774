//! Causal 3D convolution.
//!
//! Every output frame is computed by [`conv_frame`] from exactly the `k_t`
//! input frames of its window, as an im2col product with fixed GEMM
//! dimensions. Whole-clip evaluation and streamed evaluation both go through
//! it, so for a given window they perform the same floating point operations
//! in the same order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{FrameGeom, VideoTensor};

/// Content of the `k_t - 1` frames prepended at stream start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TemporalPad {
    /// Copies of frame 0.
    #[default]
    ReplicateFirst,
    Zeros,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    /// `(k_t, k_h, k_w)`
    pub kernel: [usize; 3],
    /// `(s_t, s_h, s_w)`
    pub stride: [usize; 3],
    /// Symmetric zero padding `(p_h, p_w)`.
    pub padding: [usize; 2],
    pub pad_mode: TemporalPad,
}

impl ConvSpec {
    /// Kernel `k` in every axis, unit stride, "same" spatial padding.
    pub fn cubic(in_channels: usize, out_channels: usize, k: usize) -> Self {
        ConvSpec {
            in_channels,
            out_channels,
            kernel: [k, k, k],
            stride: [1, 1, 1],
            padding: [k / 2, k / 2],
            pad_mode: TemporalPad::ReplicateFirst,
        }
    }

    /// 1x1x1 channel remap.
    pub fn pointwise(in_channels: usize, out_channels: usize) -> Self {
        Self::cubic(in_channels, out_channels, 1)
    }

    pub fn with_stride(mut self, stride: [usize; 3]) -> Self {
        self.stride = stride;
        self
    }

    pub fn with_kernel(mut self, kernel: [usize; 3]) -> Self {
        self.kernel = kernel;
        self
    }

    pub fn with_pad_mode(mut self, pad_mode: TemporalPad) -> Self {
        self.pad_mode = pad_mode;
        self
    }

    pub fn k_t(&self) -> usize {
        self.kernel[0]
    }

    pub fn s_t(&self) -> usize {
        self.stride[0]
    }

    /// Frames of front padding: always `k_t - 1`.
    pub fn temporal_pad(&self) -> usize {
        self.kernel[0] - 1
    }

    pub fn weight_dims(&self) -> [usize; 5] {
        let [kt, kh, kw] = self.kernel;
        [self.out_channels, self.in_channels, kt, kh, kw]
    }

    pub fn weight_len(&self) -> usize {
        self.weight_dims().iter().product()
    }

    /// Rows of the im2col matrix: `in * k_t * k_h * k_w`.
    pub fn fan_in(&self) -> usize {
        self.in_channels * self.kernel.iter().product::<usize>()
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::param("convolution channel counts must be >= 1"));
        }
        if self.kernel.contains(&0) || self.stride.contains(&0) {
            return Err(Error::param(format!(
                "kernel {:?} and stride {:?} must be >= 1",
                self.kernel, self.stride
            )));
        }
        Ok(())
    }

    /// Output time for `t` input frames: `floor((t - 1) / s_t) + 1`.
    pub fn output_time(&self, t: usize) -> usize {
        (t - 1) / self.s_t() + 1
    }

    /// Output frame geometry, or a shape error when the kernel does not fit.
    pub fn output_geom(&self, input: FrameGeom) -> Result<FrameGeom> {
        if input.channels != self.in_channels {
            return Err(Error::shape(format!(
                "convolution expects {} input channels, got {}",
                self.in_channels, input.channels
            )));
        }
        let out = |size: usize, k: usize, s: usize, p: usize| -> Result<usize> {
            let padded = size + 2 * p;
            if padded < k {
                return Err(Error::shape(format!(
                    "kernel {k} larger than padded extent {padded}"
                )));
            }
            Ok((padded - k) / s + 1)
        };
        Ok(FrameGeom {
            channels: self.out_channels,
            height: out(input.height, self.kernel[1], self.stride[1], self.padding[0])?,
            width: out(input.width, self.kernel[2], self.stride[2], self.padding[1])?,
        })
    }

    pub(crate) fn check_params(&self, weight: &[f32], bias: &[f32]) -> Result<()> {
        self.validate()?;
        if weight.len() != self.weight_len() {
            return Err(Error::shape(format!(
                "weight has {} elements, expected {:?}",
                weight.len(),
                self.weight_dims()
            )));
        }
        if bias.len() != self.out_channels {
            return Err(Error::shape(format!(
                "bias has {} elements, expected {}",
                bias.len(),
                self.out_channels
            )));
        }
        Ok(())
    }
}

/// Borrowed convolution parameters.
#[derive(Debug, Clone, Copy)]
pub struct ConvParams<'a> {
    pub spec: ConvSpec,
    /// `(out, in, k_t, k_h, k_w)` row-major.
    pub weight: &'a [f32],
    pub bias: &'a [f32],
}

impl<'a> ConvParams<'a> {
    pub fn new(spec: ConvSpec, weight: &'a [f32], bias: &'a [f32]) -> Result<Self> {
        spec.check_params(weight, bias)?;
        Ok(ConvParams { spec, weight, bias })
    }
}

/// One output frame from the `k_t` input frames of its window.
pub(crate) fn conv_frame(
    window: &[&[f32]],
    geom: FrameGeom,
    out_geom: FrameGeom,
    p: &ConvParams<'_>,
) -> Vec<f32> {
    let spec = &p.spec;
    let [kt, kh, kw] = spec.kernel;
    let [_, sh, sw] = spec.stride;
    let [ph, pw] = spec.padding;
    debug_assert_eq!(window.len(), kt);
    let (ho, wo) = (out_geom.height, out_geom.width);
    let n = ho * wo;
    let k = spec.fan_in();
    let m = spec.out_channels;

    let direct = kh == 1 && kw == 1 && sh == 1 && sw == 1 && ph == 0 && pw == 0;
    let col: std::borrow::Cow<[f32]> = if direct && kt == 1 {
        std::borrow::Cow::Borrowed(window[0])
    } else {
        let mut col = vec![0.0f32; k * n];
        let (h, w) = (geom.height, geom.width);
        let plane = h * w;
        for ci in 0..geom.channels {
            for (a, frame) in window.iter().enumerate() {
                let src = &frame[ci * plane..(ci + 1) * plane];
                for b in 0..kh {
                    for c in 0..kw {
                        let row = ((ci * kt + a) * kh + b) * kw + c;
                        let dst = &mut col[row * n..(row + 1) * n];
                        for i in 0..ho {
                            let y = (i * sh + b) as isize - ph as isize;
                            if y < 0 || y >= h as isize {
                                continue;
                            }
                            let src_row = &src[y as usize * w..(y as usize + 1) * w];
                            let dst_row = &mut dst[i * wo..(i + 1) * wo];
                            for (j, d) in dst_row.iter_mut().enumerate() {
                                let x = (j * sw + c) as isize - pw as isize;
                                if x >= 0 && x < w as isize {
                                    *d = src_row[x as usize];
                                }
                            }
                        }
                    }
                }
            }
        }
        std::borrow::Cow::Owned(col)
    };

    let mut out = vec![0.0f32; m * n];
    for (o, chunk) in out.chunks_exact_mut(n).enumerate() {
        chunk.fill(p.bias[o]);
    }
    // SAFETY: a is m x k, b is k x n, c is m x n, all row-major with the
    // given strides and lengths checked by construction.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            p.weight.as_ptr(),
            k as isize,
            1,
            col.as_ptr(),
            n as isize,
            1,
            1.0,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    out
}

/// Front padding frames for a stream whose first frame is `first`.
pub(crate) fn pad_frames(first: &[f32], count: usize, mode: TemporalPad) -> Vec<Vec<f32>> {
    match mode {
        TemporalPad::ReplicateFirst => vec![first.to_vec(); count],
        TemporalPad::Zeros => vec![vec![0.0; first.len()]; count],
    }
}

/// Whole-clip causal convolution: `k_t - 1` frames of front padding, then a
/// stride-`s_t` sliding window. Output frame `n` reads padded frames
/// `[n*s_t, n*s_t + k_t)`.
pub fn causal_conv3d(x: &VideoTensor, p: &ConvParams<'_>) -> Result<VideoTensor> {
    let spec = &p.spec;
    spec.check_params(p.weight, p.bias)?;
    let geom = x.shape().frame_geom();
    let out_geom = spec.output_geom(geom)?;
    let frames = x.frames();
    let mut padded: Vec<&[f32]> = Vec::with_capacity(frames.len() + spec.temporal_pad());
    let pad = pad_frames(&frames[0], spec.temporal_pad(), spec.pad_mode);
    padded.extend(pad.iter().map(|f| f.as_slice()));
    padded.extend(frames.iter().map(|f| f.as_slice()));

    let t_out = spec.output_time(x.time());
    let (kt, st) = (spec.k_t(), spec.s_t());
    let out: Vec<Vec<f32>> = (0..t_out)
        .into_par_iter()
        .map(|n| conv_frame(&padded[n * st..n * st + kt], geom, out_geom, p))
        .collect();
    VideoTensor::from_frames(out_geom, &out)
}
