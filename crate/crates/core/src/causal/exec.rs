//! One graph description, two ways to run it.
//!
//! Model code is written once against [`Executor`]. In direct mode each call
//! evaluates the whole clip. In streamed mode the graph is re-run for every
//! chunk; each stateful call site owns a slot (a causal cache, a Haar pair
//! buffer, a first-frame flag) that persists across chunks. Slots are bound
//! by call order, so the graph must issue the same sequence of calls on
//! every chunk, including for inputs that produced no frames this time
//! (`None`).

use std::sync::Arc;

use rayon::prelude::*;

use super::cache::{CacheState, Frame, FrameWindow};
use super::conv::{causal_conv3d, conv_frame, ConvParams, TemporalPad};
use super::norm::{frame_layernorm, groupnorm_whole_clip, Activation, NormParams};
use crate::error::{Error, Result};
use crate::tensor::{FrameGeom, VideoTensor};
use crate::wavelet::{
    self, analyze_pair, check_even_spatial, halved_geom, spatial_analysis, spatial_synthesis,
    synthesize_pair, SubbandSet2D, SubbandSet3D,
};

/// Frames produced by one step; `None` when a chunk completes no window.
pub type Feature = Option<VideoTensor>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    Direct,
    Streamed,
}

#[derive(Debug)]
enum Slot {
    Conv(CacheState),
    Haar(FrameWindow),
    /// Operators emitting two frames per input frame, minus the very first.
    Expand { started: bool },
}

#[derive(Debug)]
pub struct Executor {
    mode: ExecMode,
    slots: Vec<Slot>,
    cursor: usize,
}

impl Executor {
    pub fn new(mode: ExecMode) -> Self {
        Executor {
            mode,
            slots: Vec::new(),
            cursor: 0,
        }
    }

    pub fn direct() -> Self {
        Self::new(ExecMode::Direct)
    }

    pub fn streamed() -> Self {
        Self::new(ExecMode::Streamed)
    }

    pub fn mode(&self) -> ExecMode {
        self.mode
    }

    /// Rewinds slot binding; call before running the graph on a new chunk.
    pub fn begin_chunk(&mut self) {
        self.cursor = 0;
    }

    /// Closes every causal cache; further chunks are state errors.
    pub fn finish(&mut self) {
        for slot in &mut self.slots {
            if let Slot::Conv(state) = slot {
                state.finish();
            }
        }
    }

    /// Causal caches of every convolution, in graph order.
    pub fn cache_states(&self) -> impl Iterator<Item = &CacheState> {
        self.slots.iter().filter_map(|s| match s {
            Slot::Conv(c) => Some(c),
            _ => None,
        })
    }

    fn slot(&mut self, make: impl FnOnce() -> Result<Slot>) -> Result<&mut Slot> {
        if self.cursor == self.slots.len() {
            self.slots.push(make()?);
        }
        self.cursor += 1;
        Ok(&mut self.slots[self.cursor - 1])
    }

    fn require<'a>(&self, x: Option<&'a VideoTensor>) -> Result<Option<&'a VideoTensor>> {
        if self.mode == ExecMode::Direct && x.is_none() {
            return Err(Error::State("direct execution received an empty feature".into()));
        }
        Ok(x)
    }

    pub fn conv(&mut self, x: Option<&VideoTensor>, p: &ConvParams<'_>) -> Result<Feature> {
        let x = self.require(x)?;
        if self.mode == ExecMode::Direct {
            return causal_conv3d(x.unwrap(), p).map(Some);
        }
        let spec = p.spec;
        let Slot::Conv(state) = self.slot(|| {
            Ok(Slot::Conv(CacheState::new(spec.k_t(), spec.s_t(), spec.pad_mode)?))
        })?
        else {
            return Err(slot_mismatch("convolution"));
        };
        let Some(x) = x else { return Ok(None) };
        let geom = x.shape().frame_geom();
        let out_geom = spec.output_geom(geom)?;
        let windows = state.push(to_frames(x))?;
        if windows.is_empty() {
            return Ok(None);
        }
        let out: Vec<Vec<f32>> = windows
            .par_iter()
            .map(|w| {
                let refs: Vec<&[f32]> = w.iter().map(|f| &f[..]).collect();
                conv_frame(&refs, geom, out_geom, p)
            })
            .collect();
        VideoTensor::from_frames(out_geom, &out).map(Some)
    }

    pub fn layernorm(&mut self, x: Option<&VideoTensor>, p: &NormParams<'_>) -> Result<Feature> {
        self.require(x)?
            .map(|x| frame_layernorm(x, p))
            .transpose()
    }

    /// Statistics over whatever frames are present: the whole clip when
    /// direct, only the current chunk when streamed.
    pub fn groupnorm(
        &mut self,
        x: Option<&VideoTensor>,
        groups: usize,
        p: &NormParams<'_>,
    ) -> Result<Feature> {
        self.require(x)?
            .map(|x| groupnorm_whole_clip(x, groups, p))
            .transpose()
    }

    pub fn activation(&mut self, x: Option<&VideoTensor>, act: Activation) -> Result<Feature> {
        Ok(self.require(x)?.map(|x| act.apply_tensor(x)))
    }

    /// 3D Haar analysis with the causal (replicate-first) temporal pairing.
    /// The clip must have an odd number of frames.
    pub fn dwt3d(&mut self, x: Option<&VideoTensor>) -> Result<Option<SubbandSet3D>> {
        let x = self.require(x)?;
        if self.mode == ExecMode::Direct {
            let x = x.unwrap();
            if x.time() % 2 == 0 {
                return Err(Error::shape(format!(
                    "causal wavelet stage needs an odd frame count, got {}",
                    x.time()
                )));
            }
            return wavelet::dwt3d(x).map(Some);
        }
        let Slot::Haar(window) =
            self.slot(|| Ok(Slot::Haar(FrameWindow::new(2, 2, TemporalPad::ReplicateFirst)?)))?
        else {
            return Err(slot_mismatch("wavelet analysis"));
        };
        let Some(x) = x else { return Ok(None) };
        check_even_spatial(x.shape())?;
        let geom = x.shape().frame_geom();
        let pairs = window.push(to_frames(x));
        if pairs.is_empty() {
            return Ok(None);
        }
        let per_pair: Vec<[Vec<f32>; 8]> = pairs
            .par_iter()
            .map(|p| analyze_pair(&p[0], &p[1], geom))
            .collect();
        let sub = halved_geom(geom);
        let bands = (0..8)
            .map(|i| {
                let frames: Vec<&Vec<f32>> = per_pair.iter().map(|b| &b[i]).collect();
                VideoTensor::from_frames(sub, &frames)
            })
            .collect::<Result<Vec<_>>>()?;
        SubbandSet3D::from_bands(bands).map(Some)
    }

    pub fn dwt2d(&mut self, x: Option<&VideoTensor>) -> Result<Option<SubbandSet2D>> {
        let Some(x) = self.require(x)? else { return Ok(None) };
        if self.mode == ExecMode::Direct {
            return wavelet::dwt2d(x).map(Some);
        }
        check_even_spatial(x.shape())?;
        let geom = x.shape().frame_geom();
        let per_frame: Vec<[Vec<f32>; 4]> = x
            .frames()
            .iter()
            .map(|f| spatial_analysis(f, geom))
            .collect();
        let sub = halved_geom(geom);
        let bands = (0..4)
            .map(|i| {
                let frames: Vec<&Vec<f32>> = per_frame.iter().map(|b| &b[i]).collect();
                VideoTensor::from_frames(sub, &frames)
            })
            .collect::<Result<Vec<_>>>()?;
        SubbandSet2D::from_bands(bands).map(Some)
    }

    /// Inverse of [`Self::dwt3d`]: `T` subband frames give `2T - 1` frames.
    pub fn idwt3d(&mut self, s: Option<&SubbandSet3D>) -> Result<Feature> {
        if self.mode == ExecMode::Direct {
            let s = s.ok_or_else(|| Error::State("direct execution received no subbands".into()))?;
            return wavelet::idwt3d(s, 2 * s.shape().time - 1).map(Some);
        }
        let started = self.expand_slot()?;
        let Some(s) = s else { return Ok(None) };
        let sub = s.shape();
        let geom = FrameGeom {
            channels: sub.channels,
            height: sub.height * 2,
            width: sub.width * 2,
        };
        let band_frames: Vec<Vec<Vec<f32>>> = s.bands().iter().map(|b| b.frames()).collect();
        let pairs: Vec<(Vec<f32>, Vec<f32>)> = (0..sub.time)
            .into_par_iter()
            .map(|t| {
                let bands: [&[f32]; 8] = std::array::from_fn(|i| band_frames[i][t].as_slice());
                synthesize_pair(bands, geom)
            })
            .collect();
        let mut frames: Vec<Vec<f32>> = pairs.into_iter().flat_map(|(a, b)| [a, b]).collect();
        if !std::mem::replace(started, true) {
            frames.remove(0);
        }
        VideoTensor::from_frames(geom, &frames).map(Some)
    }

    pub fn idwt2d(&mut self, s: Option<&SubbandSet2D>) -> Result<Feature> {
        match s {
            None if self.mode == ExecMode::Direct => {
                Err(Error::State("direct execution received no subbands".into()))
            }
            None => Ok(None),
            Some(s) if self.mode == ExecMode::Direct => wavelet::idwt2d(s).map(Some),
            Some(s) => {
                let sub = s.shape();
                let geom = FrameGeom {
                    channels: sub.channels,
                    height: sub.height * 2,
                    width: sub.width * 2,
                };
                let band_frames: Vec<Vec<Vec<f32>>> = s.bands().iter().map(|b| b.frames()).collect();
                let frames: Vec<Vec<f32>> = (0..sub.time)
                    .map(|t| {
                        let bands: [&[f32]; 4] = std::array::from_fn(|i| band_frames[i][t].as_slice());
                        spatial_synthesis(bands, geom)
                    })
                    .collect();
                VideoTensor::from_frames(geom, &frames).map(Some)
            }
        }
    }

    /// Nearest-neighbour 2x spatial upsampling and, if `temporal`, 2x frame
    /// repetition with the first duplicate dropped (`T -> 2T - 1`).
    pub fn upsample(&mut self, x: Option<&VideoTensor>, temporal: bool) -> Result<Feature> {
        let x = self.require(x)?;
        let drop_first = if !temporal {
            false
        } else if self.mode == ExecMode::Direct {
            true
        } else {
            let started = self.expand_slot()?;
            x.is_some() && !std::mem::replace(started, true)
        };
        let Some(x) = x else { return Ok(None) };
        upsample_nearest(x, temporal, drop_first).map(Some)
    }

    fn expand_slot(&mut self) -> Result<&mut bool> {
        match self.slot(|| Ok(Slot::Expand { started: false }))? {
            Slot::Expand { started } => Ok(started),
            _ => Err(slot_mismatch("temporal expansion")),
        }
    }
}

fn slot_mismatch(op: &str) -> Error {
    Error::State(format!(
        "{op} bound to a slot of another kind; the graph changed between chunks"
    ))
}

fn to_frames(x: &VideoTensor) -> Vec<Frame> {
    (0..x.time()).map(|t| Arc::from(x.frame(t))).collect()
}

/// Channel concatenation of two features that must agree on presence.
pub fn concat_features(a: Feature, b: Feature) -> Result<Feature> {
    match (a, b) {
        (None, None) => Ok(None),
        (Some(a), Some(b)) => VideoTensor::concat_channels(&[&a, &b]).map(Some),
        _ => Err(Error::State(
            "branches produced frames on different chunks".into(),
        )),
    }
}

pub fn add_features(a: Feature, b: Feature) -> Result<Feature> {
    match (a, b) {
        (None, None) => Ok(None),
        (Some(a), Some(b)) => a.add(&b).map(Some),
        _ => Err(Error::State(
            "branches produced frames on different chunks".into(),
        )),
    }
}

pub(crate) fn upsample_nearest(x: &VideoTensor, temporal: bool, drop_first: bool) -> Result<VideoTensor> {
    let geom = x.shape().frame_geom();
    let up = FrameGeom {
        height: geom.height * 2,
        width: geom.width * 2,
        ..geom
    };
    let mut frames = Vec::with_capacity(x.time() * 2);
    for t in 0..x.time() {
        let f = x.frame(t);
        let mut g = vec![0.0f32; up.len()];
        for c in 0..geom.channels {
            for i in 0..up.height {
                let src = &f[(c * geom.height + i / 2) * geom.width..][..geom.width];
                let dst = &mut g[(c * up.height + i) * up.width..][..up.width];
                for (j, d) in dst.iter_mut().enumerate() {
                    *d = src[j / 2];
                }
            }
        }
        if temporal {
            frames.push(g.clone());
        }
        frames.push(g);
    }
    if drop_first {
        frames.remove(0);
    }
    VideoTensor::from_frames(up, &frames)
}
