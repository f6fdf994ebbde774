//! Haar analysis and synthesis filter banks.
//!
//! The 3D transform is applied separably: one pass along time, then height,
//! then width, each a stride-2 filtering with the Haar pair
//!
//! ```text
//! h = [1, 1] / sqrt(2)   (scaling, low-pass)
//! g = [1, -1] / sqrt(2)  (wavelet, high-pass)
//! ```
//!
//! Subband keys read `time, height, width`: `hhg` is low-pass in time and
//! height and high-pass in width. Note that `h` is the *low* band here.
//!
//! Odd frame counts are handled by replicating frame 0 once at the front
//! before pairing (33 -> 34 -> 17). The first coefficient of every subband
//! then depends on frame 0 alone, which is what lets the wavelet stage sit
//! in front of causal convolutions. Synthesis drops that leading frame again.

mod pyramid;

pub use pyramid::{
    build_pyramid, load_pyramid, reconstruct_pyramid, save_pyramid, PyramidManifest,
    WaveletPyramid, PADDING_RULE,
};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{FrameGeom, Shape, VideoTensor};

const S: f32 = std::f32::consts::FRAC_1_SQRT_2;

/// The Haar scaling (`low`) and wavelet (`high`) filters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HaarFilters {
    pub low: [f32; 2],
    pub high: [f32; 2],
}

impl HaarFilters {
    pub const fn new() -> Self {
        HaarFilters {
            low: [S, S],
            high: [S, -S],
        }
    }
}

impl Default for HaarFilters {
    fn default() -> Self {
        Self::new()
    }
}

/// Keys of the eight 3D subbands in canonical order.
pub const KEYS_3D: [&str; 8] = ["hhh", "hhg", "hgh", "ghh", "hgg", "ggh", "ghg", "ggg"];
/// Keys of the four spatial subbands in canonical order.
pub const KEYS_2D: [&str; 4] = ["hh", "hg", "gh", "gg"];

/// Index into [`KEYS_3D`] of a subband produced by temporal band `t_high`
/// followed by spatial band `spatial` (index into [`KEYS_2D`]).
const fn key3d_index(t_high: bool, spatial: usize) -> usize {
    // spatial: 0=hh 1=hg 2=gh 3=gg
    match (t_high, spatial) {
        (false, 0) => 0, // hhh
        (false, 1) => 1, // hhg
        (false, 2) => 2, // hgh
        (true, 0) => 3,  // ghh
        (false, 3) => 4, // hgg
        (true, 2) => 5,  // ggh
        (true, 1) => 6,  // ghg
        _ => 7,          // ggg
    }
}

/// One Haar analysis step: pairs `(x[2i], x[2i+1])`.
pub fn haar_1d_analysis(signal: &[f32]) -> Result<(Vec<f32>, Vec<f32>)> {
    if signal.is_empty() || signal.len() % 2 != 0 {
        return Err(Error::shape(format!(
            "Haar analysis needs an even length >= 2, got {}",
            signal.len()
        )));
    }
    Ok(signal
        .chunks_exact(2)
        .map(|p| ((p[0] + p[1]) * S, (p[0] - p[1]) * S))
        .unzip())
}

pub fn haar_1d_synthesis(approx: &[f32], detail: &[f32]) -> Result<Vec<f32>> {
    if approx.len() != detail.len() {
        return Err(Error::shape(format!(
            "approx/detail length mismatch: {} vs {}",
            approx.len(),
            detail.len()
        )));
    }
    let mut out = Vec::with_capacity(approx.len() * 2);
    for (&a, &d) in approx.iter().zip(detail) {
        out.push((a + d) * S);
        out.push((a - d) * S);
    }
    Ok(out)
}

/// Eight subbands of one 3D analysis level, in [`KEYS_3D`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct SubbandSet3D {
    bands: Vec<VideoTensor>,
}

/// Four spatial subbands, in [`KEYS_2D`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct SubbandSet2D {
    bands: Vec<VideoTensor>,
}

macro_rules! subband_set_impl {
    ($ty:ident, $keys:ident, $n:expr) => {
        impl $ty {
            pub fn from_bands(bands: Vec<VideoTensor>) -> Result<Self> {
                if bands.len() != $n {
                    return Err(Error::shape(format!(
                        "expected {} subbands, got {}",
                        $n,
                        bands.len()
                    )));
                }
                let shape = bands[0].shape();
                if let Some(b) = bands.iter().find(|b| b.shape() != shape) {
                    return Err(Error::shape(format!(
                        "subbands disagree on shape: {} vs {}",
                        b.shape(),
                        shape
                    )));
                }
                Ok($ty { bands })
            }

            pub fn keys() -> &'static [&'static str] {
                &$keys
            }

            pub fn shape(&self) -> Shape {
                self.bands[0].shape()
            }

            pub fn bands(&self) -> &[VideoTensor] {
                &self.bands
            }

            pub fn into_bands(self) -> Vec<VideoTensor> {
                self.bands
            }

            pub fn get(&self, key: &str) -> Option<&VideoTensor> {
                $keys.iter().position(|k| *k == key).map(|i| &self.bands[i])
            }

            pub fn iter(&self) -> impl Iterator<Item = (&'static str, &VideoTensor)> {
                $keys.iter().copied().zip(self.bands.iter())
            }

            /// The low band (first key).
            pub fn low(&self) -> &VideoTensor {
                &self.bands[0]
            }

            /// Copy with the low band replaced.
            pub fn with_low(&self, low: VideoTensor) -> Result<Self> {
                let mut bands = self.bands.clone();
                bands[0] = low;
                Self::from_bands(bands)
            }

            /// All bands stacked along channels in key order.
            pub fn stack(&self) -> VideoTensor {
                let refs: Vec<&VideoTensor> = self.bands.iter().collect();
                VideoTensor::concat_channels(&refs).expect("subbands share a shape")
            }

            /// Inverse of [`Self::stack`]; `stacked` must have a multiple of
            #[doc = concat!(stringify!($n), " channels.")]
            pub fn unstack(stacked: &VideoTensor) -> Result<Self> {
                if stacked.channels() % $n != 0 {
                    return Err(Error::shape(format!(
                        "{} channels do not split into {} subbands",
                        stacked.channels(),
                        $n
                    )));
                }
                let c = stacked.channels() / $n;
                let bands = (0..$n)
                    .map(|i| stacked.slice_channels(i * c, c))
                    .collect::<Result<Vec<_>>>()?;
                Self::from_bands(bands)
            }

            pub fn map_bands(&self, f: impl Fn(&VideoTensor) -> VideoTensor) -> Result<Self> {
                Self::from_bands(self.bands.iter().map(f).collect())
            }
        }
    };
}

subband_set_impl!(SubbandSet3D, KEYS_3D, 8);
subband_set_impl!(SubbandSet2D, KEYS_2D, 4);

/// Temporal Haar step on one frame pair: `(low, high)`.
pub(crate) fn temporal_pair(a: &[f32], b: &[f32]) -> (Vec<f32>, Vec<f32>) {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| ((x + y) * S, (x - y) * S))
        .unzip()
}

/// Inverse temporal step: the two frames of a pair.
pub(crate) fn temporal_unpair(low: &[f32], high: &[f32]) -> (Vec<f32>, Vec<f32>) {
    low.iter()
        .zip(high)
        .map(|(&l, &h)| ((l + h) * S, (l - h) * S))
        .unzip()
}

/// Spatial analysis of one `(c, h, w)` frame into `[hh, hg, gh, gg]`,
/// height pass first, then width.
pub(crate) fn spatial_analysis(frame: &[f32], geom: FrameGeom) -> [Vec<f32>; 4] {
    let (h, w) = (geom.height, geom.width);
    let (ho, wo) = (h / 2, w / 2);
    let out_len = geom.channels * ho * wo;
    let mut bands: [Vec<f32>; 4] = std::array::from_fn(|_| Vec::with_capacity(out_len));
    for c in 0..geom.channels {
        let plane = &frame[c * h * w..(c + 1) * h * w];
        for i in 0..ho {
            let r0 = &plane[2 * i * w..(2 * i + 1) * w];
            let r1 = &plane[(2 * i + 1) * w..(2 * i + 2) * w];
            for j in 0..wo {
                let lo0 = (r0[2 * j] + r1[2 * j]) * S;
                let lo1 = (r0[2 * j + 1] + r1[2 * j + 1]) * S;
                let hi0 = (r0[2 * j] - r1[2 * j]) * S;
                let hi1 = (r0[2 * j + 1] - r1[2 * j + 1]) * S;
                bands[0].push((lo0 + lo1) * S);
                bands[1].push((lo0 - lo1) * S);
                bands[2].push((hi0 + hi1) * S);
                bands[3].push((hi0 - hi1) * S);
            }
        }
    }
    bands
}

/// Inverse of [`spatial_analysis`]; `geom` is the *output* frame geometry.
pub(crate) fn spatial_synthesis(bands: [&[f32]; 4], geom: FrameGeom) -> Vec<f32> {
    let (h, w) = (geom.height, geom.width);
    let (ho, wo) = (h / 2, w / 2);
    let mut out = vec![0.0f32; geom.len()];
    for c in 0..geom.channels {
        let plane = &mut out[c * h * w..(c + 1) * h * w];
        for i in 0..ho {
            for j in 0..wo {
                let k = (c * ho + i) * wo + j;
                let (hh, hg, gh, gg) = (bands[0][k], bands[1][k], bands[2][k], bands[3][k]);
                let lo0 = (hh + hg) * S;
                let lo1 = (hh - hg) * S;
                let hi0 = (gh + gg) * S;
                let hi1 = (gh - gg) * S;
                plane[2 * i * w + 2 * j] = (lo0 + hi0) * S;
                plane[(2 * i + 1) * w + 2 * j] = (lo0 - hi0) * S;
                plane[2 * i * w + 2 * j + 1] = (lo1 + hi1) * S;
                plane[(2 * i + 1) * w + 2 * j + 1] = (lo1 - hi1) * S;
            }
        }
    }
    out
}

pub(crate) fn check_even_spatial(shape: Shape) -> Result<()> {
    if shape.height % 2 != 0 || shape.width % 2 != 0 {
        return Err(Error::shape(format!(
            "height and width must be even for a Haar level, got {shape}"
        )));
    }
    Ok(())
}

pub(crate) fn halved_geom(geom: FrameGeom) -> FrameGeom {
    FrameGeom {
        height: geom.height / 2,
        width: geom.width / 2,
        ..geom
    }
}

/// 3D analysis of one temporal pair of frames into eight subband frames.
pub(crate) fn analyze_pair(a: &[f32], b: &[f32], geom: FrameGeom) -> [Vec<f32>; 8] {
    let (lo, hi) = temporal_pair(a, b);
    let lo_bands = spatial_analysis(&lo, geom);
    let hi_bands = spatial_analysis(&hi, geom);
    let mut out: [Vec<f32>; 8] = std::array::from_fn(|_| Vec::new());
    for (s, band) in lo_bands.into_iter().enumerate() {
        out[key3d_index(false, s)] = band;
    }
    for (s, band) in hi_bands.into_iter().enumerate() {
        out[key3d_index(true, s)] = band;
    }
    out
}

/// Inverse of [`analyze_pair`]: the two frames of the pair.
pub(crate) fn synthesize_pair(bands: [&[f32]; 8], geom: FrameGeom) -> (Vec<f32>, Vec<f32>) {
    let pick = |t_high: bool| -> [&[f32]; 4] {
        std::array::from_fn(|s| bands[key3d_index(t_high, s)])
    };
    let lo = spatial_synthesis(pick(false), geom);
    let hi = spatial_synthesis(pick(true), geom);
    temporal_unpair(&lo, &hi)
}

/// Number of subband frames produced from `t` input frames.
pub fn analysis_time(t: usize) -> usize {
    t.div_ceil(2)
}

/// Single-level 3D Haar analysis.
pub fn dwt3d(v: &VideoTensor) -> Result<SubbandSet3D> {
    check_even_spatial(v.shape())?;
    let geom = v.shape().frame_geom();
    let mut frames = v.frames();
    if frames.len() % 2 == 1 {
        frames.insert(0, frames[0].clone());
    }
    let per_pair: Vec<[Vec<f32>; 8]> = frames
        .par_chunks(2)
        .map(|p| analyze_pair(&p[0], &p[1], geom))
        .collect();
    collect_bands(per_pair, halved_geom(geom))
        .map(|bands| SubbandSet3D { bands })
}

fn collect_bands<const N: usize>(
    per_step: Vec<[Vec<f32>; N]>,
    geom: FrameGeom,
) -> Result<Vec<VideoTensor>> {
    let mut by_band: Vec<Vec<Vec<f32>>> = (0..N).map(|_| Vec::with_capacity(per_step.len())).collect();
    for step in per_step {
        for (i, band) in step.into_iter().enumerate() {
            by_band[i].push(band);
        }
    }
    by_band
        .iter()
        .map(|frames| VideoTensor::from_frames(geom, frames))
        .collect()
}

/// Inverse of [`dwt3d`], trimming the replicated frame when `original_t` is odd.
pub fn idwt3d(s: &SubbandSet3D, original_t: usize) -> Result<VideoTensor> {
    let sub = s.shape();
    let full = 2 * sub.time;
    if original_t != full && original_t + 1 != full {
        return Err(Error::shape(format!(
            "{} subband frames cannot reconstruct {original_t} frames",
            sub.time
        )));
    }
    let geom = FrameGeom {
        channels: sub.channels,
        height: sub.height * 2,
        width: sub.width * 2,
    };
    let band_frames: Vec<Vec<Vec<f32>>> = s.bands.iter().map(|b| b.frames()).collect();
    let pairs: Vec<(Vec<f32>, Vec<f32>)> = (0..sub.time)
        .into_par_iter()
        .map(|t| {
            let bands: [&[f32]; 8] = std::array::from_fn(|i| band_frames[i][t].as_slice());
            synthesize_pair(bands, geom)
        })
        .collect();
    let mut frames: Vec<Vec<f32>> = pairs.into_iter().flat_map(|(a, b)| [a, b]).collect();
    if original_t + 1 == full {
        frames.remove(0);
    }
    VideoTensor::from_frames(geom, &frames)
}

/// Single-level spatial Haar analysis; time is untouched.
pub fn dwt2d(v: &VideoTensor) -> Result<SubbandSet2D> {
    check_even_spatial(v.shape())?;
    let geom = v.shape().frame_geom();
    let per_frame: Vec<[Vec<f32>; 4]> = v
        .frames()
        .par_iter()
        .map(|f| spatial_analysis(f, geom))
        .collect();
    collect_bands(per_frame, halved_geom(geom)).map(|bands| SubbandSet2D { bands })
}

pub fn idwt2d(s: &SubbandSet2D) -> Result<VideoTensor> {
    let sub = s.shape();
    let geom = FrameGeom {
        channels: sub.channels,
        height: sub.height * 2,
        width: sub.width * 2,
    };
    let band_frames: Vec<Vec<Vec<f32>>> = s.bands.iter().map(|b| b.frames()).collect();
    let frames: Vec<Vec<f32>> = (0..sub.time)
        .into_par_iter()
        .map(|t| {
            let bands: [&[f32]; 4] = std::array::from_fn(|i| band_frames[i][t].as_slice());
            spatial_synthesis(bands, geom)
        })
        .collect();
    VideoTensor::from_frames(geom, &frames)
}
