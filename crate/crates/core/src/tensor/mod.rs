//! Dense rank-4 video tensors.
//!
//! A [`VideoTensor`] stores 32-bit reals in row-major `(channels, time,
//! height, width)` order with width fastest. One temporal frame is therefore
//! strided across channels; [`VideoTensor::frame`] gathers it into a
//! contiguous `(channels, height, width)` buffer, which is the unit the
//! streaming code moves around.

mod io;
mod rng;

pub use io::{load_tensor, read_tensor, save_tensor, write_tensor, TENSOR_MAGIC, TENSOR_VERSION};
pub use rng::Rng;

use crate::error::{Error, Result};

/// Shape of a video tensor as `(channels, time, height, width)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub channels: usize,
    pub time: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub fn new(channels: usize, time: usize, height: usize, width: usize) -> Result<Self> {
        let shape = Shape {
            channels,
            time,
            height,
            width,
        };
        shape.validate()?;
        Ok(shape)
    }

    fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.time == 0 || self.height == 0 || self.width == 0 {
            return Err(Error::shape(format!("all dimensions must be >= 1, got {self}")));
        }
        self.checked_len()
            .map(|_| ())
            .ok_or_else(|| Error::shape(format!("element count of {self} overflows")))
    }

    fn checked_len(&self) -> Option<usize> {
        self.channels
            .checked_mul(self.time)?
            .checked_mul(self.height)?
            .checked_mul(self.width)
    }

    pub fn len(&self) -> usize {
        self.channels * self.time * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_array(&self) -> [usize; 4] {
        [self.channels, self.time, self.height, self.width]
    }

    /// Geometry of a single temporal frame.
    pub fn frame_geom(&self) -> FrameGeom {
        FrameGeom {
            channels: self.channels,
            height: self.height,
            width: self.width,
        }
    }

    pub fn with_time(&self, time: usize) -> Shape {
        Shape { time, ..*self }
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "({}, {}, {}, {})",
            self.channels, self.time, self.height, self.width
        )
    }
}

/// Geometry of one `(channels, height, width)` frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FrameGeom {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl FrameGeom {
    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }

    pub fn with_time(&self, time: usize) -> Shape {
        Shape {
            channels: self.channels,
            time,
            height: self.height,
            width: self.width,
        }
    }
}

/// Rank-4 `(c, t, h, w)` tensor of `f32`, row-major with `w` fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoTensor {
    shape: Shape,
    data: Vec<f32>,
}

impl VideoTensor {
    /// A tensor of the given shape with every element set to `fill`.
    pub fn new(c: usize, t: usize, h: usize, w: usize, fill: f32) -> Result<Self> {
        let shape = Shape::new(c, t, h, w)?;
        if !fill.is_finite() {
            return Err(Error::Value(format!("fill value {fill} is not finite")));
        }
        Ok(VideoTensor {
            shape,
            data: vec![fill; shape.len()],
        })
    }

    pub fn zeros(shape: Shape) -> Self {
        VideoTensor {
            shape,
            data: vec![0.0; shape.len()],
        }
    }

    pub fn from_vec(shape: Shape, data: Vec<f32>) -> Result<Self> {
        shape.validate()?;
        if data.len() != shape.len() {
            return Err(Error::shape(format!(
                "shape {shape} needs {} elements, got {}",
                shape.len(),
                data.len()
            )));
        }
        Ok(VideoTensor { shape, data })
    }

    /// Builds a tensor by evaluating `f(c, t, h, w)` at every index.
    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(shape.len());
        for c in 0..shape.channels {
            for t in 0..shape.time {
                for h in 0..shape.height {
                    for w in 0..shape.width {
                        data.push(f(c, t, h, w));
                    }
                }
            }
        }
        VideoTensor { shape, data }
    }

    /// Elements i.i.d. normal(`mean`, `std`) drawn from `rng` in storage order.
    pub fn random_normal(rng: &mut Rng, shape: Shape, mean: f32, std: f32) -> Result<Self> {
        shape.validate()?;
        let data = rng.normal_vec(shape.len(), mean, std)?;
        Ok(VideoTensor { shape, data })
    }

    /// Elements i.i.d. uniform on `[low, high)`.
    pub fn random_uniform(rng: &mut Rng, shape: Shape, low: f32, high: f32) -> Result<Self> {
        shape.validate()?;
        let data = rng.uniform_vec(shape.len(), low, high)?;
        Ok(VideoTensor { shape, data })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn channels(&self) -> usize {
        self.shape.channels
    }

    pub fn time(&self) -> usize {
        self.shape.time
    }

    pub fn height(&self) -> usize {
        self.shape.height
    }

    pub fn width(&self) -> usize {
        self.shape.width
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    /// Flat offset of `(c, t, h, w)`: `((c*T + t)*H + h)*W + w`.
    #[inline]
    pub fn offset(&self, c: usize, t: usize, h: usize, w: usize) -> usize {
        let s = &self.shape;
        ((c * s.time + t) * s.height + h) * s.width + w
    }

    #[inline]
    pub fn get(&self, c: usize, t: usize, h: usize, w: usize) -> f32 {
        self.data[self.offset(c, t, h, w)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, t: usize, h: usize, w: usize, value: f32) {
        let i = self.offset(c, t, h, w);
        self.data[i] = value;
    }

    /// Contiguous `(c, h, w)` copy of frame `t`.
    pub fn frame(&self, t: usize) -> Vec<f32> {
        let plane = self.shape.height * self.shape.width;
        let mut out = Vec::with_capacity(self.shape.channels * plane);
        for c in 0..self.shape.channels {
            let start = (c * self.shape.time + t) * plane;
            out.extend_from_slice(&self.data[start..start + plane]);
        }
        out
    }

    pub fn frames(&self) -> Vec<Vec<f32>> {
        (0..self.time()).map(|t| self.frame(t)).collect()
    }

    /// Reassembles a tensor from contiguous `(c, h, w)` frames.
    pub fn from_frames<F: AsRef<[f32]>>(geom: FrameGeom, frames: &[F]) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::shape("cannot build a tensor from zero frames"));
        }
        let shape = geom.with_time(frames.len());
        shape.validate()?;
        let plane = geom.plane();
        let mut data = vec![0.0; shape.len()];
        for (t, frame) in frames.iter().enumerate() {
            let frame = frame.as_ref();
            if frame.len() != geom.len() {
                return Err(Error::shape(format!(
                    "frame {t} has {} elements, expected {}",
                    frame.len(),
                    geom.len()
                )));
            }
            for c in 0..geom.channels {
                let dst = (c * shape.time + t) * plane;
                data[dst..dst + plane].copy_from_slice(&frame[c * plane..(c + 1) * plane]);
            }
        }
        Ok(VideoTensor { shape, data })
    }

    /// Frames `[start, start + len)`.
    pub fn slice_time(&self, start: usize, len: usize) -> Result<Self> {
        if len == 0 || start + len > self.time() {
            return Err(Error::shape(format!(
                "time slice [{start}, {}) out of range for {} frames",
                start + len,
                self.time()
            )));
        }
        let shape = self.shape.with_time(len);
        let plane = self.height() * self.width();
        let mut data = Vec::with_capacity(shape.len());
        for c in 0..self.channels() {
            let from = (c * self.time() + start) * plane;
            data.extend_from_slice(&self.data[from..from + len * plane]);
        }
        Ok(VideoTensor { shape, data })
    }

    /// Channels `[start, start + len)`.
    pub fn slice_channels(&self, start: usize, len: usize) -> Result<Self> {
        if len == 0 || start + len > self.channels() {
            return Err(Error::shape(format!(
                "channel slice [{start}, {}) out of range for {} channels",
                start + len,
                self.channels()
            )));
        }
        let block = self.time() * self.height() * self.width();
        let data = self.data[start * block..(start + len) * block].to_vec();
        Ok(VideoTensor {
            shape: Shape {
                channels: len,
                ..self.shape
            },
            data,
        })
    }

    /// Concatenates along time; all parts must share `(c, h, w)`.
    pub fn concat_time(parts: &[&VideoTensor]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("concat_time of zero tensors"))?;
        let geom = first.shape.frame_geom();
        if let Some(bad) = parts.iter().find(|p| p.shape.frame_geom() != geom) {
            return Err(Error::shape(format!(
                "concat_time: {} does not match frame geometry of {}",
                bad.shape, first.shape
            )));
        }
        let time: usize = parts.iter().map(|p| p.time()).sum();
        let shape = geom.with_time(time);
        let plane = geom.plane();
        let mut data = Vec::with_capacity(shape.len());
        for c in 0..geom.channels {
            for p in parts {
                let from = c * p.time() * plane;
                data.extend_from_slice(&p.data[from..from + p.time() * plane]);
            }
        }
        Ok(VideoTensor { shape, data })
    }

    /// Concatenates along channels; all parts must share `(t, h, w)`.
    pub fn concat_channels(parts: &[&VideoTensor]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("concat_channels of zero tensors"))?;
        let key = |s: Shape| (s.time, s.height, s.width);
        if let Some(bad) = parts.iter().find(|p| key(p.shape) != key(first.shape)) {
            return Err(Error::shape(format!(
                "concat_channels: {} does not match {}",
                bad.shape, first.shape
            )));
        }
        let channels = parts.iter().map(|p| p.channels()).sum();
        let mut data = Vec::with_capacity(parts.iter().map(|p| p.len()).sum());
        for p in parts {
            data.extend_from_slice(&p.data);
        }
        Ok(VideoTensor {
            shape: Shape {
                channels,
                ..first.shape
            },
            data,
        })
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        VideoTensor {
            shape: self.shape,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_map(&self, other: &VideoTensor, f: impl Fn(f32, f32) -> f32) -> Result<Self> {
        self.expect_same_shape(other)?;
        Ok(VideoTensor {
            shape: self.shape,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &VideoTensor) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn expect_same_shape(&self, other: &VideoTensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(format!(
                "shape mismatch: {} vs {}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    pub fn max_abs_diff(&self, other: &VideoTensor) -> Result<f32> {
        self.expect_same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(0.0f32, |m, (a, b)| m.max((a - b).abs())))
    }

    pub fn max_abs(&self) -> f32 {
        self.data.iter().fold(0.0f32, |m, x| m.max(x.abs()))
    }

    /// Sum of squares accumulated in `f64`.
    pub fn sum_squares(&self) -> f64 {
        self.data.iter().map(|&x| (x as f64) * (x as f64)).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use super::Rng;
    use proptest::prelude::*;

    #[test]
    fn new_tensor_fills() {
        let z = VideoTensor::new(1, 2, 2, 2, 0.0).unwrap();
        assert_eq!(z.len(), 8);
        assert!(z.data().iter().all(|&x| x == 0.0));

        let c = VideoTensor::new(3, 4, 4, 4, 1.5).unwrap();
        assert_eq!(c.len(), 192);
        assert!(c.data().iter().all(|&x| x == 1.5));

        let one = VideoTensor::new(1, 1, 1, 1, -2.0).unwrap();
        assert_eq!(one.data(), &[-2.0]);
    }

    #[test]
    fn zero_dimension_is_shape_error() {
        assert!(matches!(VideoTensor::new(0, 1, 1, 1, 0.0), Err(Error::Shape(_))));
        assert!(matches!(VideoTensor::new(1, 1, 0, 1, 0.0), Err(Error::Shape(_))));
    }

    #[test]
    fn random_normal_is_seeded() {
        let shape = Shape::new(2, 3, 4, 4).unwrap();
        let a = VideoTensor::random_normal(&mut Rng::new(42), shape, 0.0, 1.0).unwrap();
        let b = VideoTensor::random_normal(&mut Rng::new(42), shape, 0.0, 1.0).unwrap();
        assert_eq!(a, b);
        let c = VideoTensor::random_normal(&mut Rng::new(43), shape, 0.0, 1.0).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn random_normal_degenerate_and_negative_std() {
        let shape = Shape::new(1, 2, 3, 3).unwrap();
        let t = VideoTensor::random_normal(&mut Rng::new(1), shape, 0.25, 0.0).unwrap();
        assert!(t.data().iter().all(|&x| x == 0.25));
        assert!(matches!(
            VideoTensor::random_normal(&mut Rng::new(1), shape, 0.0, -1.0),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn random_normal_sample_mean() {
        let shape = Shape::new(1, 1, 4, 4).unwrap();
        let t = VideoTensor::random_normal(&mut Rng::new(7), shape, 0.0, 1.0).unwrap();
        let mean: f32 = t.data().iter().sum::<f32>() / t.len() as f32;
        assert!(mean.abs() < 1.0, "mean {mean}");
    }

    #[test]
    fn frames_roundtrip_and_concat() {
        let shape = Shape::new(2, 5, 3, 2).unwrap();
        let v = VideoTensor::from_fn(shape, |c, t, h, w| (c * 1000 + t * 100 + h * 10 + w) as f32);
        let rebuilt = VideoTensor::from_frames(shape.frame_geom(), &v.frames()).unwrap();
        assert_eq!(rebuilt, v);

        let a = v.slice_time(0, 2).unwrap();
        let b = v.slice_time(2, 3).unwrap();
        assert_eq!(VideoTensor::concat_time(&[&a, &b]).unwrap(), v);

        let lo = v.slice_channels(0, 1).unwrap();
        let hi = v.slice_channels(1, 1).unwrap();
        assert_eq!(VideoTensor::concat_channels(&[&lo, &hi]).unwrap(), v);
        assert_eq!(hi.get(0, 4, 2, 1), 1421.0);
    }

    proptest! {
        #[test]
        fn offset_matches_nested_loops(c in 1usize..4, t in 1usize..5, h in 1usize..5, w in 1usize..5) {
            let shape = Shape::new(c, t, h, w).unwrap();
            let v = VideoTensor::from_fn(shape, |a, b, d, e| (a * 1_000_000 + b * 10_000 + d * 100 + e) as f32);
            let mut flat = 0usize;
            for ci in 0..c {
                for ti in 0..t {
                    for hi in 0..h {
                        for wi in 0..w {
                            prop_assert_eq!(v.offset(ci, ti, hi, wi), flat);
                            prop_assert_eq!(v.data()[flat], (ci * 1_000_000 + ti * 10_000 + hi * 100 + wi) as f32);
                            flat += 1;
                        }
                    }
                }
            }
        }
    }
}
