//! Encoder and decoder graphs.

use std::collections::HashMap;

use super::config::{ModelConfig, NormKind};
use super::weights::WeightStore;
use crate::causal::{
    add_features, concat_features, run_chunked_many, ConvSpec, Executor, Feature,
};
use crate::error::{Error, Result};
use crate::plan::ChunkPlan;
use crate::tensor::{Rng, Shape, VideoTensor};
use crate::wavelet::{idwt2d, idwt3d, SubbandSet2D, SubbandSet3D};

/// Diagonal Gaussian posterior over the latent.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianLatent {
    pub mean: VideoTensor,
    pub logvar: VideoTensor,
}

impl GaussianLatent {
    pub fn new(mean: VideoTensor, logvar: VideoTensor) -> Result<Self> {
        mean.expect_same_shape(&logvar)?;
        if !logvar.is_finite() {
            return Err(Error::Value("logvar is not finite".into()));
        }
        Ok(GaussianLatent { mean, logvar })
    }

    pub fn shape(&self) -> Shape {
        self.mean.shape()
    }

    /// Splits a `2 * latent` channel tensor into mean and logvar halves.
    pub fn from_moments(m: &VideoTensor) -> Result<Self> {
        if m.channels() % 2 != 0 {
            return Err(Error::shape(format!("moments need an even channel count, got {}", m.channels())));
        }
        let l = m.channels() / 2;
        Self::new(m.slice_channels(0, l)?, m.slice_channels(l, l)?)
    }
}

/// `z = mean + exp(logvar / 2) * eps`, `eps ~ N(0, 1)`.
pub fn sample_latent(g: &GaussianLatent, rng: &mut Rng) -> Result<VideoTensor> {
    let eps = VideoTensor::random_normal(rng, g.shape(), 0.0, 1.0)?;
    let std = g.logvar.map(|lv| (0.5 * lv).exp());
    let scaled = std.zip_map(&eps, |s, e| s * e)?;
    g.mean.add(&scaled)
}

/// Latent frames for a clip of `t` frames.
pub fn latent_time(t: usize) -> usize {
    (t - 1) / 4 + 1
}

/// Clip length reconstructed from `t_latent` latent frames.
pub fn video_time(t_latent: usize) -> usize {
    4 * (t_latent - 1) + 1
}

/// Level-2 recombination: the hhh band gains the inverse 2D transform of
/// the level-3 prediction.
pub fn recombine_level2(outflow: &SubbandSet3D, w3_hat: &SubbandSet2D) -> Result<SubbandSet3D> {
    outflow.with_low(outflow.low().add(&idwt2d(w3_hat)?)?)
}

/// Level-1 recombination: the hhh band gains the inverse 3D transform of
/// the (recombined) level-2 prediction.
pub fn recombine_level1(head: &SubbandSet3D, w2_hat: &SubbandSet3D) -> Result<SubbandSet3D> {
    let t = 2 * w2_hat.shape().time - 1;
    head.with_low(head.low().add(&idwt3d(w2_hat, t)?)?)
}

#[derive(Debug, Clone)]
pub struct EncodeOutput {
    pub latent: GaussianLatent,
    pub w2: SubbandSet3D,
    pub w3: SubbandSet2D,
    /// Latent frames emitted per chunk (streamed runs only).
    pub latent_chunks: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct DecodeOutput {
    pub video: VideoTensor,
    pub w2_hat: SubbandSet3D,
    pub w3_hat: SubbandSet2D,
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub reconstruction: VideoTensor,
    pub latent: GaussianLatent,
    pub z: VideoTensor,
    pub w2_hat: SubbandSet3D,
    pub w3_hat: SubbandSet2D,
    pub w2: SubbandSet3D,
    pub w3: SubbandSet2D,
}

/// A configuration bound to a validated weight store.
#[derive(Debug, Clone)]
pub struct WfVae {
    config: ModelConfig,
    weights: WeightStore,
    specs: HashMap<String, ConvSpec>,
}

impl WfVae {
    pub fn new(config: ModelConfig, weights: WeightStore) -> Result<Self> {
        config.validate()?;
        weights.validate(&config)?;
        let specs = config.conv_specs().into_iter().collect();
        Ok(WfVae { config, weights, specs })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn weights(&self) -> &WeightStore {
        &self.weights
    }

    pub fn check_input(&self, v: &VideoTensor) -> Result<()> {
        let s = v.shape();
        if s.channels != self.config.input_channels {
            return Err(Error::shape(format!("expected {} channels, got {}", self.config.input_channels, s.channels)));
        }
        if s.height % 8 != 0 || s.width % 8 != 0 {
            return Err(Error::shape(format!("height and width must be divisible by 8, got {s}")));
        }
        if s.time % 4 != 1 {
            return Err(Error::shape(format!("frame count must be 1 mod 4, got {}", s.time)));
        }
        Ok(())
    }

    pub fn encode(&self, v: &VideoTensor, plan: &ChunkPlan) -> Result<EncodeOutput> {
        self.check_input(v)?;
        let (mut outs, counts) = run_chunked_many(v, plan, 3, |ex, chunk| self.encode_graph(ex, chunk))?;
        let w3 = SubbandSet2D::unstack(&outs.pop().unwrap())?;
        let w2 = SubbandSet3D::unstack(&outs.pop().unwrap())?;
        Ok(EncodeOutput {
            latent: GaussianLatent::from_moments(&outs[0])?,
            w2,
            w3,
            latent_chunks: if plan.is_direct() { Vec::new() } else { counts },
        })
    }

    pub fn decode(&self, z: &VideoTensor, original_t: usize, plan: &ChunkPlan) -> Result<DecodeOutput> {
        let s = z.shape();
        if s.channels != self.config.latent_channels {
            return Err(Error::shape(format!(
                "latent has {} channels, config expects {}",
                s.channels, self.config.latent_channels
            )));
        }
        if original_t != video_time(s.time) {
            return Err(Error::shape(format!(
                "{} latent frames decode to {} frames, not {original_t}",
                s.time,
                video_time(s.time)
            )));
        }
        let (mut outs, _) = run_chunked_many(z, plan, 3, |ex, chunk| self.decode_graph(ex, chunk))?;
        let w3_hat = SubbandSet2D::unstack(&outs.pop().unwrap())?;
        let w2_hat = SubbandSet3D::unstack(&outs.pop().unwrap())?;
        Ok(DecodeOutput {
            video: outs.pop().unwrap(),
            w2_hat,
            w3_hat,
        })
    }

    pub fn forward(&self, v: &VideoTensor, rng: &mut Rng, plan: &ChunkPlan) -> Result<ForwardOutput> {
        let enc = self.encode(v, plan)?;
        let z = sample_latent(&enc.latent, rng)?;
        let dec = self.decode(&z, v.time(), &decode_plan(plan, &enc))?;
        Ok(ForwardOutput {
            reconstruction: dec.video,
            latent: enc.latent,
            z,
            w2_hat: dec.w2_hat,
            w3_hat: dec.w3_hat,
            w2: enc.w2,
            w3: enc.w3,
        })
    }

    fn conv(&self, ex: &mut Executor, x: Option<&VideoTensor>, name: &str) -> Result<Feature> {
        let spec = *self
            .specs
            .get(name)
            .ok_or_else(|| Error::Weight(format!("no convolution named {name}")))?;
        ex.conv(x, &self.weights.conv(name, spec)?)
    }

    fn norm(&self, ex: &mut Executor, x: Option<&VideoTensor>, name: &str) -> Result<Feature> {
        let p = self.weights.norm(name)?;
        match self.config.norm {
            NormKind::FrameLayernorm => ex.layernorm(x, &p),
            NormKind::Groupnorm { groups } => ex.groupnorm(x, groups, &p),
        }
    }

    fn act(&self, ex: &mut Executor, x: Option<&VideoTensor>) -> Result<Feature> {
        ex.activation(x, self.config.activation)
    }

    /// `norm -> act -> conv`, twice, plus the skip, per block.
    fn stage(&self, ex: &mut Executor, stage: &str, x: Feature) -> Result<Feature> {
        let mut x = x;
        for b in 0..self.config.blocks_per_stage {
            let mut h = x.clone();
            for j in 1..=2 {
                h = self.norm(ex, h.as_ref(), &format!("{stage}.block{b}.norm{j}"))?;
                h = self.act(ex, h.as_ref())?;
                h = self.conv(ex, h.as_ref(), &format!("{stage}.block{b}.conv{j}"))?;
            }
            x = add_features(x, h)?;
        }
        Ok(x)
    }

    fn inflow(&self, ex: &mut Executor, w: Option<&VideoTensor>, name: &str) -> Result<Feature> {
        let h = self.conv(ex, w, name)?;
        self.act(ex, h.as_ref())
    }

    fn outflow(&self, ex: &mut Executor, f: Option<&VideoTensor>, name: &str) -> Result<Feature> {
        let f = f.map(|f| f.slice_channels(0, self.config.c_flow)).transpose()?;
        let h = self.act(ex, f.as_ref())?;
        self.conv(ex, h.as_ref(), name)
    }

    fn encode_graph(&self, ex: &mut Executor, v: &VideoTensor) -> Result<Vec<Feature>> {
        let w1 = ex.dwt3d(Some(v))?;
        let w2 = ex.dwt3d(w1.as_ref().map(|s| s.low()))?;
        let w3 = ex.dwt2d(w2.as_ref().map(|s| s.low()))?;
        let (w1, w2, w3) = (
            w1.map(|s| s.stack()),
            w2.map(|s| s.stack()),
            w3.map(|s| s.stack()),
        );

        let h = self.conv(ex, w1.as_ref(), "enc.stem")?;
        let h = self.stage(ex, "enc.stage1", h)?;
        let h = self.conv(ex, h.as_ref(), "enc.down1")?;
        let flow = self.inflow(ex, w2.as_ref(), "enc.inflow2")?;
        let h = concat_features(h, flow)?;
        let h = self.conv(ex, h.as_ref(), "enc.stage2.in")?;
        let h = self.stage(ex, "enc.stage2", h)?;
        let h = self.conv(ex, h.as_ref(), "enc.down2")?;
        let flow = self.inflow(ex, w3.as_ref(), "enc.inflow3")?;
        let h = concat_features(h, flow)?;
        let h = self.conv(ex, h.as_ref(), "enc.stage3.in")?;
        let h = self.stage(ex, "enc.stage3", h)?;
        let h = self.norm(ex, h.as_ref(), "enc.head.norm")?;
        let h = self.act(ex, h.as_ref())?;
        let moments = self.conv(ex, h.as_ref(), "enc.head.conv")?;
        Ok(vec![moments, w2, w3])
    }

    fn decode_graph(&self, ex: &mut Executor, z: &VideoTensor) -> Result<Vec<Feature>> {
        let h = self.conv(ex, Some(z), "dec.conv_in")?;
        let f3 = self.stage(ex, "dec.stage3", h)?;
        let w3_hat = self.outflow(ex, f3.as_ref(), "dec.outflow3")?;

        let h = ex.upsample(f3.as_ref(), false)?;
        let h = self.conv(ex, h.as_ref(), "dec.up2")?;
        let f2 = self.stage(ex, "dec.stage2", h)?;
        let w2_out = self.outflow(ex, f2.as_ref(), "dec.outflow2")?;
        let w3_set = w3_hat.as_ref().map(SubbandSet2D::unstack).transpose()?;
        let low = ex.idwt2d(w3_set.as_ref())?;
        let w2_hat = add_low(w2_out, low)?;

        let h = ex.upsample(f2.as_ref(), true)?;
        let h = self.conv(ex, h.as_ref(), "dec.up1")?;
        let f1 = self.stage(ex, "dec.stage1", h)?;
        let h = self.norm(ex, f1.as_ref(), "dec.head.norm")?;
        let h = self.act(ex, h.as_ref())?;
        let w1_out = self.conv(ex, h.as_ref(), "dec.head.conv")?;
        let w2_set = w2_hat.as_ref().map(SubbandSet3D::unstack).transpose()?;
        let low = ex.idwt3d(w2_set.as_ref())?;
        let w1_hat = add_low(w1_out, low)?;

        let w1_set = w1_hat.as_ref().map(SubbandSet3D::unstack).transpose()?;
        let video = ex.idwt3d(w1_set.as_ref())?;
        Ok(vec![video, w2_hat, w3_hat])
    }
}

/// Streamed decoding consumes latent frames as the streamed encoder emitted
/// them.
pub fn decode_plan(plan: &ChunkPlan, enc: &EncodeOutput) -> ChunkPlan {
    if plan.is_direct() {
        ChunkPlan::Direct
    } else {
        ChunkPlan::Explicit(enc.latent_chunks.clone())
    }
}

/// Adds `low` to the hhh band of a stacked 3D subband feature.
fn add_low(stacked: Feature, low: Feature) -> Result<Feature> {
    match (stacked, low) {
        (None, None) => Ok(None),
        (Some(s), Some(low)) => {
            let set = SubbandSet3D::unstack(&s)?;
            Ok(Some(set.with_low(set.low().add(&low)?)?.stack()))
        }
        _ => Err(Error::State("recombination inputs arrived on different chunks".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::init_weights;

    fn tiny(seed: u64) -> WfVae {
        let config = ModelConfig::new(8, 8, 4).unwrap().with_blocks(1);
        let w = init_weights(&config, &mut Rng::new(seed)).unwrap();
        WfVae::new(config, w).unwrap()
    }

    fn video(seed: u64, t: usize, hw: usize) -> VideoTensor {
        VideoTensor::random_normal(&mut Rng::new(seed), Shape::new(3, t, hw, hw).unwrap(), 0.0, 1.0).unwrap()
    }

    #[test]
    fn shape_laws() {
        let m = tiny(1);
        let v = video(2, 9, 16);
        let enc = m.encode(&v, &ChunkPlan::Direct).unwrap();
        assert_eq!(enc.latent.shape(), Shape::new(4, 3, 2, 2).unwrap());
        assert_eq!(enc.w2.shape(), Shape::new(3, 3, 4, 4).unwrap());
        assert_eq!(enc.w3.shape(), Shape::new(3, 3, 2, 2).unwrap());
        let dec = m.decode(&enc.latent.mean, 9, &ChunkPlan::Direct).unwrap();
        assert_eq!(dec.video.shape(), v.shape());
        assert_eq!(dec.w2_hat.shape(), enc.w2.shape());
        assert_eq!(dec.w3_hat.shape(), enc.w3.shape());
        let single = m.encode(&video(3, 1, 16), &ChunkPlan::Direct).unwrap();
        assert_eq!(single.latent.shape().time, 1);
    }

    #[test]
    fn bad_inputs() {
        let m = tiny(1);
        assert!(matches!(m.encode(&video(1, 8, 16), &ChunkPlan::Direct), Err(Error::Shape(_))));
        assert!(matches!(m.encode(&video(1, 5, 12), &ChunkPlan::Direct), Err(Error::Shape(_))));
        let z = VideoTensor::zeros(Shape::new(4, 2, 2, 2).unwrap());
        assert!(matches!(m.decode(&z, 6, &ChunkPlan::Direct), Err(Error::Shape(_))));
    }

    #[test]
    fn streamed_matches_direct() {
        let m = tiny(4);
        let v = video(5, 13, 16);
        let d = m.encode(&v, &ChunkPlan::Direct).unwrap();
        for plan in [ChunkPlan::Canonical(4), ChunkPlan::Explicit(vec![2, 1, 5, 3, 2])] {
            let s = m.encode(&v, &plan).unwrap();
            assert_eq!(s.latent, d.latent, "{plan}");
            assert_eq!(s.latent_chunks.iter().sum::<usize>(), 4);
            let dd = m.decode(&d.latent.mean, 13, &ChunkPlan::Direct).unwrap();
            let sd = m.decode(&d.latent.mean, 13, &ChunkPlan::Explicit(s.latent_chunks.clone())).unwrap();
            assert_eq!(sd.video, dd.video);
        }
    }

    #[test]
    fn zero_weights_give_zero_video() {
        let m = tiny(1);
        let zero = WfVae::new(m.config().clone(), m.weights().map_values(|_, _| 0.0)).unwrap();
        let z = video(2, 3, 2).slice_channels(0, 3).unwrap();
        let z = VideoTensor::concat_channels(&[&z, &z.slice_channels(0, 1).unwrap()]).unwrap();
        let out = zero.decode(&z, 9, &ChunkPlan::Direct).unwrap();
        assert_eq!(out.video.max_abs(), 0.0);
    }

    #[test]
    fn sampling() {
        let s = Shape::new(4, 1, 2, 2).unwrap();
        let mean = VideoTensor::random_normal(&mut Rng::new(1), s, 0.0, 1.0).unwrap();
        let g = GaussianLatent::new(mean.clone(), VideoTensor::new(4, 1, 2, 2, -60.0).unwrap()).unwrap();
        let z = sample_latent(&g, &mut Rng::new(2)).unwrap();
        assert!(z.max_abs_diff(&mean).unwrap() <= 1e-7);
        let g = GaussianLatent::new(mean, VideoTensor::new(4, 1, 2, 2, 0.7).unwrap()).unwrap();
        assert_eq!(sample_latent(&g, &mut Rng::new(3)).unwrap(), sample_latent(&g, &mut Rng::new(3)).unwrap());
    }

    #[test]
    fn recombination_is_additive() {
        let mut rng = Rng::new(8);
        let s3 = |rng: &mut Rng, t| {
            SubbandSet3D::unstack(&VideoTensor::random_normal(rng, Shape::new(24, t, 4, 4).unwrap(), 0.0, 1.0).unwrap())
                .unwrap()
        };
        let out2 = s3(&mut rng, 3);
        let w3 = SubbandSet2D::unstack(
            &VideoTensor::random_normal(&mut rng, Shape::new(12, 3, 2, 2).unwrap(), 0.0, 1.0).unwrap(),
        )
        .unwrap();
        let zero3 = w3.map_bands(|b| VideoTensor::zeros(b.shape())).unwrap();
        let a = recombine_level2(&out2, &w3).unwrap();
        let b = recombine_level2(&out2, &zero3).unwrap();
        assert_eq!(b, out2);
        let delta = a.low().zip_map(b.low(), |x, y| x - y).unwrap();
        assert!(delta.max_abs_diff(&idwt2d(&w3).unwrap()).unwrap() < 1e-6);

        let head = SubbandSet3D::unstack(
            &VideoTensor::random_normal(&mut rng, Shape::new(24, 5, 8, 8).unwrap(), 0.0, 1.0).unwrap(),
        )
        .unwrap();
        let c = recombine_level1(&head, &a).unwrap();
        let delta = c.low().zip_map(head.low(), |x, y| x - y).unwrap();
        assert!(delta.max_abs_diff(&idwt3d(&a, 5).unwrap()).unwrap() < 1e-6);
    }
}
