use serde::{Deserialize, Serialize};

use crate::causal::{Activation, ConvSpec};
use crate::error::{Error, Result};

pub const LATENT_CHOICES: [usize; 4] = [4, 8, 16, 32];
pub const PRESETS: [(&str, usize); 3] = [("wfvae-s", 128), ("wfvae-m", 160), ("wfvae-l", 192)];

/// Channel count of one stacked level-1 or level-2 subband set.
pub const LEVEL3D_CHANNELS: usize = 8 * 3;
/// Channel count of a stacked level-3 set.
pub const LEVEL2D_CHANNELS: usize = 4 * 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormKind {
    #[default]
    FrameLayernorm,
    /// Whole-clip group normalization; not chunk-safe.
    Groupnorm { groups: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub base_channels: usize,
    pub c_flow: usize,
    pub latent_channels: usize,
    pub input_channels: usize,
    pub blocks_per_stage: usize,
    pub activation: Activation,
    pub norm: NormKind,
}

impl ModelConfig {
    pub fn new(base_channels: usize, c_flow: usize, latent_channels: usize) -> Result<Self> {
        let c = ModelConfig {
            base_channels,
            c_flow,
            latent_channels,
            input_channels: 3,
            blocks_per_stage: 2,
            activation: Activation::Silu,
            norm: NormKind::FrameLayernorm,
        };
        c.validate()?;
        Ok(c)
    }

    /// `wfvae-s`, `wfvae-m` or `wfvae-l`.
    pub fn preset(name: &str, latent_channels: usize) -> Result<Self> {
        let (_, bc) = PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| Error::param(format!("unknown preset {name:?}")))?;
        Self::new(*bc, 128, latent_channels)
    }

    pub fn with_blocks(mut self, blocks_per_stage: usize) -> Self {
        self.blocks_per_stage = blocks_per_stage;
        self
    }

    pub fn with_norm(mut self, norm: NormKind) -> Self {
        self.norm = norm;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_channels != 3 {
            return Err(Error::param(format!("input_channels must be 3, got {}", self.input_channels)));
        }
        if !LATENT_CHOICES.contains(&self.latent_channels) {
            return Err(Error::param(format!(
                "latent_channels must be one of {LATENT_CHOICES:?}, got {}",
                self.latent_channels
            )));
        }
        if self.base_channels == 0 || self.c_flow == 0 {
            return Err(Error::param("base_channels and c_flow must be >= 1"));
        }
        if self.c_flow > 2 * self.base_channels {
            return Err(Error::param(format!(
                "c_flow {} exceeds the level-2 decoder width {}",
                self.c_flow,
                2 * self.base_channels
            )));
        }
        if let NormKind::Groupnorm { groups } = self.norm {
            for w in self.widths() {
                if groups == 0 || w % groups != 0 {
                    return Err(Error::param(format!("width {w} not divisible into {groups} groups")));
                }
            }
        }
        Ok(())
    }

    /// Backbone widths of the three stages.
    pub fn widths(&self) -> [usize; 3] {
        let bc = self.base_channels;
        [bc, 2 * bc, 3 * bc]
    }

    /// Every parameter of the graph in initialization order.
    pub fn registry(&self) -> Vec<ParamEntry> {
        let [w1, w2, w3] = self.widths();
        let (cf, l) = (self.c_flow, self.latent_channels);
        let mut r = Registry::default();
        r.conv("enc.stem", ConvSpec::cubic(LEVEL3D_CHANNELS, w1, 3));
        r.blocks("enc.stage1", w1, self.blocks_per_stage);
        r.conv("enc.down1", ConvSpec::cubic(w1, w1, 3).with_stride([2, 2, 2]));
        r.conv("enc.inflow2", ConvSpec::pointwise(LEVEL3D_CHANNELS, cf));
        r.conv("enc.stage2.in", ConvSpec::cubic(w1 + cf, w2, 3));
        r.blocks("enc.stage2", w2, self.blocks_per_stage);
        r.conv("enc.down2", ConvSpec::cubic(w2, w2, 3).with_stride([1, 2, 2]));
        r.conv("enc.inflow3", ConvSpec::pointwise(LEVEL2D_CHANNELS, cf));
        r.conv("enc.stage3.in", ConvSpec::cubic(w2 + cf, w3, 3));
        r.blocks("enc.stage3", w3, self.blocks_per_stage);
        r.norm("enc.head.norm", w3);
        r.conv("enc.head.conv", ConvSpec::cubic(w3, 2 * l, 3));

        r.conv("dec.conv_in", ConvSpec::cubic(l, w3, 3));
        r.blocks("dec.stage3", w3, self.blocks_per_stage);
        r.conv("dec.outflow3", ConvSpec::pointwise(cf, LEVEL2D_CHANNELS));
        r.conv("dec.up2", ConvSpec::cubic(w3, w2, 3));
        r.blocks("dec.stage2", w2, self.blocks_per_stage);
        r.conv("dec.outflow2", ConvSpec::pointwise(cf, LEVEL3D_CHANNELS));
        r.conv("dec.up1", ConvSpec::cubic(w2, w1, 3));
        r.blocks("dec.stage1", w1, self.blocks_per_stage);
        r.norm("dec.head.norm", w1);
        r.conv("dec.head.conv", ConvSpec::cubic(w1, LEVEL3D_CHANNELS, 3));
        r.0
    }

    /// Convolution specs by layer name (without the `.weight` suffix).
    pub fn conv_specs(&self) -> Vec<(String, ConvSpec)> {
        self.registry()
            .into_iter()
            .filter_map(|e| match e.role {
                ParamRole::ConvWeight(spec) => Some((e.name.trim_end_matches(".weight").to_string(), spec)),
                _ => None,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamRole {
    ConvWeight(ConvSpec),
    ConvBias,
    NormGain,
    NormBias,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamEntry {
    pub name: String,
    pub dims: Vec<usize>,
    pub role: ParamRole,
}

#[derive(Default)]
struct Registry(Vec<ParamEntry>);

impl Registry {
    fn push(&mut self, name: String, dims: Vec<usize>, role: ParamRole) {
        self.0.push(ParamEntry { name, dims, role });
    }

    fn conv(&mut self, name: &str, spec: ConvSpec) {
        self.push(format!("{name}.weight"), spec.weight_dims().to_vec(), ParamRole::ConvWeight(spec));
        self.push(format!("{name}.bias"), vec![spec.out_channels], ParamRole::ConvBias);
    }

    fn norm(&mut self, name: &str, channels: usize) {
        self.push(format!("{name}.gain"), vec![channels], ParamRole::NormGain);
        self.push(format!("{name}.bias"), vec![channels], ParamRole::NormBias);
    }

    fn blocks(&mut self, stage: &str, width: usize, count: usize) {
        for b in 0..count {
            for j in 1..=2 {
                self.norm(&format!("{stage}.block{b}.norm{j}"), width);
                self.conv(&format!("{stage}.block{b}.conv{j}"), ConvSpec::cubic(width, width, 3));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_and_widths() {
        for (name, bc) in PRESETS {
            let c = ModelConfig::preset(name, 4).unwrap();
            assert_eq!(c.widths(), [bc, 2 * bc, 3 * bc]);
            assert_eq!(c.c_flow, 128);
        }
        assert!(matches!(ModelConfig::preset("wfvae-xl", 4), Err(Error::Parameter(_))));
        assert!(ModelConfig::preset("wfvae-s", 5).is_err());
        assert!(ModelConfig::new(16, 40, 4).is_err());
    }

    #[test]
    fn registry_shapes() {
        let c = ModelConfig::preset("wfvae-s", 4).unwrap();
        let r = c.registry();
        let stem = r.iter().find(|e| e.name == "enc.stem.weight").unwrap();
        assert_eq!(stem.dims, [128, 24, 3, 3, 3]);
        let names: std::collections::HashSet<_> = r.iter().map(|e| &e.name).collect();
        assert_eq!(names.len(), r.len());
        let head = r.iter().find(|e| e.name == "enc.head.conv.weight").unwrap();
        assert_eq!(head.dims[0], 8);
    }
}
