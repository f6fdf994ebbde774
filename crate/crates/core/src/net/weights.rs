//! Named parameter tensors and the WFWT weight file.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use super::config::{ModelConfig, ParamRole};
use crate::causal::{ConvParams, ConvSpec, NormParams};
use crate::error::{Error, Result};
use crate::tensor::Rng;

pub const WEIGHT_MAGIC: &[u8; 4] = b"WFWT";
pub const WEIGHT_VERSION: u32 = 1;

pub const NORM_EPS: f32 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

/// Immutable map from parameter name to tensor.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeightStore {
    params: BTreeMap<String, Param>,
}

impl WeightStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, dims: Vec<usize>, data: Vec<f32>) -> Result<()> {
        let name = name.into();
        if dims.is_empty() || dims.len() > 5 {
            return Err(Error::Weight(format!("{name}: rank {} outside 1..=5", dims.len())));
        }
        if dims.iter().product::<usize>() != data.len() {
            return Err(Error::Weight(format!(
                "{name}: dims {dims:?} do not match {} values",
                data.len()
            )));
        }
        self.params.insert(name, Param { dims, data });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Param> {
        self.params
            .get(name)
            .ok_or_else(|| Error::Weight(format!("missing parameter {name}")))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn param_count(&self) -> usize {
        self.params.values().map(|p| p.data.len()).sum()
    }

    pub fn map_values(&self, f: impl Fn(&str, f32) -> f32) -> Self {
        WeightStore {
            params: self
                .params
                .iter()
                .map(|(k, p)| {
                    let data = p.data.iter().map(|&v| f(k, v)).collect();
                    (k.clone(), Param { dims: p.dims.clone(), data })
                })
                .collect(),
        }
    }

    /// Checks that the store holds exactly the parameters of `config`.
    pub fn validate(&self, config: &ModelConfig) -> Result<()> {
        let registry = config.registry();
        for e in &registry {
            let p = self.get(&e.name)?;
            if p.dims != e.dims {
                return Err(Error::Weight(format!(
                    "{}: expected dims {:?}, found {:?}",
                    e.name, e.dims, p.dims
                )));
            }
        }
        if registry.len() != self.len() {
            let known: std::collections::HashSet<&str> = registry.iter().map(|e| e.name.as_str()).collect();
            let extra: Vec<&str> = self.names().filter(|n| !known.contains(n)).collect();
            return Err(Error::Weight(format!("unexpected parameters {extra:?}")));
        }
        Ok(())
    }

    pub fn conv(&self, name: &str, spec: ConvSpec) -> Result<ConvParams<'_>> {
        let w = self.get(&format!("{name}.weight"))?;
        let b = self.get(&format!("{name}.bias"))?;
        ConvParams::new(spec, &w.data, &b.data).map_err(|e| Error::Weight(format!("{name}: {e}")))
    }

    pub fn norm(&self, name: &str) -> Result<NormParams<'_>> {
        Ok(NormParams {
            gain: &self.get(&format!("{name}.gain"))?.data,
            bias: &self.get(&format!("{name}.bias"))?.data,
            eps: NORM_EPS,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(WEIGHT_MAGIC);
        out.extend_from_slice(&WEIGHT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (name, p) in &self.params {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(p.dims.len() as u32).to_le_bytes());
            for &d in &p.dims {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in &p.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != WEIGHT_MAGIC {
            return Err(Error::Format("not a WFWT weight file".into()));
        }
        let version = r.u32()?;
        if version != WEIGHT_VERSION {
            return Err(Error::Format(format!("unsupported weight file version {version}")));
        }
        let count = r.u32()?;
        let mut store = WeightStore::new();
        for _ in 0..count {
            let len = u16::from_le_bytes(r.take(2)?.try_into().unwrap()) as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::Format("parameter name is not UTF-8".into()))?
                .to_string();
            let ndim = r.u32()? as usize;
            if ndim == 0 || ndim > 5 {
                return Err(Error::Format(format!("{name}: rank {ndim} outside 1..=5")));
            }
            let dims = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n = dims
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .and_then(|n| n.checked_mul(4))
                .ok_or_else(|| Error::Format(format!("{name}: dims overflow")))?;
            let data = r
                .take(n)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            if store.params.contains_key(&name) {
                return Err(Error::Format(format!("duplicate parameter {name}")));
            }
            store.insert(name, dims, data)?;
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(store)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(Error::Truncated {
            expected: self.pos.saturating_add(n),
            found: self.bytes.len(),
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Convolution weights `N(0, 1/fan_in)`, biases 0, norm gains 1. Parameters
/// are drawn in registry order from one generator.
pub fn init_weights(config: &ModelConfig, rng: &mut Rng) -> Result<WeightStore> {
    config.validate()?;
    let mut store = WeightStore::new();
    for e in config.registry() {
        let n: usize = e.dims.iter().product();
        let data = match e.role {
            ParamRole::ConvWeight(spec) => rng.normal_vec(n, 0.0, 1.0 / (spec.fan_in() as f32).sqrt())?,
            ParamRole::NormGain => vec![1.0; n],
            ParamRole::ConvBias | ParamRole::NormBias => vec![0.0; n],
        };
        store.insert(e.name, e.dims, data)?;
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ModelConfig {
        ModelConfig::new(8, 8, 4).unwrap().with_blocks(1)
    }

    #[test]
    fn init_is_deterministic() {
        let a = init_weights(&small(), &mut Rng::new(42)).unwrap();
        let b = init_weights(&small(), &mut Rng::new(42)).unwrap();
        let c = init_weights(&small(), &mut Rng::new(43)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        a.validate(&small()).unwrap();
        for (name, p) in a.iter() {
            if name.ends_with(".bias") {
                assert!(p.data.iter().all(|&v| v == 0.0), "{name}");
            }
        }
    }

    #[test]
    fn file_roundtrip() {
        let a = init_weights(&small(), &mut Rng::new(1)).unwrap();
        let bytes = a.to_bytes();
        assert_eq!(&bytes[..4], b"WFWT");
        assert_eq!(WeightStore::from_bytes(&bytes).unwrap(), a);
        assert!(matches!(WeightStore::from_bytes(&bytes[..bytes.len() - 1]), Err(Error::Truncated { .. })));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(WeightStore::from_bytes(&bad), Err(Error::Format(_))));
        let mut long = bytes;
        long.push(0);
        assert!(matches!(WeightStore::from_bytes(&long), Err(Error::Format(_))));
    }

    #[test]
    fn validate_rejects_other_config() {
        let a = init_weights(&small(), &mut Rng::new(1)).unwrap();
        let other = ModelConfig::new(16, 8, 4).unwrap().with_blocks(1);
        assert!(matches!(a.validate(&other), Err(Error::Weight(_))));
        let deeper = small().with_blocks(2);
        assert!(matches!(a.validate(&deeper), Err(Error::Weight(_))));
        let shallower = small().with_blocks(0);
        assert!(matches!(a.validate(&shallower), Err(Error::Weight(_))));
    }
}
