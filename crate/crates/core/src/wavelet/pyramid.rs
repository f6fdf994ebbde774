//! Three-level pyramid: two 3D levels followed by one spatial level,
//! giving 4x8x8 (time x height x width) reduction of the low band.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{dwt2d, dwt3d, idwt2d, idwt3d, SubbandSet2D, SubbandSet3D, KEYS_2D, KEYS_3D};
use crate::error::{Error, Result};
use crate::tensor::{load_tensor, save_tensor, Shape, VideoTensor};

/// Identifier of the odd-length temporal boundary rule, recorded in manifests.
pub const PADDING_RULE: &str = "replicate-first";

#[derive(Debug, Clone, PartialEq)]
pub struct WaveletPyramid {
    pub level1: SubbandSet3D,
    pub level2: SubbandSet3D,
    pub level3: SubbandSet2D,
    pub original_shape: Shape,
}

pub fn build_pyramid(v: &VideoTensor) -> Result<WaveletPyramid> {
    let shape = v.shape();
    if shape.height % 8 != 0 || shape.width % 8 != 0 {
        return Err(Error::shape(format!(
            "pyramid needs height and width divisible by 8, got {shape}"
        )));
    }
    let level1 = dwt3d(v)?;
    let level2 = dwt3d(level1.low())?;
    let level3 = dwt2d(level2.low())?;
    Ok(WaveletPyramid {
        level1,
        level2,
        level3,
        original_shape: shape,
    })
}

impl WaveletPyramid {
    pub fn check_consistent(&self) -> Result<()> {
        let (s1, s2, s3) = (
            self.level1.shape(),
            self.level2.shape(),
            self.level3.shape(),
        );
        let o = self.original_shape;
        let ok = s1.channels == o.channels
            && s1.time == super::analysis_time(o.time)
            && s1.height * 2 == o.height
            && s1.width * 2 == o.width
            && s2.channels == s1.channels
            && s2.time == super::analysis_time(s1.time)
            && s2.height * 2 == s1.height
            && s2.width * 2 == s1.width
            && s3.channels == s2.channels
            && s3.time == s2.time
            && s3.height * 2 == s2.height
            && s3.width * 2 == s2.width;
        if !ok {
            return Err(Error::shape(format!(
                "inconsistent pyramid: input {o}, levels {s1} / {s2} / {s3}"
            )));
        }
        Ok(())
    }
}

/// Inverts [`build_pyramid`]: level 3 replaces level 2's low band, level 2
/// replaces level 1's low band, and level 1 yields the video.
pub fn reconstruct_pyramid(p: &WaveletPyramid, original_t: usize) -> Result<VideoTensor> {
    p.check_consistent()?;
    let low2 = idwt2d(&p.level3)?;
    let low1 = idwt3d(&p.level2.with_low(low2)?, p.level1.shape().time)?;
    idwt3d(&p.level1.with_low(low1)?, original_t)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelEntry {
    pub level: u32,
    pub kind: String,
    pub keys: Vec<String>,
    pub shape: [usize; 4],
}

/// `manifest.json` written next to the `L{level}_{key}.wfvt` files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PyramidManifest {
    pub levels: Vec<LevelEntry>,
    pub original_shape: [usize; 4],
    pub padding_rule: String,
}

fn band_file(level: u32, key: &str) -> String {
    format!("L{level}_{key}.wfvt")
}

pub fn save_pyramid(p: &WaveletPyramid, dir: impl AsRef<Path>) -> Result<PyramidManifest> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let sets: [(u32, &str, Vec<(&str, &VideoTensor)>, Shape); 3] = [
        (1, "3d", p.level1.iter().collect(), p.level1.shape()),
        (2, "3d", p.level2.iter().collect(), p.level2.shape()),
        (3, "2d", p.level3.iter().collect(), p.level3.shape()),
    ];
    let mut levels = Vec::new();
    for (level, kind, bands, shape) in sets {
        for (key, band) in &bands {
            save_tensor(band, dir.join(band_file(level, key)))?;
        }
        levels.push(LevelEntry {
            level,
            kind: kind.to_string(),
            keys: bands.iter().map(|(k, _)| k.to_string()).collect(),
            shape: shape.as_array(),
        });
    }
    let manifest = PyramidManifest {
        levels,
        original_shape: p.original_shape.as_array(),
        padding_rule: PADDING_RULE.to_string(),
    };
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_vec_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

pub fn load_pyramid(dir: impl AsRef<Path>) -> Result<WaveletPyramid> {
    let dir = dir.as_ref();
    let path = dir.join("manifest.json");
    let manifest: PyramidManifest =
        serde_json::from_slice(&fs::read(&path).map_err(|e| Error::io(&path, e))?)?;
    if manifest.padding_rule != PADDING_RULE {
        return Err(Error::Format(format!(
            "unknown padding rule {:?}",
            manifest.padding_rule
        )));
    }
    let load_level = |level: u32, keys: &[&str]| -> Result<Vec<VideoTensor>> {
        keys.iter()
            .map(|k| load_tensor(dir.join(band_file(level, k))))
            .collect()
    };
    let [c, t, h, w] = manifest.original_shape;
    let pyramid = WaveletPyramid {
        level1: SubbandSet3D::from_bands(load_level(1, &KEYS_3D)?)?,
        level2: SubbandSet3D::from_bands(load_level(2, &KEYS_3D)?)?,
        level3: SubbandSet2D::from_bands(load_level(3, &KEYS_2D)?)?,
        original_shape: Shape::new(c, t, h, w)?,
    };
    pyramid.check_consistent()?;
    Ok(pyramid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Rng;

    #[test]
    fn shape_law_33_frames() {
        // Shapes only; a constant input keeps this cheap to check.
        let v = VideoTensor::new(3, 33, 256, 256, 0.5).unwrap();
        let p = build_pyramid(&v).unwrap();
        assert_eq!(p.level1.shape(), Shape::new(3, 17, 128, 128).unwrap());
        assert_eq!(p.level2.shape(), Shape::new(3, 9, 64, 64).unwrap());
        assert_eq!(p.level3.shape(), Shape::new(3, 9, 32, 32).unwrap());
        // constant input: only the low chain is nonzero
        for set in [&p.level1, &p.level2] {
            assert!(set.bands()[1..].iter().all(|b| b.max_abs() == 0.0));
            assert!(set.low().max_abs() > 0.0);
        }
        assert!(p.level3.bands()[1..].iter().all(|b| b.max_abs() == 0.0));
        let r = reconstruct_pyramid(&p, 33).unwrap();
        assert!(r.max_abs_diff(&v).unwrap() <= 1e-5);
    }

    #[test]
    fn roundtrip_random_and_zero() {
        for (seed, t) in [(1u64, 1usize), (2, 5), (3, 6), (4, 9)] {
            let v = VideoTensor::random_normal(
                &mut Rng::new(seed),
                Shape::new(2, t, 16, 8).unwrap(),
                0.0,
                1.0,
            )
            .unwrap();
            let p = build_pyramid(&v).unwrap();
            assert!(reconstruct_pyramid(&p, t).unwrap().max_abs_diff(&v).unwrap() <= 1e-5);
        }
        let z = VideoTensor::zeros(Shape::new(1, 5, 8, 8).unwrap());
        let p = build_pyramid(&z).unwrap();
        assert_eq!(reconstruct_pyramid(&p, 5).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn rejects_indivisible_space() {
        let v = VideoTensor::new(1, 5, 12, 16, 0.0).unwrap();
        assert!(matches!(build_pyramid(&v), Err(Error::Shape(_))));
    }

    #[test]
    fn inconsistent_levels_rejected() {
        let v = VideoTensor::new(1, 5, 16, 16, 1.0).unwrap();
        let mut p = build_pyramid(&v).unwrap();
        p.level3 = dwt2d(&VideoTensor::new(1, 2, 8, 8, 0.0).unwrap()).unwrap();
        assert!(matches!(reconstruct_pyramid(&p, 5), Err(Error::Shape(_))));
    }

    #[test]
    fn directory_roundtrip() {
        let v = VideoTensor::random_normal(
            &mut Rng::new(11),
            Shape::new(3, 5, 16, 16).unwrap(),
            0.0,
            1.0,
        )
        .unwrap();
        let p = build_pyramid(&v).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let m = save_pyramid(&p, dir.path()).unwrap();
        assert_eq!(m.levels.len(), 3);
        assert_eq!(m.padding_rule, "replicate-first");
        assert!(dir.path().join("L1_hhh.wfvt").exists());
        assert!(dir.path().join("L3_gg.wfvt").exists());
        assert_eq!(load_pyramid(dir.path()).unwrap(), p);
    }
}
