//! Energy and entropy statistics of wavelet subbands.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Shape, VideoTensor};
use crate::wavelet::{SubbandSet2D, SubbandSet3D, WaveletPyramid};

pub const DEFAULT_BINS: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubbandStats {
    pub level: usize,
    pub key: String,
    /// Sum of squared coefficients.
    pub energy: f64,
    pub energy_fraction: f64,
    pub entropy_bits: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    pub level: usize,
    /// Every band is identically zero; fractions are reported as 0.
    pub degenerate: bool,
    pub bands: Vec<SubbandStats>,
}

impl LevelStats {
    pub fn get(&self, key: &str) -> Option<&SubbandStats> {
        self.bands.iter().find(|b| b.key == key)
    }

    pub fn total_energy(&self) -> f64 {
        self.bands.iter().map(|b| b.energy).sum()
    }
}

/// Anything that yields `(key, band)` pairs.
pub trait Subbands {
    fn keyed(&self) -> Vec<(&'static str, &VideoTensor)>;
}

impl Subbands for SubbandSet3D {
    fn keyed(&self) -> Vec<(&'static str, &VideoTensor)> {
        self.iter().collect()
    }
}

impl Subbands for SubbandSet2D {
    fn keyed(&self) -> Vec<(&'static str, &VideoTensor)> {
        self.iter().collect()
    }
}

/// Energies and energy fractions; entropy fields are left at 0.
pub fn subband_energy(s: &impl Subbands, level: usize) -> Result<LevelStats> {
    let bands = s.keyed();
    if bands.is_empty() {
        return Err(Error::param("no subbands to analyze"));
    }
    let energies: Vec<f64> = bands.iter().map(|(_, b)| b.sum_squares()).collect();
    let total: f64 = energies.iter().sum();
    let degenerate = total == 0.0;
    Ok(LevelStats {
        level,
        degenerate,
        bands: bands
            .iter()
            .zip(&energies)
            .map(|((key, _), &energy)| SubbandStats {
                level,
                key: key.to_string(),
                energy,
                energy_fraction: if degenerate { 0.0 } else { energy / total },
                entropy_bits: 0.0,
            })
            .collect(),
    })
}

/// Shannon entropy in bits of an equal-width histogram over `[min, max]`.
pub fn histogram_entropy(values: &[f32], bins: usize) -> Result<f64> {
    if bins < 2 {
        return Err(Error::param(format!("histogram needs at least 2 bins, got {bins}")));
    }
    if values.is_empty() {
        return Err(Error::param("empty subband"));
    }
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v as f64), hi.max(v as f64)));
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::Value("non-finite subband coefficient".into()));
    }
    if lo == hi {
        return Ok(0.0);
    }
    let mut counts = vec![0usize; bins];
    let scale = bins as f64 / (hi - lo);
    for &v in values {
        let i = (((v as f64 - lo) * scale) as usize).min(bins - 1);
        counts[i] += 1;
    }
    let n = values.len() as f64;
    Ok(counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum())
}

/// Entropy per band; energy fields are left at 0.
pub fn subband_entropy(s: &impl Subbands, level: usize, bins: usize) -> Result<Vec<SubbandStats>> {
    s.keyed()
        .into_iter()
        .map(|(key, band)| {
            Ok(SubbandStats {
                level,
                key: key.to_string(),
                energy: 0.0,
                energy_fraction: 0.0,
                entropy_bits: histogram_entropy(band.data(), bins)?,
            })
        })
        .collect()
}

/// Energy and entropy together.
pub fn analyze_level(s: &impl Subbands, level: usize, bins: usize) -> Result<LevelStats> {
    let mut stats = subband_energy(s, level)?;
    for (b, e) in stats.bands.iter_mut().zip(subband_entropy(s, level, bins)?) {
        b.entropy_bits = e.entropy_bits;
    }
    Ok(stats)
}

pub fn analyze_pyramid(p: &WaveletPyramid, bins: usize) -> Result<Vec<LevelStats>> {
    Ok(vec![
        analyze_level(&p.level1, 1, bins)?,
        analyze_level(&p.level2, 2, bins)?,
        analyze_level(&p.level3, 3, bins)?,
    ])
}

/// Smooth test video: a DC offset plus one low-frequency separable
/// sinusoid per channel.
pub fn smooth_fixture(shape: Shape) -> VideoTensor {
    use std::f32::consts::TAU;
    let (t, h, w) = (shape.time as f32, shape.height as f32, shape.width as f32);
    VideoTensor::from_fn(shape, |c, ti, hi, wi| {
        let phase = c as f32 * 0.7;
        0.5 + 0.25
            * (TAU * ti as f32 / (2.0 * t) + phase).sin()
            * (TAU * hi as f32 / h).sin()
            * (TAU * wi as f32 / w + phase).cos()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Rng;
    use crate::wavelet::{dwt2d, dwt3d};

    fn shape(c: usize, t: usize, h: usize, w: usize) -> Shape {
        Shape::new(c, t, h, w).unwrap()
    }

    #[test]
    fn constant_video_all_in_low_band() {
        let v = VideoTensor::new(3, 5, 8, 8, 0.3).unwrap();
        let s = subband_energy(&dwt3d(&v).unwrap(), 1).unwrap();
        assert!(!s.degenerate);
        assert!((s.get("hhh").unwrap().energy_fraction - 1.0).abs() < 1e-12);
        assert!(s.bands[1..].iter().all(|b| b.energy_fraction == 0.0));
    }

    #[test]
    fn zero_video_degenerate() {
        let v = VideoTensor::new(3, 5, 8, 8, 0.0).unwrap();
        let s = analyze_level(&dwt3d(&v).unwrap(), 1, DEFAULT_BINS).unwrap();
        assert!(s.degenerate);
        assert!(s.bands.iter().all(|b| b.energy_fraction == 0.0 && b.entropy_bits == 0.0));
    }

    #[test]
    fn fractions_sum_to_one_and_energy_is_preserved() {
        let v = VideoTensor::random_normal(&mut Rng::new(5), shape(2, 6, 8, 8), 0.0, 1.0).unwrap();
        let s = subband_energy(&dwt3d(&v).unwrap(), 1).unwrap();
        let sum: f64 = s.bands.iter().map(|b| b.energy_fraction).sum();
        assert!((sum - 1.0).abs() < 1e-6);
        let rel = (s.total_energy() - v.sum_squares()).abs() / v.sum_squares();
        assert!(rel < 1e-4);
        let s2 = subband_energy(&dwt2d(&v).unwrap(), 3).unwrap();
        assert_eq!(s2.bands.len(), 4);
        assert!(((s2.total_energy() - v.sum_squares()) / v.sum_squares()).abs() < 1e-4);
    }

    #[test]
    fn smooth_fixture_concentrates_in_hhh() {
        let v = smooth_fixture(shape(3, 33, 64, 64));
        let s = subband_energy(&dwt3d(&v).unwrap(), 1).unwrap();
        assert!(s.get("hhh").unwrap().energy_fraction > 0.9);
    }

    #[test]
    fn entropy_cases() {
        assert_eq!(histogram_entropy(&[2.0; 10], 256).unwrap(), 0.0);
        assert_eq!(histogram_entropy(&[0.0, 1.0, 0.0, 1.0], 2).unwrap(), 1.0);
        assert!(matches!(histogram_entropy(&[0.0, 1.0], 1), Err(Error::Parameter(_))));
        let u = Rng::new(9).uniform_vec(100_000, 0.0, 1.0).unwrap();
        let e = histogram_entropy(&u, 256).unwrap();
        assert!((7.5..=8.0).contains(&e), "{e}");
    }

    #[test]
    fn entropy_affine_invariant() {
        let u = Rng::new(10).normal_vec(4096, 0.0, 1.0).unwrap();
        let scaled: Vec<f32> = u.iter().map(|v| v * 4.0 + 3.0).collect();
        let (a, b) = (histogram_entropy(&u, 64).unwrap(), histogram_entropy(&scaled, 64).unwrap());
        assert!((a - b).abs() < 0.05, "{a} {b}");
        assert!(a <= 6.0);
    }
}
