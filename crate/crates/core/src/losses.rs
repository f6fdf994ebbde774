//! Training-objective terms that need neither autodiff nor pretrained
//! networks. Every `|.|` is reduced by a mean over elements.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::GaussianLatent;
use crate::tensor::VideoTensor;
use crate::wavelet::{SubbandSet2D, SubbandSet3D};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub adv: f64,
    pub kl: f64,
    pub wl: f64,
    /// Weight of the externally supplied perceptual term.
    pub perceptual: f64,
    pub delta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            adv: 0.0,
            kl: 1e-6,
            wl: 0.1,
            perceptual: 1.0,
            delta: 1e-6,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [("adv", self.adv), ("kl", self.kl), ("wl", self.wl), ("perceptual", self.perceptual)] {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::param(format!("loss weight {name} must be finite and >= 0, got {w}")));
            }
        }
        if !(self.delta > 0.0) || !self.delta.is_finite() {
            return Err(Error::param(format!("delta must be > 0, got {}", self.delta)));
        }
        Ok(())
    }
}

fn mean_abs_diff(a: &VideoTensor, b: &VideoTensor) -> Result<f64> {
    a.expect_same_shape(b)?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x as f64 - y as f64).abs())
        .sum();
    Ok(sum / a.len() as f64)
}

pub fn l1_recon(x: &VideoTensor, x_hat: &VideoTensor) -> Result<f64> {
    mean_abs_diff(x, x_hat)
}

/// Mean absolute deviation over all bands of a level.
fn level_l1(a: &[VideoTensor], b: &[VideoTensor]) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (x, y) in a.iter().zip(b) {
        sum += mean_abs_diff(x, y)? * x.len() as f64;
        n += x.len();
    }
    Ok(sum / n as f64)
}

/// `mean|W2_hat - W2| + mean|W3_hat - W3|`.
pub fn wl_loss(
    w2_hat: &SubbandSet3D,
    w2: &SubbandSet3D,
    w3_hat: &SubbandSet2D,
    w3: &SubbandSet2D,
) -> Result<f64> {
    Ok(level_l1(w2_hat.bands(), w2.bands())? + level_l1(w3_hat.bands(), w3.bands())?)
}

/// KL divergence to the unit Gaussian, `0.5 * mean(mu^2 + e^logvar - 1 - logvar)`.
pub fn kl_divergence(g: &GaussianLatent) -> Result<f64> {
    if !g.mean.is_finite() || !g.logvar.is_finite() {
        return Err(Error::Value("non-finite latent statistics".into()));
    }
    g.mean.expect_same_shape(&g.logvar)?;
    let sum: f64 = g
        .mean
        .data()
        .iter()
        .zip(g.logvar.data())
        .map(|(&m, &lv)| {
            let (m, lv) = (m as f64, lv as f64);
            m * m + lv.exp() - 1.0 - lv
        })
        .sum();
    Ok(0.5 * sum / g.mean.len() as f64)
}

/// `0.5 * recon / (adv + delta)` for caller-supplied gradient norms.
pub fn adaptive_adv_weight(grad_norm_recon: f64, grad_norm_adv: f64, delta: f64) -> Result<f64> {
    if !(grad_norm_recon >= 0.0) || !(grad_norm_adv >= 0.0) {
        return Err(Error::param(format!(
            "gradient norms must be >= 0, got {grad_norm_recon} and {grad_norm_adv}"
        )));
    }
    if !(delta > 0.0) {
        return Err(Error::param(format!("delta must be > 0, got {delta}")));
    }
    Ok(0.5 * grad_norm_recon / (grad_norm_adv + delta))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossComponents {
    pub recon: f64,
    pub adv: f64,
    pub kl: f64,
    pub wl: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perceptual: Option<f64>,
}

pub fn total_loss(c: &LossComponents, w: &LossWeights) -> Result<f64> {
    w.validate()?;
    let perceptual = c.perceptual.unwrap_or(0.0);
    for (name, v) in [("recon", c.recon), ("adv", c.adv), ("kl", c.kl), ("wl", c.wl), ("perceptual", perceptual)] {
        if !v.is_finite() {
            return Err(Error::Value(format!("loss component {name} is not finite")));
        }
    }
    Ok(c.recon + w.perceptual * perceptual + w.adv * c.adv + w.kl * c.kl + w.wl * c.wl)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Rng, Shape};

    fn rand(seed: u64, shape: Shape) -> VideoTensor {
        VideoTensor::random_normal(&mut Rng::new(seed), shape, 0.0, 1.0).unwrap()
    }

    #[test]
    fn l1_cases() {
        let s = Shape::new(2, 3, 4, 4).unwrap();
        let x = rand(1, s);
        assert_eq!(l1_recon(&x, &x).unwrap(), 0.0);
        let y = x.map(|v| v + 0.5);
        assert!((l1_recon(&x, &y).unwrap() - 0.5).abs() < 1e-6);
        let z = VideoTensor::zeros(Shape::new(2, 3, 4, 2).unwrap());
        assert!(matches!(l1_recon(&x, &z), Err(Error::Shape(_))));
    }

    #[test]
    fn kl_cases() {
        let s = Shape::new(4, 2, 2, 2).unwrap();
        let zero = GaussianLatent::new(VideoTensor::zeros(s), VideoTensor::zeros(s)).unwrap();
        assert_eq!(kl_divergence(&zero).unwrap(), 0.0);
        let one = GaussianLatent::new(VideoTensor::new(4, 2, 2, 2, 1.0).unwrap(), VideoTensor::zeros(s)).unwrap();
        assert!((kl_divergence(&one).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn adv_weight_cases() {
        assert!((adaptive_adv_weight(1.0, 1.0, 1e-6).unwrap() - 0.4999995).abs() < 1e-9);
        assert_eq!(adaptive_adv_weight(0.0, 3.0, 1e-6).unwrap(), 0.0);
        assert!((adaptive_adv_weight(2.0, 0.5, 1e-6).unwrap() - 1.999996).abs() < 1e-6);
        assert!(matches!(adaptive_adv_weight(-1.0, 1.0, 1e-6), Err(Error::Parameter(_))));
        assert!(matches!(adaptive_adv_weight(1.0, 1.0, 0.0), Err(Error::Parameter(_))));
    }

    #[test]
    fn total_cases() {
        let w = LossWeights::default();
        assert_eq!(total_loss(&LossComponents::default(), &w).unwrap(), 0.0);
        let c = LossComponents { recon: 1.0, ..Default::default() };
        assert_eq!(total_loss(&c, &w).unwrap(), 1.0);
        let c = LossComponents { recon: 1.0, adv: 2.0, kl: 3.0, wl: 4.0, perceptual: None };
        let w = LossWeights { adv: 0.5, ..w };
        assert!((total_loss(&c, &w).unwrap() - 2.400003).abs() < 1e-12);
        let c = LossComponents { recon: f64::NAN, ..Default::default() };
        assert!(matches!(total_loss(&c, &w), Err(Error::Value(_))));
    }
}
