//! Additive noise defenses applied to client training.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::nn::Gradients;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseKind {
    #[default]
    None,
    Gaussian,
    Laplace,
}

/// Where noise enters a client's training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Injection {
    /// Added to every minibatch gradient before the SGD step.
    #[default]
    PerGradient,
    /// Added once to the client's total weight change after clean training.
    WeightDelta,
}

/// Gaussian `scale` is the standard deviation; Laplace `scale` is the diversity `b`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NoiseConfig {
    pub kind: NoiseKind,
    pub scale: f64,
    pub injection: Injection,
}

impl NoiseConfig {
    pub const NONE: NoiseConfig = NoiseConfig {
        kind: NoiseKind::None,
        scale: 0.0,
        injection: Injection::PerGradient,
    };

    pub fn gaussian(scale: f64) -> Self {
        NoiseConfig {
            kind: NoiseKind::Gaussian,
            scale,
            injection: Injection::PerGradient,
        }
    }

    pub fn laplace(scale: f64) -> Self {
        NoiseConfig {
            kind: NoiseKind::Laplace,
            scale,
            injection: Injection::PerGradient,
        }
    }

    pub fn with_injection(mut self, injection: Injection) -> Self {
        self.injection = injection;
        self
    }

    /// A zero scale is indistinguishable from no noise.
    pub fn is_active(&self) -> bool {
        self.kind != NoiseKind::None && self.scale > 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale >= 0.0 && self.scale.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "noise scale must be finite and non-negative, got {}",
                self.scale
            )));
        }
        Ok(())
    }

    /// Draws one noise value.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.kind {
            NoiseKind::None => 0.0,
            NoiseKind::Gaussian => Normal::new(0.0, self.scale)
                .expect("validated scale")
                .sample(rng),
            NoiseKind::Laplace => sample_laplace(self.scale, rng),
        }
    }
}

/// Laplace(0, b) by inverse CDF.
fn sample_laplace<R: Rng + ?Sized>(b: f64, rng: &mut R) -> f64 {
    // u in (-0.5, 0.5]; the open lower end keeps ln() finite.
    let u: f64 = 0.5 - rng.random::<f64>();
    -b * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// Returns `grads` plus i.i.d. noise on every value.
pub fn add_noise<R: Rng + ?Sized>(grads: &Gradients, noise: &NoiseConfig, rng: &mut R) -> Result<Gradients> {
    let mut out = grads.clone();
    add_noise_in_place(&mut out, noise, rng)?;
    Ok(out)
}

pub fn add_noise_in_place<R: Rng + ?Sized>(values: &mut Gradients, noise: &NoiseConfig, rng: &mut R) -> Result<()> {
    noise.validate()?;
    if !noise.is_active() {
        return Ok(());
    }
    for v in values.values_mut() {
        *v += noise.sample(rng);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{ModelParams, ModelSpec};
    use crate::rng;

    #[test]
    fn zero_scale_is_identity() {
        let spec = ModelSpec::mlp(3, &[], 2).unwrap();
        let g = ModelParams::init(&spec, 0).unwrap();
        let mut r = rng::rng_from(0, &[]);
        assert_eq!(add_noise(&g, &NoiseConfig::gaussian(0.0), &mut r).unwrap(), g);
        assert_eq!(add_noise(&g, &NoiseConfig::NONE, &mut r).unwrap(), g);
        assert!(add_noise(&g, &NoiseConfig::laplace(-1.0), &mut r).is_err());
    }

    #[test]
    fn laplace_is_finite_and_symmetric_in_sign() {
        let mut r = rng::rng_from(3, &[]);
        let draws: Vec<f64> = (0..20_000).map(|_| sample_laplace(1.0, &mut r)).collect();
        assert!(draws.iter().all(|v| v.is_finite()));
        let positive = draws.iter().filter(|&&v| v > 0.0).count() as f64 / draws.len() as f64;
        assert!((positive - 0.5).abs() < 0.02);
    }
}
