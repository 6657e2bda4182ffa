//! The clamped power-of-Gaussian mixture used for every transform parameter.

use rand::Rng;
use rand_distr::StandardNormal;

/// `G(k, μ, σ, a, b, p)`: with probability `p`, draw `γ ~ N(μ, σ)` and return
/// `clamp(sign(γ)·|γ|^k, a, b)`; otherwise return `μ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClampedPowerGaussian {
    pub k: f64,
    pub mu: f64,
    pub sigma: f64,
    pub a: f64,
    pub b: f64,
    pub p: f64,
}

impl ClampedPowerGaussian {
    pub const fn new(k: f64, mu: f64, sigma: f64, a: f64, b: f64, p: f64) -> Self {
        Self { k, mu, sigma, a, b, p }
    }

    pub const TRANSLATION_BG: Self = Self::new(4.0, 0.0, 1.3, -40.0, 40.0, 1.0);
    pub const ROTATION_BG: Self = Self::new(2.0, 0.0, 1.3, -10.0, 10.0, 0.3);
    pub const ZOOM_BG: Self = Self::new(2.0, 1.0, 0.1, 0.93, 1.07, 0.6);
    pub const TRANSLATION_CH: Self = Self::new(3.0, 0.0, 2.3, -120.0, 120.0, 1.0);
    pub const ROTATION_CH: Self = Self::new(2.0, 0.0, 2.3, -30.0, 30.0, 0.7);
    pub const ZOOM_CH: Self = Self::new(2.0, 1.0, 0.18, 0.8, 1.2, 0.7);

    pub fn is_valid(&self) -> bool {
        self.a <= self.mu && self.mu <= self.b && self.sigma >= 0.0 && self.k >= 1.0 && (0.0..=1.0).contains(&self.p)
    }

    /// The power-and-clamp map applied to a Gaussian draw.
    pub fn transform(&self, gamma: f64) -> f64 {
        (gamma.signum() * gamma.abs().powf(self.k)).min(self.b).max(self.a)
    }
}

/// One draw. Both the Bernoulli and the Gaussian are always consumed so the
/// stream position does not depend on the outcome.
pub fn sample_param<R: Rng + ?Sized>(dist: &ClampedPowerGaussian, rng: &mut R) -> f64 {
    let beta = rng.gen::<f64>() < dist.p;
    let z: f64 = rng.sample(StandardNormal);
    let gamma = dist.mu + dist.sigma * z;
    if beta {
        dist.transform(gamma)
    } else {
        dist.mu
    }
}
