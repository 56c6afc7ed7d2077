//! Laplace and Gaussian noise.
//!
//! Calibration takes exact decimals and returns the `f64` scale used for
//! sampling. Samplers draw from a seedable ChaCha20 stream so that a fixed
//! seed reproduces the same outputs on every platform.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rust_decimal::prelude::ToPrimitive;
use rust_decimal::Decimal;
use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{param} = {value} out of domain: {requirement}")]
pub struct DomainError {
    pub param: &'static str,
    pub value: Decimal,
    pub requirement: &'static str,
}

fn to_f64(v: Decimal) -> f64 {
    v.to_f64().expect("decimal always converts to f64")
}

/// Laplace scale `b = sens / eps`.
pub fn laplace_scale(sens: Decimal, eps: Decimal) -> Result<f64, DomainError> {
    if eps <= Decimal::ZERO {
        return Err(DomainError {
            param: "epsilon",
            value: eps,
            requirement: "must be positive",
        });
    }
    if sens < Decimal::ZERO {
        return Err(DomainError {
            param: "sensitivity",
            value: sens,
            requirement: "must be non-negative",
        });
    }
    Ok(match sens.checked_div(eps) {
        Some(b) => to_f64(b),
        None => to_f64(sens) / to_f64(eps),
    })
}

/// Gaussian standard deviation `sens * sqrt(2 ln(1.25 / delta)) / eps`,
/// valid for `0 < eps <= 1` and `0 < delta < 1`.
pub fn gauss_sigma(sens: Decimal, eps: Decimal, delta: Decimal) -> Result<f64, DomainError> {
    if eps <= Decimal::ZERO || eps > Decimal::ONE {
        return Err(DomainError {
            param: "epsilon",
            value: eps,
            requirement: "must lie in (0, 1]",
        });
    }
    if delta <= Decimal::ZERO || delta >= Decimal::ONE {
        return Err(DomainError {
            param: "delta",
            value: delta,
            requirement: "must lie in (0, 1)",
        });
    }
    if sens < Decimal::ZERO {
        return Err(DomainError {
            param: "sensitivity",
            value: sens,
            requirement: "must be non-negative",
        });
    }
    if sens.is_zero() {
        return Ok(0.0);
    }
    let spread = (2.0 * (1.25 / to_f64(delta)).ln()).sqrt();
    Ok(to_f64(sens) * spread / to_f64(eps))
}

/// Uniform on the open interval (0, 1) from the top 52 bits of one `u64`.
/// With 53 bits the largest draw rounds up to exactly 1.0.
fn open_unit(rng: &mut dyn RngCore) -> f64 {
    ((rng.next_u64() >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

/// Zero-centered Laplace sample with scale `b`, by inverse CDF.
pub fn sample_laplace(rng: &mut dyn RngCore, b: f64) -> f64 {
    if b == 0.0 {
        return 0.0;
    }
    let u = open_unit(rng) - 0.5;
    -b * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// Zero-centered Gaussian sample with standard deviation `sigma`.
pub fn sample_gauss(rng: &mut dyn RngCore, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    let z: f64 = StandardNormal.sample(rng);
    sigma * z
}

/// Where mechanisms get their noise. The interpreter draws exactly once
/// per mechanism evaluation.
pub trait NoiseSource {
    fn laplace(&mut self, b: f64) -> f64;
    fn gauss(&mut self, sigma: f64) -> f64;
}

/// ChaCha20-backed sampler.
pub struct Sampler {
    rng: ChaCha20Rng,
}

impl Sampler {
    pub fn seeded(seed: u64) -> Self {
        Sampler {
            rng: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    /// Seeded from the operating system's entropy source.
    pub fn from_entropy() -> Self {
        Sampler {
            rng: ChaCha20Rng::from_entropy(),
        }
    }
}

impl NoiseSource for Sampler {
    fn laplace(&mut self, b: f64) -> f64 {
        sample_laplace(&mut self.rng, b)
    }

    fn gauss(&mut self, sigma: f64) -> f64 {
        sample_gauss(&mut self.rng, sigma)
    }
}

impl<N: NoiseSource + ?Sized> NoiseSource for &mut N {
    fn laplace(&mut self, b: f64) -> f64 {
        (**self).laplace(b)
    }

    fn gauss(&mut self, sigma: f64) -> f64 {
        (**self).gauss(sigma)
    }
}

impl<N: NoiseSource + ?Sized> NoiseSource for Box<N> {
    fn laplace(&mut self, b: f64) -> f64 {
        (**self).laplace(b)
    }

    fn gauss(&mut self, sigma: f64) -> f64 {
        (**self).gauss(sigma)
    }
}
