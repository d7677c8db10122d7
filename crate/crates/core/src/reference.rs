//! Gaussian reference densities with reproducible samplers.
//!
//! Sampling is pinned so other implementations can reproduce every draw:
//!
//! * generator: xoshiro256++ seeded from a `u64` through SplitMix64
//!   (`Xoshiro256PlusPlus::seed_from_u64`);
//! * uniform: `(next_u64 >> 11) * 2^-53`, in `[0, 1)`;
//! * normal: Box-Muller on `u1 = 1 - uniform`, `u2 = uniform`, yielding
//!   `sqrt(-2 ln u1) cos(2 pi u2)` and then `sqrt(-2 ln u1) sin(2 pi u2)`.
//!   The second value is cached and consumed by the next normal draw;
//! * mixtures: per observation, one uniform picks the component (first
//!   index whose cumulative weight exceeds it), then `d` normals from the
//!   same generator and cache.

use std::f64::consts::PI;

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::{invalid, Result};
use crate::kernel::{gaussian_normalizer, Sample};

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub stdev: f64,
}

/// A distribution with an exactly known density.
#[derive(Debug, Clone, PartialEq)]
pub enum ReferenceDistribution {
    StandardNormal {
        dim: usize,
    },
    /// Isotropic Gaussian mixture.
    Mixture {
        components: Vec<MixtureComponent>,
    },
}

impl ReferenceDistribution {
    pub fn standard_normal(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dimension must be positive"));
        }
        Ok(Self::StandardNormal { dim })
    }

    pub fn mixture(components: Vec<MixtureComponent>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| invalid("mixture needs at least one component"))?;
        let dim = first.mean.len();
        if dim == 0 {
            return Err(invalid("mixture means must be non-empty"));
        }
        for c in &components {
            if c.mean.len() != dim {
                return Err(invalid("mixture components disagree on dimension"));
            }
            if !(c.weight >= 0.0 && c.weight.is_finite()) {
                return Err(invalid(format!("mixture weight {} is invalid", c.weight)));
            }
            if !(c.stdev > 0.0 && c.stdev.is_finite()) {
                return Err(invalid(format!(
                    "mixture stdev {} must be positive",
                    c.stdev
                )));
            }
            if c.mean.iter().any(|m| !m.is_finite()) {
                return Err(invalid("mixture means must be finite"));
            }
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(invalid(format!(
                "mixture weights sum to {total}, expected 1"
            )));
        }
        Ok(Self::Mixture { components })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::StandardNormal { dim } => *dim,
            Self::Mixture { components } => components[0].mean.len(),
        }
    }

    /// Exact density at `x`.
    pub fn true_density(&self, x: &[f64]) -> Result<f64> {
        let d = self.dim();
        if x.len() != d {
            return Err(invalid(format!(
                "point has dimension {}, distribution has {d}",
                x.len()
            )));
        }
        let norm = gaussian_normalizer(d);
        Ok(match self {
            Self::StandardNormal { .. } => {
                norm * (-0.5 * x.iter().map(|v| v * v).sum::<f64>()).exp()
            }
            Self::Mixture { components } => components
                .iter()
                .map(|c| {
                    let sq: f64 = x
                        .iter()
                        .zip(&c.mean)
                        .map(|(xi, mi)| ((xi - mi) / c.stdev).powi(2))
                        .sum();
                    c.weight * norm * (-0.5 * sq).exp() / c.stdev.powi(d as i32)
                })
                .sum(),
        })
    }

    /// `n` IID draws, deterministic in `(self, n, seed)`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Sample> {
        if n == 0 {
            return Err(invalid("sample size must be positive"));
        }
        let d = self.dim();
        let mut rng = NormalStream::new(seed);
        let mut data = Vec::with_capacity(n * d);
        match self {
            Self::StandardNormal { .. } => {
                data.extend((0..n * d).map(|_| rng.normal()));
            }
            Self::Mixture { components } => {
                for _ in 0..n {
                    let u = rng.uniform();
                    let mut acc = 0.0;
                    let comp = components
                        .iter()
                        .find(|c| {
                            acc += c.weight;
                            u < acc
                        })
                        .unwrap_or(&components[components.len() - 1]);
                    for m in &comp.mean {
                        data.push(m + comp.stdev * rng.normal());
                    }
                }
            }
        }
        Sample::new(data, d)
    }
}

/// Pinned uniform/normal generator, see the module docs.
pub struct NormalStream {
    rng: Xoshiro256PlusPlus,
    spare: Option<f64>,
}

impl NormalStream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: Xoshiro256PlusPlus::seed_from_u64(seed),
            spare: None,
        }
    }

    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let radius = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (2.0 * PI * u2).sin_cos();
        self.spare = Some(radius * s);
        radius * c
    }
}
