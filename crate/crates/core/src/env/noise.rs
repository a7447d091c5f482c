//! Competing-bid noise laws Ψ shipped with the simulator.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
const TRUNC_AT: f64 = 3.0;

pub(crate) fn norm_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

fn norm_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseFamily {
    Gaussian,
    /// Gaussian truncated to `[-3σ, 3σ]`.
    TruncatedGaussian,
    /// Trapezoidal density: flat on `[-σ, σ]`, linear ramps of width σ on each side.
    UniformSmooth,
}

/// Noise law with its regularity constants.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseModel {
    pub family: NoiseFamily,
    pub scale: f64,
    /// Upper bound `L` on the density.
    pub density_bound: f64,
    /// Smallest density on `[-1, 2]`, the widest possible RoS evaluation domain.
    pub density_floor: f64,
    /// Sub-Gaussian variance proxy `R`.
    pub sub_gaussian_proxy: f64,
}

impl NoiseModel {
    pub fn new(family: NoiseFamily, scale: f64) -> Result<Self> {
        if !scale.is_finite() || scale < 0.0 {
            return Err(Error::param(
                "noise.scale",
                format!("must be finite and >= 0, got {scale}"),
            ));
        }
        if scale == 0.0 && family != NoiseFamily::Gaussian {
            return Err(Error::param(
                "noise.scale",
                "only the gaussian family allows scale 0",
            ));
        }
        let density_bound = match family {
            NoiseFamily::Gaussian if scale == 0.0 => f64::INFINITY,
            NoiseFamily::Gaussian => INV_SQRT_2PI / scale,
            NoiseFamily::TruncatedGaussian => INV_SQRT_2PI / (scale * trunc_mass()),
            NoiseFamily::UniformSmooth => 1.0 / (3.0 * scale),
        };
        let sub_gaussian_proxy = match family {
            NoiseFamily::Gaussian | NoiseFamily::TruncatedGaussian => scale,
            NoiseFamily::UniformSmooth => 2.0 * scale,
        };
        let mut model = Self {
            family,
            scale,
            density_bound,
            density_floor: 0.0,
            sub_gaussian_proxy,
        };
        model.density_floor = model.min_density_on(-1.0, 2.0);
        Ok(model)
    }

    pub fn gaussian(scale: f64) -> Result<Self> {
        Self::new(NoiseFamily::Gaussian, scale)
    }

    /// Ψ(u)
    pub fn cdf(&self, u: f64) -> f64 {
        let s = self.scale;
        match self.family {
            NoiseFamily::Gaussian if s == 0.0 => {
                if u >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            NoiseFamily::Gaussian => norm_cdf(u / s),
            NoiseFamily::TruncatedGaussian => {
                if u <= -TRUNC_AT * s {
                    0.0
                } else if u >= TRUNC_AT * s {
                    1.0
                } else {
                    ((norm_cdf(u / s) - norm_cdf(-TRUNC_AT)) / trunc_mass()).clamp(0.0, 1.0)
                }
            }
            NoiseFamily::UniformSmooth => {
                let (h, r, c) = (s, s, 1.0 / (3.0 * s));
                if u <= -h - r {
                    0.0
                } else if u <= -h {
                    c * (u + h + r).powi(2) / (2.0 * r)
                } else if u <= h {
                    c * r / 2.0 + c * (u + h)
                } else if u < h + r {
                    1.0 - c * (h + r - u).powi(2) / (2.0 * r)
                } else {
                    1.0
                }
            }
        }
    }

    /// f_Ψ(u)
    pub fn density(&self, u: f64) -> f64 {
        let s = self.scale;
        match self.family {
            NoiseFamily::Gaussian if s == 0.0 => {
                if u == 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                }
            }
            NoiseFamily::Gaussian => norm_pdf(u / s) / s,
            NoiseFamily::TruncatedGaussian => {
                if u.abs() > TRUNC_AT * s {
                    0.0
                } else {
                    norm_pdf(u / s) / (s * trunc_mass())
                }
            }
            NoiseFamily::UniformSmooth => {
                let (h, r, c) = (s, s, 1.0 / (3.0 * s));
                let a = u.abs();
                if a <= h {
                    c
                } else if a < h + r {
                    c * (h + r - a) / r
                } else {
                    0.0
                }
            }
        }
    }

    /// f_Ψ′(u), zero where the density is flat or vanishes.
    pub fn density_derivative(&self, u: f64) -> f64 {
        let s = self.scale;
        match self.family {
            NoiseFamily::Gaussian if s == 0.0 => 0.0,
            NoiseFamily::Gaussian | NoiseFamily::TruncatedGaussian => {
                -u / (s * s) * self.density(u)
            }
            NoiseFamily::UniformSmooth => {
                let (h, r, c) = (s, s, 1.0 / (3.0 * s));
                let a = u.abs();
                if a <= h || a >= h + r {
                    0.0
                } else {
                    -u.signum() * c / r
                }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let s = self.scale;
        match self.family {
            NoiseFamily::Gaussian => {
                let z: f64 = StandardNormal.sample(rng);
                s * z
            }
            NoiseFamily::TruncatedGaussian => loop {
                let z: f64 = StandardNormal.sample(rng);
                if z.abs() <= TRUNC_AT {
                    break s * z;
                }
            },
            NoiseFamily::UniformSmooth => {
                // plateau carries mass 2/3, each ramp 1/6
                let (h, r) = (s, s);
                let pick: f64 = rng.random();
                let w: f64 = rng.random();
                if pick < 2.0 / 3.0 {
                    -h + 2.0 * h * w
                } else {
                    // linear ramp density, sampled by inverting its quadratic CDF
                    let depth = r * (1.0 - (1.0 - w).sqrt());
                    if pick < 5.0 / 6.0 {
                        -h - depth
                    } else {
                        h + depth
                    }
                }
            }
        }
    }

    fn min_density_on(&self, lo: f64, hi: f64) -> f64 {
        if self.scale == 0.0 {
            return 0.0;
        }
        let n = 4000;
        (0..=n)
            .map(|i| self.density(lo + (hi - lo) * i as f64 / n as f64))
            .fold(f64::INFINITY, f64::min)
    }

    /// Numerical regularity checks: Ψ is a CDF, the density bound dominates,
    /// and `f′Ψ ≤ f²` holds on a grid (log-concavity).
    pub fn check_regularity(&self) -> Result<()> {
        if self.scale == 0.0 {
            return Ok(());
        }
        let span = 8.0 * self.scale;
        let n = 20_000;
        let mut prev = 0.0;
        for i in 0..=n {
            let u = -span + 2.0 * span * i as f64 / n as f64;
            let cdf = self.cdf(u);
            if cdf + 1e-15 < prev || !(0.0..=1.0).contains(&cdf) {
                return Err(Error::Environment(format!(
                    "noise CDF not monotone at u = {u}"
                )));
            }
            prev = cdf;
            let f = self.density(u);
            if f > self.density_bound + 1e-9 {
                return Err(Error::Environment(format!(
                    "density {f} exceeds bound {} at u = {u}",
                    self.density_bound
                )));
            }
            if self.density_derivative(u) * cdf > f * f + 1e-12 {
                return Err(Error::Environment(format!(
                    "log-concavity fails at u = {u}"
                )));
            }
        }
        if self.cdf(-span) > 1e-9 || self.cdf(span) < 1.0 - 1e-9 {
            return Err(Error::Environment(
                "noise CDF limits are not 0 and 1".into(),
            ));
        }
        Ok(())
    }
}

fn trunc_mass() -> f64 {
    norm_cdf(TRUNC_AT) - norm_cdf(-TRUNC_AT)
}
