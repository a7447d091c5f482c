use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;

/// I.i.d. context law on the unit ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ContextLaw {
    /// Uniform on the unit sphere intersected with the nonnegative orthant.
    SpherePositive { dimension: usize },
    /// Uniform (flat Dirichlet) on the probability simplex.
    Simplex { dimension: usize },
    /// Uniform over a fixed list of vectors.
    FixedPool { pool: Vec<Vec<f64>> },
}

impl ContextLaw {
    pub fn dimension(&self) -> usize {
        match self {
            ContextLaw::SpherePositive { dimension } | ContextLaw::Simplex { dimension } => {
                *dimension
            }
            ContextLaw::FixedPool { pool } => pool.first().map_or(0, Vec::len),
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let d = self.dimension();
        if d == 0 {
            return Err(Error::Environment(
                "context dimension must be positive".into(),
            ));
        }
        if let ContextLaw::FixedPool { pool } = self {
            for (i, x) in pool.iter().enumerate() {
                if x.len() != d {
                    return Err(Error::Environment(format!(
                        "pool vector {i} has wrong dimension"
                    )));
                }
                let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                if n > 1.0 + 1e-12 {
                    return Err(Error::Environment(format!(
                        "pool vector {i} has norm {n} > 1"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            ContextLaw::SpherePositive { dimension } => loop {
                let v: Vec<f64> = (0..*dimension)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(rng);
                        z.abs()
                    })
                    .collect();
                let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
                if n > 1e-12 {
                    break v.into_iter().map(|a| a / n).collect();
                }
            },
            ContextLaw::Simplex { dimension } => {
                let v: Vec<f64> = (0..*dimension)
                    .map(|_| {
                        let e: f64 = Exp1.sample(rng);
                        e
                    })
                    .collect();
                let s: f64 = v.iter().sum();
                v.into_iter().map(|a| a / s).collect()
            }
            ContextLaw::FixedPool { pool } => pool[rng.random_range(0..pool.len())].clone(),
        }
    }

    /// Whether `θᵀx ∈ [0, 1]` on the whole support.
    pub(crate) fn uplift_in_unit_interval(&self, theta: &[f64]) -> bool {
        let tol = 1e-12;
        match self {
            // both supports contain points arbitrarily close to every basis vector
            ContextLaw::SpherePositive { .. } | ContextLaw::Simplex { .. } => {
                theta.iter().all(|&t| t >= -tol)
                    && theta.iter().map(|t| t * t).sum::<f64>().sqrt() <= 1.0 + tol
            }
            ContextLaw::FixedPool { pool } => pool.iter().all(|x| {
                let v: f64 = x.iter().zip(theta).map(|(a, b)| a * b).sum();
                (-tol..=1.0 + tol).contains(&v)
            }),
        }
    }

    /// `λ_min(E[xxᵀ])`, exact for a pool and Monte Carlo otherwise.
    pub fn min_eigenvalue<R: Rng + ?Sized>(&self, samples: usize, rng: &mut R) -> f64 {
        let d = self.dimension();
        let mut m = SymMatrix::<f64>::zeros(d);
        match self {
            ContextLaw::FixedPool { pool } => {
                for x in pool {
                    m.add_outer(x, 1.0 / pool.len() as f64);
                }
            }
            _ => {
                for _ in 0..samples {
                    m.add_outer(&self.sample(rng), 1.0 / samples as f64);
                }
            }
        }
        m.min_eigenvalue()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn samples_stay_in_unit_ball() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let laws = [
            ContextLaw::SpherePositive { dimension: 4 },
            ContextLaw::Simplex { dimension: 3 },
            ContextLaw::FixedPool {
                pool: vec![vec![1.0, 0.0], vec![0.6, 0.8], vec![0.0, 0.5]],
            },
        ];
        for law in &laws {
            law.validate().unwrap();
            for _ in 0..2000 {
                let x = law.sample(&mut rng);
                assert_eq!(x.len(), law.dimension());
                assert!(x.iter().map(|v| v * v).sum::<f64>() <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn pool_eigenvalue_is_exact() {
        let law = ContextLaw::FixedPool {
            pool: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!((law.min_eigenvalue(0, &mut rng) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_long_pool_vectors() {
        let law = ContextLaw::FixedPool {
            pool: vec![vec![1.0, 1.0]],
        };
        assert!(law.validate().is_err());
    }
}
