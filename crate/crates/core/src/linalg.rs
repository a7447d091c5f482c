//! Small dense symmetric linear algebra for the d×d design matrices.
//!
//! Dimensions here are tiny (d ≤ 64), so everything is a flat row-major
//! buffer with a Cholesky factorization for solves and a cyclic Jacobi sweep
//! for eigenvalues.

use crate::scalar::Scalar;

/// Symmetric d×d matrix stored densely in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix<S> {
    dim: usize,
    data: Vec<S>,
}

impl<S: Scalar> SymMatrix<S> {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![S::zero(); dim * dim],
        }
    }

    /// `scale · I`
    pub fn scaled_identity(dim: usize, scale: S) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = scale;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> S {
        self.data[i * self.dim + j]
    }

    /// `self += weight · x xᵀ`, written to both triangles.
    pub fn add_outer(&mut self, x: &[S], weight: S) {
        debug_assert_eq!(x.len(), self.dim);
        let d = self.dim;
        for i in 0..d {
            let wi = weight * x[i];
            for j in i..d {
                let v = self.data[i * d + j] + wi * x[j];
                self.data[i * d + j] = v;
                self.data[j * d + i] = v;
            }
        }
    }

    /// `self + scale · other`
    pub fn add_scaled(&self, other: &Self, scale: S) -> Self {
        assert_eq!(self.dim, other.dim);
        Self {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a + scale * b)
                .collect(),
        }
    }

    pub fn mul_vec(&self, x: &[S]) -> Vec<S> {
        let d = self.dim;
        (0..d)
            .map(|i| (0..d).fold(S::zero(), |acc, j| acc + self.data[i * d + j] * x[j]))
            .collect()
    }

    /// Largest absolute entrywise difference; used by tests and rechecks.
    pub fn max_abs_diff(&self, other: &Self) -> S {
        self.data
            .iter()
            .zip(&other.data)
            .fold(S::zero(), |acc, (&a, &b)| acc.max((a - b).abs()))
    }

    pub fn max_abs(&self) -> S {
        self.data.iter().fold(S::zero(), |acc, &a| acc.max(a.abs()))
    }

    /// Cholesky factor `L Lᵀ = self`; `None` if the matrix is not positive definite.
    pub fn cholesky(&self) -> Option<Cholesky<S>> {
        let d = self.dim;
        let mut l = vec![S::zero(); d * d];
        for j in 0..d {
            let mut diag = self.get(j, j);
            for k in 0..j {
                diag = diag - l[j * d + k] * l[j * d + k];
            }
            if !(diag > S::zero()) {
                return None;
            }
            let ljj = diag.sqrt();
            l[j * d + j] = ljj;
            for i in (j + 1)..d {
                let mut v = self.get(i, j);
                for k in 0..j {
                    v = v - l[i * d + k] * l[j * d + k];
                }
                l[i * d + j] = v / ljj;
            }
        }
        Some(Cholesky { dim: d, lower: l })
    }

    /// All eigenvalues in ascending order (cyclic Jacobi).
    pub fn eigenvalues(&self) -> Vec<S> {
        let d = self.dim;
        let mut a = self.data.clone();
        let tol = S::epsilon() * S::of(1e-2);
        for _sweep in 0..100 {
            let mut off = S::zero();
            for i in 0..d {
                for j in (i + 1)..d {
                    off = off + a[i * d + j] * a[i * d + j];
                }
            }
            let scale = (0..d).fold(S::zero(), |acc, i| acc + a[i * d + i] * a[i * d + i]);
            if off <= tol * tol * scale.max(S::min_positive_value()) || off == S::zero() {
                break;
            }
            for p in 0..d {
                for q in (p + 1)..d {
                    let apq = a[p * d + q];
                    if apq == S::zero() {
                        continue;
                    }
                    let app = a[p * d + p];
                    let aqq = a[q * d + q];
                    let theta = (aqq - app) / (S::of(2.0) * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + S::one()).sqrt());
                    let c = S::one() / (t * t + S::one()).sqrt();
                    let s = t * c;
                    for k in 0..d {
                        let akp = a[k * d + p];
                        let akq = a[k * d + q];
                        a[k * d + p] = c * akp - s * akq;
                        a[k * d + q] = s * akp + c * akq;
                    }
                    for k in 0..d {
                        let apk = a[p * d + k];
                        let aqk = a[q * d + k];
                        a[p * d + k] = c * apk - s * aqk;
                        a[q * d + k] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut ev: Vec<S> = (0..d).map(|i| a[i * d + i]).collect();
        ev.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
        ev
    }

    pub fn min_eigenvalue(&self) -> S {
        self.eigenvalues().first().copied().unwrap_or(S::zero())
    }
}

/// Lower-triangular Cholesky factor.
#[derive(Debug, Clone)]
pub struct Cholesky<S> {
    dim: usize,
    lower: Vec<S>,
}

impl<S: Scalar> Cholesky<S> {
    fn forward(&self, b: &[S]) -> Vec<S> {
        let d = self.dim;
        let mut y = vec![S::zero(); d];
        for i in 0..d {
            let mut v = b[i];
            for k in 0..i {
                v = v - self.lower[i * d + k] * y[k];
            }
            y[i] = v / self.lower[i * d + i];
        }
        y
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[S]) -> Vec<S> {
        let d = self.dim;
        let mut x = self.forward(b);
        for i in (0..d).rev() {
            let mut v = x[i];
            for k in (i + 1)..d {
                v = v - self.lower[k * d + i] * x[k];
            }
            x[i] = v / self.lower[i * d + i];
        }
        x
    }

    /// `xᵀ A⁻¹ x`
    pub fn inv_quad(&self, x: &[S]) -> S {
        self.forward(x)
            .iter()
            .fold(S::zero(), |acc, &v| acc + v * v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(d: usize, rng: &mut ChaCha8Rng) -> SymMatrix<f64> {
        let mut m = SymMatrix::scaled_identity(d, 0.5);
        for _ in 0..(3 * d) {
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            m.add_outer(&x, rng.random_range(0.0..2.0));
        }
        m
    }

    #[test]
    fn solve_has_small_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for d in [1, 2, 5, 12] {
            let a = random_spd(d, &mut rng);
            let b: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let x = a.cholesky().unwrap().solve(&b);
            let r = a.mul_vec(&x);
            for (ri, bi) in r.iter().zip(&b) {
                assert!((ri - bi).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn inv_quad_matches_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = random_spd(4, &mut rng);
        let x = [0.3, -0.2, 0.9, 0.1];
        let ch = a.cholesky().unwrap();
        let direct: f64 = x.iter().zip(ch.solve(&x)).map(|(a, b)| a * b).sum();
        assert_relative_eq!(ch.inv_quad(&x), direct, max_relative = 1e-12);
    }

    #[test]
    fn eigenvalues_match_nalgebra() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for d in [1, 3, 6] {
            let a = random_spd(d, &mut rng);
            // make it indefinite too
            let a = a.add_scaled(&SymMatrix::scaled_identity(d, 1.0), -2.0);
            let na = nalgebra::DMatrix::from_fn(d, d, |i, j| a.get(i, j));
            let mut oracle: Vec<f64> = na.symmetric_eigen().eigenvalues.iter().copied().collect();
            oracle.sort_by(|x, y| x.partial_cmp(y).unwrap());
            let ours = a.eigenvalues();
            for (o, e) in ours.iter().zip(&oracle) {
                assert!((o - e).abs() < 1e-9, "{o} vs {e}");
            }
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let mut m = SymMatrix::<f64>::scaled_identity(2, 1.0);
        m.add_outer(&[1.0, 0.0], -2.0);
        assert!(m.cholesky().is_none());
    }

    #[test]
    fn works_in_f32() {
        let mut m = SymMatrix::<f32>::scaled_identity(2, 2.0);
        m.add_outer(&[1.0, 1.0], 1.0);
        let x = m.cholesky().unwrap().solve(&[3.0, 3.0]);
        assert!((x[0] - 0.75).abs() < 1e-6 && (x[1] - 0.75).abs() < 1e-6);
        let ev = m.eigenvalues();
        assert!((ev[0] - 2.0).abs() < 1e-5 && (ev[1] - 4.0).abs() < 1e-5);
    }
}
