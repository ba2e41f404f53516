//! Projection onto a robust halfspace `{x : aᵀx + β‖x‖_W ≤ c}`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::projection::Projector;
use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

const BISECTION_STEPS: usize = 200;

/// Convex set `{x : aᵀx + β‖x‖_W ≤ c}` for a positive-definite `W`.
///
/// The projection is `prox_{μh}(z)` for `h(x) = aᵀx + β‖x‖_W`, with the
/// multiplier `μ` found by bisection on the active constraint. The inner
/// prox of the weighted norm reduces to a scalar equation in the
/// eigenbasis of `W`, also solved by bisection.
#[derive(Debug, Clone)]
pub struct RobustHalfspace<T: Real> {
    normal: DVector<T>,
    beta: T,
    offset: T,
    weight: DMatrix<T>,
    eigvals: DVector<T>,
    eigvecs: DMatrix<T>,
}

impl<T: Real> RobustHalfspace<T> {
    pub fn new(normal: DVector<T>, beta: T, weight: DMatrix<T>, offset: T) -> Result<Self> {
        let d = normal.len();
        if weight.shape() != (d, d) {
            return Err(Error::invalid("weight matrix must be d×d"));
        }
        if !(beta >= T::zero()) {
            return Err(Error::invalid("robustness radius must be nonnegative"));
        }
        let eig = SymmetricEigen::new(weight.clone());
        if eig.eigenvalues.iter().any(|v| !(*v > T::zero())) {
            return Err(Error::numerical("weight matrix is not positive definite"));
        }
        Ok(Self { normal, beta, offset, weight, eigvals: eig.eigenvalues, eigvecs: eig.eigenvectors })
    }

    pub fn value(&self, x: &DVector<T>) -> T {
        self.normal.dot(x) + self.beta * x.dot(&(&self.weight * x)).max(T::zero()).sqrt()
    }

    /// `argmin_x ½‖x − u‖² + τ‖x‖_W`.
    fn prox_norm(&self, u: &DVector<T>, tau: T) -> DVector<T> {
        if tau <= T::zero() {
            return u.clone();
        }
        let u_e = self.eigvecs.transpose() * u;
        let dual_sq = u_e
            .iter()
            .zip(self.eigvals.iter())
            .fold(T::zero(), |acc, (c, l)| acc + *c * *c / *l);
        if dual_sq.sqrt() <= tau {
            return DVector::zeros(u.len());
        }
        // x_k = u_k s / (s + τλ_k) in the eigenbasis, with s = ‖x‖_W solving ψ(s) = 1.
        let psi = |s: T| {
            u_e.iter()
                .zip(self.eigvals.iter())
                .fold(T::zero(), |acc, (c, l)| {
                    let r = *c / (s + tau * *l);
                    acc + *l * r * r
                })
                .sqrt()
        };
        let mut lo = T::zero();
        let mut hi = u_e
            .iter()
            .zip(self.eigvals.iter())
            .fold(T::zero(), |acc, (c, l)| acc + *l * *c * *c)
            .sqrt();
        for _ in 0..BISECTION_STEPS {
            let mid = (lo + hi) * lit(0.5);
            if mid <= lo || mid >= hi {
                break;
            }
            if psi(mid) > T::one() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let s = (lo + hi) * lit(0.5);
        let x_e = DVector::from_iterator(
            u.len(),
            u_e.iter().zip(self.eigvals.iter()).map(|(c, l)| *c * s / (s + tau * *l)),
        );
        &self.eigvecs * x_e
    }

    fn prox(&self, z: &DVector<T>, mu: T) -> DVector<T> {
        self.prox_norm(&(z - &self.normal * mu), mu * self.beta)
    }
}

impl<T: Real> Projector<T> for RobustHalfspace<T> {
    fn project(&self, z: &DVector<T>) -> DVector<T> {
        if self.value(z) <= self.offset {
            return z.clone();
        }
        let mut hi = T::one();
        let mut grow = 0;
        while self.value(&self.prox(z, hi)) > self.offset && grow < 200 {
            hi *= lit(2.0);
            grow += 1;
        }
        let mut lo = T::zero();
        for _ in 0..BISECTION_STEPS {
            let mid = (lo + hi) * lit(0.5);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.value(&self.prox(z, mid)) > self.offset {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        self.prox(z, hi)
    }

    fn violation(&self, x: &DVector<T>) -> T {
        let scale = self.normal.norm() + self.beta * self.eigvals.max().sqrt();
        let excess = (self.value(x) - self.offset).max(T::zero());
        if scale > T::zero() {
            excess / scale
        } else {
            excess
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn plain_halfspace_when_beta_zero() {
        let h = RobustHalfspace::new(dvector![1.0, 0.0], 0.0, DMatrix::identity(2, 2), 0.5).unwrap();
        let p = h.project(&dvector![2.0, 1.0]);
        assert!((p - dvector![0.5, 1.0]).norm() < 1e-12);
    }

    #[test]
    fn pure_norm_ball() {
        // ‖x‖ ≤ 1 written as 0ᵀx + 1·‖x‖_I ≤ 1.
        let h = RobustHalfspace::new(dvector![0.0, 0.0], 1.0, DMatrix::identity(2, 2), 1.0).unwrap();
        let p = h.project(&dvector![3.0, 4.0]);
        assert!((p - dvector![0.6, 0.8]).norm() < 1e-10);
    }

    #[test]
    fn matches_sampled_minimizer() {
        let w = dmatrix![0.3, 0.1; 0.1, 0.2];
        let h = RobustHalfspace::new(dvector![-0.7, 0.4], 1.3, w, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let z = dvector![rng.random::<f64>() * 6.0 - 3.0, rng.random::<f64>() * 6.0 - 3.0];
            let p = h.project(&z);
            assert!(h.value(&p) <= 0.5 + 1e-9);
            let dist = (&p - &z).norm();
            for _ in 0..2000 {
                let y = dvector![rng.random::<f64>() * 6.0 - 3.0, rng.random::<f64>() * 6.0 - 3.0];
                if h.value(&y) <= 0.5 {
                    assert!(dist <= (&y - &z).norm() + 1e-9);
                }
            }
        }
    }
}
