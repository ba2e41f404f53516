//! Dense linear-algebra helpers and the constraint-estimation state.
//!
//! [`GramState`] keeps the regularized Gram matrix `V = λI + Σ x xᵀ` and the
//! cross matrix `S = Σ y xᵀ` from which the least-squares constraint estimate
//! `Â = S V⁻¹` is read. [`ConfidenceParams::beta`] gives the confidence
//! radius that makes `‖aᵢ − âᵢ‖_V ≤ β` hold for every row with high
//! probability.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{from_usize, lit, Real};

/// Eigenvalues below this are treated as a numerical failure when inverting.
pub const EIGEN_FLOOR: f64 = 1e-12;

/// Regularized least-squares memory for the unknown constraint matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct GramState<T: Real> {
    v: DMatrix<T>,
    s: DMatrix<T>,
    logdet: T,
    t: usize,
    lambda: T,
}

impl<T: Real> GramState<T> {
    /// `V = λI`, `S = 0`, `t = 1`.
    pub fn new(d: usize, n: usize, lambda: T) -> Result<Self> {
        if d == 0 || n == 0 {
            return Err(Error::invalid(format!("dimensions must be positive (d={d}, n={n})")));
        }
        if !(lambda > T::zero()) || !lambda.is_finite() {
            return Err(Error::invalid(format!("regularization must be positive, got {lambda}")));
        }
        Ok(Self {
            v: DMatrix::identity(d, d) * lambda,
            s: DMatrix::zeros(n, d),
            logdet: from_usize::<T>(d) * lambda.ln(),
            t: 1,
            lambda,
        })
    }

    pub fn dim(&self) -> usize {
        self.v.nrows()
    }

    pub fn rows(&self) -> usize {
        self.s.nrows()
    }

    pub fn gram(&self) -> &DMatrix<T> {
        &self.v
    }

    pub fn cross(&self) -> &DMatrix<T> {
        &self.s
    }

    pub fn logdet(&self) -> T {
        self.logdet
    }

    /// Round counter; equals one plus the number of updates absorbed.
    pub fn round(&self) -> usize {
        self.t
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }

    /// `V ← V + x xᵀ`, `S ← S + y xᵀ`, `t ← t + 1`, log-determinant refreshed
    /// from a fresh Cholesky factorization.
    pub fn rank1_update(&mut self, x: &DVector<T>, y: &DVector<T>) -> Result<()> {
        if x.len() != self.dim() || y.len() != self.rows() {
            return Err(Error::invalid(format!(
                "update dimensions ({}, {}) do not match state ({}, {})",
                x.len(),
                y.len(),
                self.dim(),
                self.rows()
            )));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite action or feedback"));
        }
        self.v.ger(T::one(), x, x, T::one());
        self.s.ger(T::one(), y, x, T::one());
        self.logdet = logdet_spd(&self.v)?;
        self.t += 1;
        Ok(())
    }

    /// Least-squares estimate `Â = S V⁻¹` (one row per constraint).
    pub fn rls_estimate(&self) -> Result<DMatrix<T>> {
        let chol = self
            .v
            .clone()
            .cholesky()
            .ok_or_else(|| Error::numerical("Gram matrix lost positive definiteness"))?;
        // V is symmetric, so Âᵀ = V⁻¹ Sᵀ.
        let a_hat = chol.solve(&self.s.transpose()).transpose();
        if a_hat.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical("least-squares estimate is not finite"));
        }
        Ok(a_hat)
    }

    /// `‖x‖²_{V⁻¹}` at the current Gram matrix.
    pub fn inv_norm_sq(&self, x: &DVector<T>) -> Result<T> {
        let chol = self
            .v
            .clone()
            .cholesky()
            .ok_or_else(|| Error::numerical("Gram matrix lost positive definiteness"))?;
        Ok(x.dot(&chol.solve(x)))
    }
}

/// Log-determinant of a symmetric positive-definite matrix via Cholesky.
pub fn logdet_spd<T: Real>(m: &DMatrix<T>) -> Result<T> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::numerical("matrix is not positive definite"))?;
    let two = lit::<T>(2.0);
    Ok(chol.l_dirty().diagonal().iter().fold(T::zero(), |acc, l| acc + two * l.ln()))
}

/// `V⁻¹` and `V^{-1/2}` from one symmetric eigendecomposition.
///
/// Fails if the smallest eigenvalue is below [`EIGEN_FLOOR`].
pub fn inverse_and_inverse_sqrt<T: Real>(v: &DMatrix<T>) -> Result<(DMatrix<T>, DMatrix<T>)> {
    if !v.is_square() {
        return Err(Error::invalid("matrix must be square"));
    }
    let sym = (v + v.transpose()) * lit::<T>(0.5);
    let eig = sym.symmetric_eigen();
    let floor = lit::<T>(EIGEN_FLOOR);
    let min = eig.eigenvalues.iter().copied().fold(T::max_value().unwrap_or(lit(f64::MAX)), |a, b| a.min(b));
    if !(min >= floor) {
        return Err(Error::numerical(format!(
            "smallest eigenvalue {min} is below the inversion floor {EIGEN_FLOOR:e}"
        )));
    }
    let q = &eig.eigenvectors;
    let inv = DVector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|l| T::one() / *l));
    let inv_sqrt = inv.map(|l| l.sqrt());
    let inverse = q * DMatrix::from_diagonal(&inv) * q.transpose();
    let inverse_sqrt = q * DMatrix::from_diagonal(&inv_sqrt) * q.transpose();
    Ok((symmetrize(inverse), symmetrize(inverse_sqrt)))
}

fn symmetrize<T: Real>(m: DMatrix<T>) -> DMatrix<T> {
    (&m + m.transpose()) * lit::<T>(0.5)
}

/// `‖x‖_M = sqrt(xᵀ M x)` for a positive semi-definite `M`.
pub fn weighted_norm<T: Real>(x: &DVector<T>, m: &DMatrix<T>) -> T {
    x.dot(&(m * x)).max(T::zero()).sqrt()
}

/// Problem constants that determine the confidence radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceParams<T: Real> {
    pub rho: T,
    pub d: usize,
    pub n: usize,
    pub delta: T,
    #[serde(rename = "S_bound")]
    pub s_bound: T,
    #[serde(rename = "D")]
    pub diameter: T,
    pub lambda: T,
}

impl<T: Real> ConfidenceParams<T> {
    /// Constants with `λ = max(1, D²)`.
    pub fn with_default_lambda(rho: T, d: usize, n: usize, delta: T, s_bound: T, diameter: T) -> Result<Self> {
        let lambda = T::one().max(diameter * diameter);
        let p = Self { rho, d, n, delta, s_bound, diameter, lambda };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let half = lit::<T>(0.5);
        if self.d == 0 || self.n == 0 {
            return Err(Error::invalid("d and n must be positive"));
        }
        if !(self.delta > T::zero() && self.delta <= half) {
            return Err(Error::invalid(format!("delta must lie in (0, 1/2], got {}", self.delta)));
        }
        if !(self.rho >= T::zero()) {
            return Err(Error::invalid(format!("rho must be nonnegative, got {}", self.rho)));
        }
        if !(self.s_bound > T::zero()) || !(self.diameter > T::zero()) || !(self.lambda > T::zero()) {
            return Err(Error::invalid("S_bound, D and lambda must be positive"));
        }
        Ok(())
    }

    /// Confidence radius
    /// `β_t = ρ·sqrt(d·ln((1 + (t−1)D²/λ)·n/δ)) + sqrt(λ)·S`.
    pub fn beta(&self, t: usize) -> Result<T> {
        if t < 1 {
            return Err(Error::invalid("round index must be at least 1"));
        }
        let d = from_usize::<T>(self.d);
        let n = from_usize::<T>(self.n);
        let growth = T::one() + from_usize::<T>(t - 1) * self.diameter * self.diameter / self.lambda;
        let log_term = (growth * n / self.delta).ln();
        Ok(self.rho * (d * log_term).sqrt() + self.lambda.sqrt() * self.s_bound)
    }
}

/// True iff `‖aᵢ − âᵢ‖_{V̄} ≤ β` for every row `i`.
///
/// This is the supremum over `x` of `|(aᵢ − âᵢ)ᵀx| / ‖x‖_{V̄⁻¹}`, so it is the
/// same event as the two-sided constraint bounds holding for all actions.
pub fn confidence_contains<T: Real>(
    v_bar: &DMatrix<T>,
    a_hat: &DMatrix<T>,
    beta: T,
    a_true: &DMatrix<T>,
) -> Result<bool> {
    if a_hat.shape() != a_true.shape() || v_bar.nrows() != a_hat.ncols() || !v_bar.is_square() {
        return Err(Error::invalid("confidence check: dimension mismatch"));
    }
    Ok(a_true.row_iter().zip(a_hat.row_iter()).all(|(a, a_h)| {
        let diff: DVector<T> = (a - a_h).transpose();
        weighted_norm(&diff, v_bar) <= beta
    }))
}

/// Right-hand side of the elliptic potential inequality for actions with
/// `‖x‖ ≤ max_norm` and `λ ≥ max(1, max_norm²)`:
/// `2d·ln(1 + m·max_norm²/(λd))`.
pub fn elliptic_potential_bound(d: usize, m: usize, lambda: f64, max_norm: f64) -> f64 {
    let d = d as f64;
    2.0 * d * (1.0 + m as f64 * max_norm * max_norm / (lambda * d)).ln()
}
