//! Euclidean projection onto intersections of simple convex sets.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

/// Default stopping tolerance for projections.
pub const PROJECTION_TOL: f64 = 1e-9;
/// Sweep budget for Dykstra's method.
pub const MAX_SWEEPS: usize = 10_000;

/// A closed convex set with an exact Euclidean projection.
pub trait Projector<T: Real> {
    fn project(&self, x: &DVector<T>) -> DVector<T>;

    /// Distance-like infeasibility of `x`; zero inside the set.
    fn violation(&self, x: &DVector<T>) -> T;
}

/// Closed halfspace `{x : normalᵀx ≤ offset}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Halfspace<T: Real> {
    pub normal: DVector<T>,
    pub offset: T,
}

impl<T: Real> Halfspace<T> {
    pub fn new(normal: DVector<T>, offset: T) -> Self {
        Self { normal, offset }
    }

    pub fn contains(&self, x: &DVector<T>, tol: T) -> bool {
        self.normal.dot(x) <= self.offset + tol
    }

    /// Normals this short make the constraint `0 ≤ offset`.
    pub fn is_degenerate(&self) -> bool {
        self.normal.norm_squared() <= lit(1e-300)
    }
}

impl<T: Real> Projector<T> for Halfspace<T> {
    fn project(&self, x: &DVector<T>) -> DVector<T> {
        let nsq = self.normal.norm_squared();
        if nsq <= lit(1e-300) {
            return x.clone();
        }
        let excess = self.normal.dot(x) - self.offset;
        if excess <= T::zero() {
            x.clone()
        } else {
            x - &self.normal * (excess / nsq)
        }
    }

    fn violation(&self, x: &DVector<T>) -> T {
        let norm = self.normal.norm();
        if norm <= lit(1e-150) {
            return (-self.offset).max(T::zero());
        }
        ((self.normal.dot(x) - self.offset) / norm).max(T::zero())
    }
}

/// Outcome of a Dykstra run, kept for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DykstraStats<T> {
    pub sweeps: usize,
    pub last_change: T,
    pub violation: T,
}

/// Dykstra's alternating projection onto `∩ sets`, starting from `z`.
///
/// Stops when one full sweep moves the iterate by at most `tol` and every
/// set is satisfied to within `tol`. The last set in `sets` is projected
/// onto last, so the returned point lies in it exactly.
pub fn dykstra<T: Real>(
    z: &DVector<T>,
    sets: &[&dyn Projector<T>],
    tol: T,
    max_sweeps: usize,
) -> Result<(DVector<T>, DykstraStats<T>)> {
    if sets.is_empty() {
        return Ok((z.clone(), DykstraStats { sweeps: 0, last_change: T::zero(), violation: T::zero() }));
    }
    let mut x = z.clone();
    let mut increments: Vec<DVector<T>> = vec![DVector::zeros(z.len()); sets.len()];
    let mut last_change = T::zero();
    let mut violation = T::zero();
    for sweep in 1..=max_sweeps {
        let start = x.clone();
        for (set, p) in sets.iter().zip(increments.iter_mut()) {
            let shifted = &x + &*p;
            let y = set.project(&shifted);
            *p = shifted - &y;
            x = y;
        }
        last_change = (&x - &start).norm();
        violation = sets.iter().map(|s| s.violation(&x)).fold(T::zero(), |a, b| a.max(b));
        if !last_change.is_finite() {
            break;
        }
        if last_change <= tol && violation <= tol {
            return Ok((x, DykstraStats { sweeps: sweep, last_change, violation }));
        }
    }
    Err(Error::numerical(format!(
        "Dykstra projection did not converge after {max_sweeps} sweeps \
         (last sweep change {last_change}, max violation {violation})"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::safe_sets::ActionSet;
    use nalgebra::dvector;

    #[test]
    fn halfspace_projection_formula() {
        let h = Halfspace::<f64>::new(dvector![1.0, 0.0], 0.5);
        assert_eq!(h.project(&dvector![2.0, 0.0]), dvector![0.5, 0.0]);
        assert_eq!(h.project(&dvector![0.1, 3.0]), dvector![0.1, 3.0]);
        assert!((h.violation(&dvector![2.0, 0.0]) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn dykstra_ball_and_halfspace_corner() {
        let ball = ActionSet::<f64>::ball(1.0);
        let h = Halfspace::new(dvector![1.0, 0.0], 0.0);
        let (x, stats) = dykstra(&dvector![2.0, 0.0], &[&h, &ball], 1e-9, MAX_SWEEPS).unwrap();
        assert!(x.norm() < 1e-8, "{x:?}");
        assert!(stats.sweeps >= 1);
    }

    #[test]
    fn dykstra_reports_non_convergence() {
        // Two disjoint halfspaces never reach feasibility.
        let a = Halfspace::new(dvector![1.0], -1.0);
        let b = Halfspace::new(dvector![-1.0], -1.0);
        let err = dykstra(&dvector![0.0], &[&a, &b], 1e-9, 50).unwrap_err();
        assert!(matches!(err, Error::Numerical(ref m) if m.contains("50 sweeps")));
    }
}
