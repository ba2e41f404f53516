//! Exact projection onto small polyhedra intersected with a ball or box,
//! by enumerating candidate active sets.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::projection::{Halfspace, Projector};
use super::ActionSet;
use crate::scalar::{lit, Real};

/// Candidate budget above which callers should fall back to Dykstra.
pub const MAX_CANDIDATES: usize = 20_000;

fn binomial_sum(m: usize, k_max: usize) -> usize {
    let mut total = 0usize;
    let mut c = 1usize;
    for k in 0..=k_max.min(m) {
        total = total.saturating_add(c);
        c = c.saturating_mul(m - k) / (k + 1);
    }
    total
}

fn for_each_subset(m: usize, k_max: usize, f: &mut dyn FnMut(&[usize])) {
    fn go(start: usize, m: usize, k_max: usize, cur: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        f(cur);
        if cur.len() == k_max {
            return;
        }
        for i in start..m {
            cur.push(i);
            go(i + 1, m, k_max, cur, f);
            cur.pop();
        }
    }
    go(0, m, k_max, &mut Vec::new(), f);
}

/// Projection of `z` onto `{x : Hx = c}` and the least-norm point of that
/// affine set, or `None` when the rows are (nearly) dependent.
fn affine_projection<T: Real>(z: &DVector<T>, rows: &[&Halfspace<T>]) -> Option<(DVector<T>, DVector<T>)> {
    if rows.is_empty() {
        return Some((z.clone(), DVector::zeros(z.len())));
    }
    let h = DMatrix::from_rows(&rows.iter().map(|r| r.normal.transpose()).collect::<Vec<_>>());
    let c = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.offset));
    let g = &h * h.transpose();
    let eig = SymmetricEigen::new(g.clone());
    let (lo, hi) = (eig.eigenvalues.min(), eig.eigenvalues.max());
    if !(lo > hi * lit(1e-12)) {
        return None;
    }
    let chol = g.cholesky()?;
    let p = z - h.transpose() * chol.solve(&(&h * z - &c));
    let center = h.transpose() * chol.solve(&c);
    Some((p, center))
}

/// Exact Euclidean projection of `z` onto `set ∩ {halfspaces}`.
///
/// The projection's active constraints define an affine set `L`, and the
/// projection equals the projection of `z` onto `L ∩ set` (onto `L` for a
/// box, whose faces join the halfspace list). Every such candidate that is
/// feasible is computed and the closest one wins. Returns `None` when the
/// candidate count exceeds [`MAX_CANDIDATES`] or nothing feasible is found.
pub fn project_by_active_sets<T: Real>(
    z: &DVector<T>,
    halfspaces: &[&Halfspace<T>],
    set: &ActionSet<T>,
    tol: T,
) -> Option<DVector<T>> {
    let d = z.len();
    let mut rows: Vec<Halfspace<T>> = halfspaces.iter().map(|h| (*h).clone()).collect();
    let radius = match set {
        ActionSet::Ball { radius } => Some(*radius),
        ActionSet::Box { lower, upper } => {
            for i in 0..d {
                let mut e = DVector::zeros(d);
                e[i] = T::one();
                rows.push(Halfspace::new(e.clone(), upper[i]));
                rows.push(Halfspace::new(-e, -lower[i]));
            }
            None
        }
    };
    if binomial_sum(rows.len(), d) > MAX_CANDIDATES {
        return None;
    }
    let refs: Vec<&Halfspace<T>> = rows.iter().collect();
    let feasible = |x: &DVector<T>| set.violation(x) <= tol && refs.iter().all(|h| h.violation(x) <= tol);
    let mut best: Option<(T, DVector<T>)> = None;
    for_each_subset(rows.len(), d, &mut |idx| {
        let active: Vec<&Halfspace<T>> = idx.iter().map(|&i| refs[i]).collect();
        let Some((p, center)) = affine_projection(z, &active) else {
            return;
        };
        let x = match radius {
            None => p,
            Some(r) => {
                let c_sq = center.norm_squared();
                if c_sq > r * r {
                    return;
                }
                let rim = (r * r - c_sq).sqrt();
                let offset = &p - &center;
                let len = offset.norm();
                if len <= rim {
                    p
                } else {
                    center + offset * (rim / len)
                }
            }
        };
        if feasible(&x) {
            let dist = (&x - z).norm_squared();
            if best.as_ref().is_none_or(|(b, _)| dist < *b) {
                best = Some((dist, x));
            }
        }
    });
    best.map(|(_, x)| x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn subset_counts() {
        assert_eq!(binomial_sum(5, 2), 1 + 5 + 10);
        let mut n = 0;
        for_each_subset(5, 2, &mut |_| n += 1);
        assert_eq!(n, 16);
    }

    #[test]
    fn box_corner() {
        let set = ActionSet::boxed(vec![-1.0, -1.0], vec![1.0, 1.0]);
        let h = Halfspace::new(dvector![1.0, 1.0], 1.0);
        let x = project_by_active_sets(&dvector![3.0, 3.0], &[&h], &set, 1e-12).unwrap();
        assert!((x - dvector![0.5, 0.5]).norm() < 1e-14);
        let x = project_by_active_sets(&dvector![3.0, -0.5], &[&h], &set, 1e-12).unwrap();
        assert!((x - dvector![1.0, -0.5]).norm() < 1e-14);
    }

    #[test]
    fn ball_with_two_cuts() {
        let set = ActionSet::ball(1.0);
        let h1 = Halfspace::new(dvector![1.0, 0.0], 0.5);
        let h2 = Halfspace::new(dvector![0.0, 1.0], 0.5);
        let x = project_by_active_sets(&dvector![2.0, 2.0], &[&h1, &h2], &set, 1e-12).unwrap();
        assert!((x - dvector![0.5, 0.5]).norm() < 1e-14);
        let x = project_by_active_sets(&dvector![0.0, -3.0], &[&h1, &h2], &set, 1e-12).unwrap();
        assert!((x - dvector![0.0, -1.0]).norm() < 1e-14);
    }

    #[test]
    fn empty_intersection() {
        let set = ActionSet::ball(1.0);
        let h = Halfspace::new(dvector![1.0, 0.0], -2.0);
        assert!(project_by_active_sets(&dvector![0.0, 0.0], &[&h], &set, 1e-12).is_none());
    }
}
