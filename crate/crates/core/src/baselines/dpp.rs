use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::safe_sets::{ActionSet, Projector};
use crate::scalar::{from_usize, lit, Real};

/// Primal iterate and virtual queues of drift-plus-penalty.
#[derive(Debug, Clone, PartialEq)]
pub struct DppState<T: Real> {
    pub q: DVector<T>,
    pub x: DVector<T>,
    /// Proximal weight `α`.
    pub alpha: T,
    /// Penalty weight `V` on the cost gradient.
    pub penalty: T,
}

impl<T: Real> DppState<T> {
    /// Queues at zero, iterate at the origin.
    pub fn new(d: usize, n: usize, alpha: T, penalty: T) -> Result<Self> {
        if !(alpha > T::zero()) || !(penalty >= T::zero()) {
            return Err(Error::invalid("DPP needs α > 0 and V ≥ 0"));
        }
        Ok(Self { q: DVector::zeros(n), x: DVector::zeros(d), alpha, penalty })
    }

    /// Nominal parameters `α = T`, `V = √T`.
    pub fn nominal(d: usize, n: usize, horizon: usize) -> Result<Self> {
        let t = from_usize::<T>(horizon);
        Self::new(d, n, t, t.sqrt())
    }

    /// Conservative parameters `α = T`, `V = 0.01·√T`.
    pub fn conservative(d: usize, n: usize, horizon: usize) -> Result<Self> {
        let t = from_usize::<T>(horizon);
        Self::new(d, n, t, lit::<T>(0.01) * t.sqrt())
    }
}

/// One drift-plus-penalty step.
///
/// `x⁺ = Π_𝒳(x − (V∇f + Σᵢ Qᵢ∇gᵢ)/(2α))` minimizes the linearized
/// penalty plus `α‖x − x_t‖²` over 𝒳. The queues then follow
/// `Qᵢ ← max(−ĝᵢ, Qᵢ + ĝᵢ)` with `ĝᵢ = gᵢ + ∇gᵢᵀ(x⁺ − x)`.
pub fn dpp_round<T: Real>(
    state: &mut DppState<T>,
    grad_f: &DVector<T>,
    g_value: &DVector<T>,
    g_grads: &DMatrix<T>,
    action_set: &ActionSet<T>,
) -> Result<DVector<T>> {
    let (n, d) = g_grads.shape();
    if grad_f.len() != d || state.x.len() != d || g_value.len() != n || state.q.len() != n {
        return Err(Error::invalid("DPP round: dimension mismatch"));
    }
    let drift = g_grads.transpose() * &state.q;
    let step = (grad_f * state.penalty + drift) / (state.alpha + state.alpha);
    let next = action_set.project(&(&state.x - step));
    let g_hat = g_value + g_grads * (&next - &state.x);
    for (q, g) in state.q.iter_mut().zip(g_hat.iter()) {
        *q = (-*g).max(*q + *g);
    }
    state.x = next.clone();
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn scalar_example() {
        let mut s = DppState::<f64>::new(1, 1, 1.0, 1.0).unwrap();
        let set = ActionSet::boxed(vec![-1.0], vec![1.0]);
        // g(x) = x − 0.5 at x_t = 0.
        let x = dpp_round(&mut s, &dvector![1.0], &dvector![-0.5], &dmatrix![1.0], &set).unwrap();
        assert!((x[0] + 0.5).abs() < 1e-15);
        assert!((s.q[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_penalty_zero_queue_is_fixed_point() {
        let mut s = DppState::new(2, 1, 3.0, 0.0).unwrap();
        s.x = dvector![0.2, -0.1];
        let x = dpp_round(&mut s, &dvector![5.0, 5.0], &dvector![-0.3], &dmatrix![-1.0, -1.0], &ActionSet::ball(1.0)).unwrap();
        assert_eq!(x, dvector![0.2, -0.1]);
    }

    #[test]
    fn zero_constraint_keeps_queue_empty() {
        let mut s = DppState::new(2, 1, 10.0, 2.0).unwrap();
        for t in 0..50 {
            let grad = dvector![(t as f64).sin(), 1.0];
            dpp_round(&mut s, &grad, &dvector![0.0], &dmatrix![0.0, 0.0], &ActionSet::ball(1.0)).unwrap();
            assert_eq!(s.q[0], 0.0);
        }
    }

    #[test]
    fn queue_recursion_lower_bounds() {
        let mut s = DppState::nominal(2, 1, 100).unwrap();
        let a = dmatrix![-1.0, -1.0];
        for t in 0..100 {
            let before = s.q[0];
            let x_prev = s.x.clone();
            let v = dvector![-0.9, -0.8 + 0.001 * t as f64];
            let grad = (&x_prev - v) * 6.0;
            let g = dvector![(&a * &x_prev)[0] - 0.8];
            let x = dpp_round(&mut s, &grad, &g, &a, &ActionSet::ball(1.0)).unwrap();
            let g_hat = g[0] + (&a * (&x - &x_prev))[0];
            assert!(s.q[0] >= before + g_hat - 1e-15);
            assert!(s.q[0] >= -g_hat - 1e-15);
        }
    }

    #[test]
    fn small_penalty_converges_to_fixed_point() {
        let mut s = DppState::new(2, 1, 1.0, 1e-6).unwrap();
        let a = dmatrix![1.0, 0.0];
        let mut last = s.x.clone();
        for _ in 0..2000 {
            let g = dvector![(&a * &s.x)[0] - 0.5];
            last = s.x.clone();
            dpp_round(&mut s, &dvector![-1.0, 0.0], &g, &a, &ActionSet::ball(1.0)).unwrap();
        }
        assert!((&s.x - last).norm() < 1e-6);
    }
}
