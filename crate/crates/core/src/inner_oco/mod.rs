//! Phase-local online learners run on the optimistic set.
//!
//! Every learner follows the same two-call protocol per round: [`propose`]
//! an action, then [`update`] with the revealed cost. Costs are passed as
//! full descriptors so experts can be evaluated anywhere.
//!
//! [`propose`]: InnerAlgorithm::propose
//! [`update`]: InnerAlgorithm::update

mod cover;
mod ftpl;
mod hedge_descent;

use nalgebra::DVector;
use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::safe_sets::{ConvexPiece, PROJECTION_TOL};
use crate::scalar::{lit, Real};

pub use cover::{build_epsilon_net, CoverHedge, NetFilter, MAX_NET_POINTS};
pub use ftpl::Ftpl;
pub use hedge_descent::HedgeDescent;

/// A convex cost revealed after each round.
pub trait CostFunction<T: Real> {
    fn value(&self, x: &DVector<T>) -> T;
    fn gradient(&self, x: &DVector<T>) -> DVector<T>;

    /// Quadratic form of the cost, if it has one.
    fn as_quadratic(&self) -> Option<&QuadraticCost<T>> {
        None
    }
}

/// `f(x) = scale·‖x − center‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticCost<T: Real> {
    pub scale: T,
    pub center: DVector<T>,
}

impl<T: Real> QuadraticCost<T> {
    pub fn new(scale: T, center: DVector<T>) -> Self {
        Self { scale, center }
    }
}

impl<T: Real> CostFunction<T> for QuadraticCost<T> {
    fn value(&self, x: &DVector<T>) -> T {
        (x - &self.center).norm_squared() * self.scale
    }

    fn gradient(&self, x: &DVector<T>) -> DVector<T> {
        (x - &self.center) * (self.scale + self.scale)
    }

    fn as_quadratic(&self) -> Option<&QuadraticCost<T>> {
        Some(self)
    }
}

/// Step-size constants: gradient bound `G` and diameter `D`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepConstants<T> {
    pub g: T,
    pub d: T,
}

/// Online learner over a fixed (per phase) action family.
pub trait InnerAlgorithm<T: Real>: Send {
    /// Action for the current round.
    fn propose(&mut self, rng: &mut dyn RngCore) -> Result<DVector<T>>;

    /// Feeds the cost of the current round and advances to the next.
    fn update(&mut self, cost: &dyn CostFunction<T>) -> Result<()>;
}

/// Epoch length `τ_j = 2^j`.
pub fn doubling_schedule(j: u32) -> u64 {
    1u64 << j
}

/// Epoch index `j` of a phase-local round `t ≥ 1` under the doubling schedule.
pub fn epoch_of(t: u64) -> u32 {
    63 - t.max(1).leading_zeros()
}

/// Exponential-weights update `p'(m) ∝ p(m)·exp(−ζ·loss(m))`.
pub fn hedge_update<T: Real>(p: &[T], losses: &[T], zeta: T) -> Result<Vec<T>> {
    if p.len() != losses.len() {
        return Err(Error::invalid(format!("{} weights but {} losses", p.len(), losses.len())));
    }
    if losses.iter().any(|l| !l.is_finite()) {
        return Err(Error::invalid("losses must be finite"));
    }
    if !(zeta >= T::zero()) {
        return Err(Error::invalid(format!("learning rate must be nonnegative, got {zeta}")));
    }
    // Shifting by the smallest loss keeps at least one factor equal to one.
    let shift = losses.iter().copied().fold(losses.first().copied().unwrap_or(T::zero()), |a, b| a.min(b));
    let mut out: Vec<T> = p
        .iter()
        .zip(losses)
        .map(|(w, l)| *w * (-(zeta * (*l - shift))).exp())
        .collect();
    let total = out.iter().copied().fold(T::zero(), |a, b| a + b);
    if !(total > T::zero()) || !total.is_finite() {
        return Err(Error::numerical("hedge weights vanished"));
    }
    for w in &mut out {
        *w /= total;
    }
    Ok(out)
}

/// Inverse-CDF draw from `weights` with a single uniform; ties go to the lowest index.
pub fn sample_index<T: Real>(weights: &[T], rng: &mut dyn RngCore) -> usize {
    let u: f64 = rng.random();
    let u = lit::<T>(u);
    let mut acc = T::zero();
    for (i, w) in weights.iter().enumerate() {
        acc += *w;
        if u < acc {
            return i;
        }
    }
    // Rounding left the cumulative sum below u: fall back to the last positive weight.
    weights.iter().rposition(|w| *w > T::zero()).unwrap_or(0)
}

/// One projected gradient step onto `piece`.
pub fn ogd_step<T: Real>(x: &DVector<T>, grad: &DVector<T>, eta: T, piece: &ConvexPiece<T>) -> Result<DVector<T>> {
    if !(eta > T::zero()) {
        return Err(Error::invalid(format!("step size must be positive, got {eta}")));
    }
    piece.project(&(x - grad * eta), lit(PROJECTION_TOL))
}

/// Drops empty pieces; errors if nothing is left.
fn nonempty_pieces<T: Real>(pieces: Vec<ConvexPiece<T>>) -> Result<Vec<ConvexPiece<T>>> {
    let kept: Vec<_> = pieces.into_iter().filter(|p| p.is_nonempty()).collect();
    if kept.is_empty() {
        return Err(Error::invalid("inner algorithm needs at least one nonempty piece"));
    }
    Ok(kept)
}
