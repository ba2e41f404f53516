use nalgebra::DVector;
use rand::RngCore;

use super::{hedge_update, nonempty_pieces, ogd_step, sample_index, CostFunction, InnerAlgorithm, StepConstants};
use crate::error::{Error, Result};
use crate::safe_sets::{ConvexPiece, PROJECTION_TOL};
use crate::scalar::{from_usize, lit, Real};

/// Hedge over one projected-gradient expert per convex piece.
///
/// Steps follow the anytime schedule `ζ_t = √(4 ln M)/(G·D·√t)` for the
/// weights and `η_t = D/(G·√t)` for the experts, with `t` counted within
/// the phase. All experts receive the full cost every round.
#[derive(Debug, Clone)]
pub struct HedgeDescent<T: Real> {
    pieces: Vec<ConvexPiece<T>>,
    points: Vec<DVector<T>>,
    weights: Vec<T>,
    constants: StepConstants<T>,
    t: usize,
    last: Option<usize>,
}

impl<T: Real> HedgeDescent<T> {
    /// Starts every expert at the projection of the origin onto its piece.
    pub fn new(pieces: Vec<ConvexPiece<T>>, dim: usize, constants: StepConstants<T>) -> Result<Self> {
        let pieces = nonempty_pieces(pieces)?;
        let origin = DVector::zeros(dim);
        let points = pieces
            .iter()
            .map(|p| p.project(&origin, lit(PROJECTION_TOL)))
            .collect::<Result<Vec<_>>>()?;
        Self::with_points(pieces, points, constants)
    }

    /// Starts from explicit expert points (one per piece).
    pub fn with_points(pieces: Vec<ConvexPiece<T>>, points: Vec<DVector<T>>, constants: StepConstants<T>) -> Result<Self> {
        if !(constants.g > T::zero() && constants.d > T::zero()) {
            return Err(Error::invalid("G and D must be positive"));
        }
        if pieces.is_empty() || pieces.len() != points.len() {
            return Err(Error::invalid("need one starting point per piece"));
        }
        let m = pieces.len();
        Ok(Self {
            pieces,
            points,
            weights: vec![T::one() / from_usize::<T>(m); m],
            constants,
            t: 1,
            last: None,
        })
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn points(&self) -> &[DVector<T>] {
        &self.points
    }

    pub fn pieces(&self) -> &[ConvexPiece<T>] {
        &self.pieces
    }

    /// Expert index sampled in the current round, if any.
    pub fn last_choice(&self) -> Option<usize> {
        self.last
    }

    /// Phase-local round of the next proposal.
    pub fn round(&self) -> usize {
        self.t
    }

    fn zeta(&self) -> T {
        let m = from_usize::<T>(self.pieces.len());
        (lit::<T>(4.0) * m.ln()).sqrt() / (self.constants.g * self.constants.d * from_usize::<T>(self.t).sqrt())
    }

    fn eta(&self) -> T {
        self.constants.d / (self.constants.g * from_usize::<T>(self.t).sqrt())
    }
}

impl<T: Real> InnerAlgorithm<T> for HedgeDescent<T> {
    fn propose(&mut self, rng: &mut dyn RngCore) -> Result<DVector<T>> {
        let m = if self.weights.len() == 1 { 0 } else { sample_index(&self.weights, rng) };
        self.last = Some(m);
        Ok(self.points[m].clone())
    }

    fn update(&mut self, cost: &dyn CostFunction<T>) -> Result<()> {
        let losses: Vec<T> = self.points.iter().map(|x| cost.value(x)).collect();
        self.weights = hedge_update(&self.weights, &losses, self.zeta())?;
        let eta = self.eta();
        for (x, piece) in self.points.iter_mut().zip(&self.pieces) {
            let grad = cost.gradient(x);
            *x = ogd_step(x, &grad, eta, piece)?;
        }
        self.t += 1;
        Ok(())
    }
}
