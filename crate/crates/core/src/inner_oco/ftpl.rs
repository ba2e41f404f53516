use nalgebra::DVector;
use rand::RngCore;
use rand_distr::{Distribution, Exp};

use super::{epoch_of, nonempty_pieces, CostFunction, InnerAlgorithm, StepConstants};
use crate::error::{Error, Result};
use crate::safe_sets::{ConvexPiece, PROJECTION_TOL};
use crate::scalar::{from_usize, lit, to_f64, Real};

/// Follow the perturbed leader over a union of convex pieces, restarted on
/// a doubling schedule.
///
/// Costs must be quadratic `cᵢ‖x − vᵢ‖²`; the epoch history is then
/// summarized by `C = Σcᵢ` and `w = Σcᵢvᵢ`, and the perturbed objective
/// `C‖x‖² − (2w + σ)ᵀx` is minimized on a piece by projecting
/// `(2w + σ)/(2C)` onto it. Perturbations are i.i.d. exponential with rate
/// `η_j = 1/√(2dG²τ_j)`.
#[derive(Debug, Clone)]
pub struct Ftpl<T: Real> {
    pieces: Vec<ConvexPiece<T>>,
    dim: usize,
    constants: StepConstants<T>,
    t: u64,
    epoch: u32,
    weight_sum: T,
    center_sum: DVector<T>,
}

impl<T: Real> Ftpl<T> {
    pub fn new(pieces: Vec<ConvexPiece<T>>, dim: usize, constants: StepConstants<T>) -> Result<Self> {
        if !(constants.g > T::zero()) {
            return Err(Error::invalid("G must be positive"));
        }
        Ok(Self {
            pieces: nonempty_pieces(pieces)?,
            dim,
            constants,
            t: 1,
            epoch: 0,
            weight_sum: T::zero(),
            center_sum: DVector::zeros(dim),
        })
    }

    /// Perturbation rate of the current epoch.
    pub fn rate(&self) -> T {
        let tau: T = lit(super::doubling_schedule(self.epoch) as f64);
        T::one() / (lit::<T>(2.0) * from_usize::<T>(self.dim) * self.constants.g * self.constants.g * tau).sqrt()
    }

    pub fn pieces(&self) -> &[ConvexPiece<T>] {
        &self.pieces
    }

    /// Perturbed objective `Σ f_s(x) − σᵀx`, up to a constant.
    pub fn objective(&self, x: &DVector<T>, sigma: &DVector<T>) -> T {
        self.weight_sum * x.norm_squared() - (&self.center_sum * lit::<T>(2.0) + sigma).dot(x)
    }

    /// Leader for a given perturbation; ties go to the lowest piece index.
    pub fn leader(&self, sigma: &DVector<T>) -> Result<DVector<T>> {
        if sigma.len() != self.dim {
            return Err(Error::invalid("perturbation has the wrong dimension"));
        }
        let linear = &self.center_sum * lit::<T>(2.0) + sigma;
        let target = if self.weight_sum > T::zero() {
            linear / (self.weight_sum + self.weight_sum)
        } else if linear.norm() > T::zero() {
            // Pure linear objective: push the target far along σ so the
            // projection lands on the maximizer.
            let far = self.pieces[0].action_set.max_norm() * lit::<T>(1e6) / linear.norm();
            linear * far
        } else {
            DVector::zeros(self.dim)
        };
        let mut best: Option<(T, DVector<T>)> = None;
        for piece in &self.pieces {
            let x = piece.project(&target, lit(PROJECTION_TOL))?;
            let value = self.objective(&x, sigma);
            if best.as_ref().is_none_or(|(v, _)| value < *v) {
                best = Some((value, x));
            }
        }
        Ok(best.map(|(_, x)| x).expect("family is nonempty"))
    }

    fn draw_sigma(&self, rng: &mut dyn RngCore) -> Result<DVector<T>> {
        let exp = Exp::new(to_f64(self.rate())).map_err(|e| Error::invalid(format!("perturbation rate: {e}")))?;
        Ok(DVector::from_iterator(self.dim, (0..self.dim).map(|_| lit::<T>(exp.sample(rng)))))
    }
}

impl<T: Real> InnerAlgorithm<T> for Ftpl<T> {
    fn propose(&mut self, rng: &mut dyn RngCore) -> Result<DVector<T>> {
        let sigma = self.draw_sigma(rng)?;
        self.leader(&sigma)
    }

    fn update(&mut self, cost: &dyn CostFunction<T>) -> Result<()> {
        let q = cost
            .as_quadratic()
            .ok_or_else(|| Error::Precondition("perturbed leader needs quadratic costs".into()))?;
        self.weight_sum += q.scale;
        self.center_sum += &q.center * q.scale;
        self.t += 1;
        let j = epoch_of(self.t);
        if j != self.epoch {
            self.epoch = j;
            self.weight_sum = T::zero();
            self.center_sum.fill(T::zero());
        }
        Ok(())
    }
}
