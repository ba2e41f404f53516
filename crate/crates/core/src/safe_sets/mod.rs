//! Action sets and the per-phase optimistic / pessimistic safe sets.
//!
//! A [`SafeSetSpec`] freezes the constraint estimate of one phase. The
//! pessimistic set `{x ∈ 𝒳 : Âx + β̄‖x‖_{V̄⁻¹}·1 ≤ b − κ·1}` is an inner
//! approximation of the feasible set and the optimistic set (minus sign) an
//! outer one. Replacing the 2-norm by `√d·‖V̄^{-1/2}x‖_∞` relaxes the
//! optimistic set into a union of `2d` convex [`ConvexPiece`]s.

mod active_set;
mod projection;
mod robust;

use nalgebra::{DMatrix, DVector};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{inverse_and_inverse_sqrt, weighted_norm, GramState};
use crate::scalar::{from_usize, lit, tol, Real};

pub use active_set::{project_by_active_sets, MAX_CANDIDATES};
pub use projection::{dykstra, DykstraStats, Halfspace, Projector, MAX_SWEEPS, PROJECTION_TOL};
pub use robust::RobustHalfspace;

/// Slack used when testing membership of the action set itself.
pub const MEMBERSHIP_TOL: f64 = 1e-12;
/// Slack on `x̃ ∈ 𝒳` accepted by [`SafeSetSpec::safe_scaling`].
pub const SCALING_PRECONDITION_TOL: f64 = 1e-8;

/// Compact convex action set containing the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", bound = "T: Serialize + DeserializeOwned")]
pub enum ActionSet<T: Real> {
    /// Euclidean ball of the given radius centered at the origin.
    Ball { radius: T },
    /// Axis-aligned box `[lower, upper]`.
    Box { lower: Vec<T>, upper: Vec<T> },
}

impl<T: Real> ActionSet<T> {
    pub fn ball(radius: T) -> Self {
        ActionSet::Ball { radius }
    }

    pub fn boxed(lower: Vec<T>, upper: Vec<T>) -> Self {
        ActionSet::Box { lower, upper }
    }

    /// Checks the set is well formed for dimension `d` and contains the origin.
    pub fn validate(&self, d: usize) -> Result<()> {
        match self {
            ActionSet::Ball { radius } => {
                if !(*radius > T::zero()) || !radius.is_finite() {
                    return Err(Error::invalid(format!("ball radius must be positive, got {radius}")));
                }
            }
            ActionSet::Box { lower, upper } => {
                if lower.len() != d || upper.len() != d {
                    return Err(Error::invalid(format!("box bounds must have length {d}")));
                }
                for (lo, hi) in lower.iter().zip(upper) {
                    if !(*lo <= T::zero() && T::zero() <= *hi) || !lo.is_finite() || !hi.is_finite() {
                        return Err(Error::invalid("box must contain the origin and be bounded"));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn contains(&self, x: &DVector<T>, tol: T) -> bool {
        match self {
            ActionSet::Ball { radius } => x.norm() <= *radius + tol,
            ActionSet::Box { lower, upper } => {
                x.len() == lower.len()
                    && x.iter().zip(lower.iter().zip(upper)).all(|(v, (lo, hi))| *v >= *lo - tol && *v <= *hi + tol)
            }
        }
    }

    /// Largest norm of any member; the diameter bound is twice this.
    pub fn max_norm(&self) -> T {
        match self {
            ActionSet::Ball { radius } => *radius,
            ActionSet::Box { lower, upper } => lower
                .iter()
                .zip(upper)
                .map(|(lo, hi)| {
                    let m = lo.abs().max(hi.abs());
                    m * m
                })
                .fold(T::zero(), |a, b| a + b)
                .sqrt(),
        }
    }

    /// Per-coordinate bounds of a box enclosing the set.
    pub fn bounding_box(&self, d: usize) -> (Vec<T>, Vec<T>) {
        match self {
            ActionSet::Ball { radius } => (vec![-*radius; d], vec![*radius; d]),
            ActionSet::Box { lower, upper } => (lower.clone(), upper.clone()),
        }
    }

    /// Largest `μ ≥ 0` with `μ·direction` in the set (`None` for a zero direction).
    pub fn max_scale(&self, direction: &DVector<T>) -> Option<T> {
        match self {
            ActionSet::Ball { radius } => {
                let n = direction.norm();
                (n > T::zero()).then(|| *radius / n)
            }
            ActionSet::Box { lower, upper } => {
                let mut best: Option<T> = None;
                for ((v, lo), hi) in direction.iter().zip(lower).zip(upper) {
                    let limit = if *v > T::zero() {
                        *hi / *v
                    } else if *v < T::zero() {
                        *lo / *v
                    } else {
                        continue;
                    };
                    best = Some(best.map_or(limit, |b| b.min(limit)));
                }
                best
            }
        }
    }
}

impl<T: Real> Projector<T> for ActionSet<T> {
    fn project(&self, x: &DVector<T>) -> DVector<T> {
        match self {
            ActionSet::Ball { radius } => {
                let n = x.norm();
                if n <= *radius {
                    x.clone()
                } else {
                    x * (*radius / n)
                }
            }
            ActionSet::Box { lower, upper } => DVector::from_iterator(
                x.len(),
                x.iter().zip(lower.iter().zip(upper)).map(|(v, (lo, hi))| v.max(*lo).min(*hi)),
            ),
        }
    }

    fn violation(&self, x: &DVector<T>) -> T {
        match self {
            ActionSet::Ball { radius } => (x.norm() - *radius).max(T::zero()),
            ActionSet::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(v, (lo, hi))| (*lo - *v).max(*v - *hi).max(T::zero()))
                .fold(T::zero(), |a, b| a.max(b)),
        }
    }
}

/// One convex member `Ỹ(k, ξ)` of the relaxed optimistic family: the action
/// set intersected with a list of halfspaces.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexPiece<T: Real> {
    pub halfspaces: Vec<Halfspace<T>>,
    pub action_set: ActionSet<T>,
    /// Coordinate index `k` (zero based).
    pub k: usize,
    /// Sign `ξ ∈ {−1, +1}`.
    pub xi: i8,
}

impl<T: Real> ConvexPiece<T> {
    pub fn new(halfspaces: Vec<Halfspace<T>>, action_set: ActionSet<T>) -> Self {
        Self { halfspaces, action_set, k: 0, xi: 1 }
    }

    pub fn contains(&self, x: &DVector<T>, tol: T) -> bool {
        self.action_set.contains(x, tol) && self.halfspaces.iter().all(|h| h.contains(x, tol))
    }

    /// Largest constraint violation of `x` (zero if inside).
    pub fn violation(&self, x: &DVector<T>) -> T {
        self.halfspaces
            .iter()
            .map(|h| h.violation(x))
            .fold(self.action_set.violation(x), |a, b| a.max(b))
    }

    /// True when every offset is nonnegative, so the origin is a member.
    pub fn contains_origin(&self) -> bool {
        self.halfspaces.iter().all(|h| h.offset >= T::zero())
    }

    /// Whether the piece has at least one point.
    pub fn is_nonempty(&self) -> bool {
        if self.contains_origin() {
            return true;
        }
        let d = self.halfspaces.first().map_or(0, |h| h.normal.len());
        match self.project(&DVector::zeros(d), lit(PROJECTION_TOL)) {
            Ok(p) => self.violation(&p) <= lit(1e-7),
            Err(_) => false,
        }
    }

    /// Euclidean projection of `z` onto the piece.
    ///
    /// A ball with at most one halfspace is projected in closed form, small
    /// pieces by active-set enumeration, and anything larger by Dykstra's
    /// method.
    pub fn project(&self, z: &DVector<T>, tol: T) -> Result<DVector<T>> {
        let active: Vec<&Halfspace<T>> = self.halfspaces.iter().filter(|h| !h.is_degenerate()).collect();
        if let Some(h) = self.halfspaces.iter().find(|h| h.is_degenerate() && h.offset < T::zero()) {
            return Err(Error::numerical(format!("piece is empty: degenerate halfspace with offset {}", h.offset)));
        }
        if let (ActionSet::Ball { radius }, true) = (&self.action_set, z.len() >= 2 && active.len() <= 1) {
            return match active.first() {
                None => Ok(self.action_set.project(z)),
                Some(h) => project_ball_halfspace(z, *radius, h),
            };
        }
        if let Some(x) = project_by_active_sets(z, &active, &self.action_set, tol) {
            return Ok(x);
        }
        let mut sets: Vec<&dyn Projector<T>> = active.iter().map(|h| *h as &dyn Projector<T>).collect();
        sets.push(&self.action_set);
        dykstra(z, &sets, tol, MAX_SWEEPS).map(|(x, _)| x)
    }
}

/// Exact projection onto `{‖x‖ ≤ r} ∩ {aᵀx ≤ c}` for `d ≥ 2`.
fn project_ball_halfspace<T: Real>(z: &DVector<T>, radius: T, h: &Halfspace<T>) -> Result<DVector<T>> {
    let a = &h.normal;
    let c = h.offset;
    let a_sq = a.norm_squared();
    // Nearest hyperplane point to the origin.
    let center = a * (c / a_sq);
    let center_sq = center.norm_squared();
    if c < T::zero() && center_sq > radius * radius {
        return Err(Error::numerical("piece is empty: halfspace misses the ball"));
    }
    let on_ball = if z.norm() <= radius { z.clone() } else { z * (radius / z.norm()) };
    if a.dot(&on_ball) <= c {
        return Ok(on_ball);
    }
    let on_half = h.project(z);
    if on_half.norm() <= radius {
        return Ok(on_half);
    }
    // Both constraints active: nearest point on the sphere ∩ hyperplane.
    let rim = (radius * radius - center_sq).max(T::zero()).sqrt();
    let in_plane = z - a * ((a.dot(z) - c) / a_sq);
    let mut dir = &in_plane - &center;
    let len = dir.norm();
    if len <= lit(1e-300) {
        // z projects onto the rim's center; every rim point is equidistant.
        let axis = a.iamax();
        let mut e = DVector::zeros(z.len());
        e[(axis + 1) % z.len()] = T::one();
        dir = &e - a * (a.dot(&e) / a_sq);
        let l = dir.norm();
        dir /= l;
    } else {
        dir /= len;
    }
    Ok(center + dir * rim)
}

/// Frozen per-phase description of the optimistic and pessimistic sets.
#[derive(Debug, Clone, PartialEq)]
pub struct SafeSetSpec<T: Real> {
    pub a_hat: DMatrix<T>,
    pub beta_bar: T,
    pub v_bar_inv: DMatrix<T>,
    pub v_bar_inv_sqrt: DMatrix<T>,
    pub b: DVector<T>,
    pub kappa: T,
    pub action_set: ActionSet<T>,
}

impl<T: Real> SafeSetSpec<T> {
    /// Builds and validates a spec from its raw parts.
    pub fn new(
        a_hat: DMatrix<T>,
        beta_bar: T,
        v_bar_inv: DMatrix<T>,
        v_bar_inv_sqrt: DMatrix<T>,
        b: DVector<T>,
        kappa: T,
        action_set: ActionSet<T>,
    ) -> Result<Self> {
        let spec = Self { a_hat, beta_bar, v_bar_inv, v_bar_inv_sqrt, b, kappa, action_set };
        spec.validate()?;
        Ok(spec)
    }

    /// Spec built from a Gram matrix with `V̄ = diag`-free inputs: `Â = 0`
    /// is not assumed, the estimate is read from `gram`.
    pub fn from_gram(gram: &GramState<T>, beta_bar: T, b: DVector<T>, kappa: T, action_set: ActionSet<T>) -> Result<Self> {
        let a_hat = gram.rls_estimate()?;
        let (inv, inv_sqrt) = inverse_and_inverse_sqrt(gram.gram())?;
        Self::new(a_hat, beta_bar, inv, inv_sqrt, b, kappa, action_set)
    }

    /// Spec for a known `V̄` (used by tests and standalone experiments).
    pub fn from_gram_matrix(
        a_hat: DMatrix<T>,
        beta_bar: T,
        v_bar: &DMatrix<T>,
        b: DVector<T>,
        kappa: T,
        action_set: ActionSet<T>,
    ) -> Result<Self> {
        let (inv, inv_sqrt) = inverse_and_inverse_sqrt(v_bar)?;
        Self::new(a_hat, beta_bar, inv, inv_sqrt, b, kappa, action_set)
    }

    pub fn validate(&self) -> Result<()> {
        let (n, d) = self.a_hat.shape();
        if self.b.len() != n {
            return Err(Error::invalid(format!("b has length {} but Â has {n} rows", self.b.len())));
        }
        if self.v_bar_inv.shape() != (d, d) || self.v_bar_inv_sqrt.shape() != (d, d) {
            return Err(Error::invalid("V̄ matrices must be d×d"));
        }
        if !(self.beta_bar >= T::zero()) {
            return Err(Error::invalid("confidence radius must be nonnegative"));
        }
        if !(self.kappa >= T::zero() && self.kappa < self.b_min()) {
            return Err(Error::invalid(format!(
                "tightening κ = {} must lie in [0, b_min = {})",
                self.kappa,
                self.b_min()
            )));
        }
        self.action_set.validate(d)?;
        let sq = &self.v_bar_inv_sqrt * &self.v_bar_inv_sqrt;
        let scale = self.v_bar_inv.amax().max(T::one());
        if (sq - &self.v_bar_inv).amax() > tol::<T>(1e-8, 1e3) * scale {
            return Err(Error::invalid("V̄^(-1/2) squared does not match V̄⁻¹"));
        }
        if (&self.v_bar_inv - self.v_bar_inv.transpose()).amax() > tol::<T>(1e-10, 64.0) * scale {
            return Err(Error::invalid("V̄⁻¹ must be symmetric"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.a_hat.ncols()
    }

    pub fn rows(&self) -> usize {
        self.a_hat.nrows()
    }

    pub fn b_min(&self) -> T {
        self.b.iter().copied().fold(T::max_value().unwrap_or(lit(f64::MAX)), |a, b| a.min(b))
    }

    /// `‖x‖_{V̄⁻¹}`.
    pub fn weighted_norm(&self, x: &DVector<T>) -> T {
        weighted_norm(x, &self.v_bar_inv)
    }

    /// `√d·β̄·‖V̄^{-1/2}x‖_∞`, the relaxed uncertainty width.
    pub fn relaxed_width(&self, x: &DVector<T>) -> T {
        from_usize::<T>(self.dim()).sqrt() * self.beta_bar * (&self.v_bar_inv_sqrt * x).amax()
    }

    fn check_dim(&self, x: &DVector<T>) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::invalid(format!("action has dimension {} but spec has {}", x.len(), self.dim())));
        }
        Ok(())
    }

    /// Largest row of `Âx ± width − (b − κ)`; nonpositive means satisfied.
    fn slack(&self, x: &DVector<T>, width: T) -> T {
        let ax = &self.a_hat * x;
        ax.iter()
            .zip(self.b.iter())
            .map(|(v, b)| *v + width - (*b - self.kappa))
            .fold(-T::max_value().unwrap_or(lit(f64::MAX)), |a, b| a.max(b))
    }

    /// Worst-row value of `âᵢᵀx + β̄‖x‖_{V̄⁻¹} − (bᵢ − κ)`.
    pub fn pessimistic_slack(&self, x: &DVector<T>) -> Result<T> {
        self.check_dim(x)?;
        Ok(self.slack(x, self.beta_bar * self.weighted_norm(x)))
    }

    pub fn pessimistic_contains(&self, x: &DVector<T>) -> Result<bool> {
        Ok(self.pessimistic_slack(x)? <= T::zero() && self.action_set.contains(x, lit(MEMBERSHIP_TOL)))
    }

    pub fn optimistic_contains(&self, x: &DVector<T>) -> Result<bool> {
        self.check_dim(x)?;
        let width = -self.beta_bar * self.weighted_norm(x);
        Ok(self.slack(x, width) <= T::zero() && self.action_set.contains(x, lit(MEMBERSHIP_TOL)))
    }

    /// Membership in the relaxed optimistic set (the union of all pieces).
    pub fn relaxed_contains(&self, x: &DVector<T>) -> Result<bool> {
        self.check_dim(x)?;
        let width = -self.relaxed_width(x);
        Ok(self.slack(x, width) <= T::zero() && self.action_set.contains(x, lit(MEMBERSHIP_TOL)))
    }

    /// Largest `γ ∈ [0, 1]` with `γ·x̃` in the pessimistic set, in closed form.
    ///
    /// The pessimistic constraint is positively homogeneous in the scaling
    /// and 𝒳 is star-shaped about the origin, so only rows with positive
    /// coefficient `cᵢ = âᵢᵀx̃ + β̄‖x̃‖_{V̄⁻¹}` can bind.
    pub fn safe_scaling(&self, x_tilde: &DVector<T>) -> Result<T> {
        self.check_dim(x_tilde)?;
        if !self.action_set.contains(x_tilde, lit(SCALING_PRECONDITION_TOL)) {
            return Err(Error::Precondition(format!(
                "safe scaling requires an action inside the action set (norm {})",
                x_tilde.norm()
            )));
        }
        if x_tilde.iter().all(|v| *v == T::zero()) {
            return Ok(T::one());
        }
        let width = self.beta_bar * self.weighted_norm(x_tilde);
        let ax = &self.a_hat * x_tilde;
        let gamma = ax
            .iter()
            .zip(self.b.iter())
            .filter_map(|(v, b)| {
                let c = *v + width;
                (c > T::zero()).then(|| (*b - self.kappa) / c)
            })
            .fold(T::one(), |a, b| a.min(b));
        Ok(gamma)
    }

    /// Euclidean projection onto the pessimistic set, by Dykstra over one
    /// robust halfspace per row and the action set.
    pub fn project_pessimistic(&self, z: &DVector<T>, tol: T) -> Result<DVector<T>> {
        self.check_dim(z)?;
        let rows = self
            .a_hat
            .row_iter()
            .zip(self.b.iter())
            .map(|(a, b)| RobustHalfspace::new(a.transpose(), self.beta_bar, self.v_bar_inv.clone(), *b - self.kappa))
            .collect::<Result<Vec<_>>>()?;
        let mut sets: Vec<&dyn Projector<T>> = rows.iter().map(|r| r as &dyn Projector<T>).collect();
        sets.push(&self.action_set);
        dykstra(z, &sets, tol, MAX_SWEEPS).map(|(x, _)| x)
    }

    /// The `2d` convex pieces `Ỹ(k, ξ)` whose union is the relaxed optimistic set.
    ///
    /// Piece `(k, ξ)` keeps, for every row `i`, the halfspace
    /// `(âᵢ − √d·β̄·ξ·(V̄^{-1/2})ₖ)ᵀx ≤ bᵢ − κ`. Ordered by `k`, then `ξ = +1, −1`.
    pub fn relaxed_pieces(&self) -> Vec<ConvexPiece<T>> {
        let d = self.dim();
        let scale = from_usize::<T>(d).sqrt() * self.beta_bar;
        let mut pieces = Vec::with_capacity(2 * d);
        for k in 0..d {
            let row: DVector<T> = self.v_bar_inv_sqrt.row(k).transpose();
            for xi in [1i8, -1] {
                let sign = if xi > 0 { T::one() } else { -T::one() };
                let halfspaces = self
                    .a_hat
                    .row_iter()
                    .zip(self.b.iter())
                    .map(|(a, b)| Halfspace::new(a.transpose() - &row * (scale * sign), *b - self.kappa))
                    .collect();
                pieces.push(ConvexPiece { halfspaces, action_set: self.action_set.clone(), k, xi });
            }
        }
        pieces
    }
}
