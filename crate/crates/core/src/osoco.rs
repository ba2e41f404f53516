//! The OSOCO meta-algorithm: phased constraint estimation, an optimistic
//! inner learner, and safe scaling into the pessimistic set.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inner_oco::{CostFunction, CoverHedge, Ftpl, HedgeDescent, InnerAlgorithm, NetFilter, StepConstants};
use crate::numerics::{confidence_contains, elliptic_potential_bound, ConfidenceParams, GramState};
use crate::safe_sets::{ActionSet, Projector, SafeSetSpec, MEMBERSHIP_TOL};
use crate::scalar::{from_usize, lit, to_f64, tol, Real};

/// Slack for the per-round membership and scaling audits.
pub const AUDIT_TOL: f64 = 1e-9;

/// High-probability (`H`) or expectation (`E`) parameterization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    H,
    E,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerKind {
    #[default]
    HedgeDescent,
    CoverHedge,
    Ftpl,
}

/// Constants describing a constrained problem instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemConstants<T: Real> {
    pub d: usize,
    pub n: usize,
    pub rho: T,
    pub s_bound: T,
    pub diameter: T,
    pub g: T,
    pub b: DVector<T>,
    pub action_set: ActionSet<T>,
}

impl<T: Real> ProblemConstants<T> {
    pub fn b_min(&self) -> T {
        self.b.iter().copied().fold(T::max_value().unwrap_or(lit(f64::MAX)), |a, b| a.min(b))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OsocoConfig<T: Real> {
    pub mode: Mode,
    pub horizon: usize,
    pub delta: T,
    pub kappa: T,
    pub lambda: T,
    pub problem: ProblemConstants<T>,
    pub inner: InnerKind,
    /// Use the piecewise relaxation of the optimistic set.
    pub relaxed: bool,
}

impl<T: Real> OsocoConfig<T> {
    /// Default high-probability failure level.
    pub const DEFAULT_DELTA_H: f64 = 0.01;

    /// Parameters for `mode`: in `H`, `κ = 0` and `δ = 0.01`; in `E`,
    /// `δ = min(1/2, b_min/(2SDT))` and `κ = b_min/T`. Both use
    /// `λ = max(1, D²)` and HedgeDescent on the relaxed family.
    pub fn configure(mode: Mode, problem: ProblemConstants<T>, horizon: usize) -> Result<Self> {
        if horizon < 3 {
            return Err(Error::invalid(format!("horizon must be at least 3, got {horizon}")));
        }
        let b_min = problem.b_min();
        if !(b_min > T::zero()) {
            return Err(Error::invalid(format!("b_min must be positive, got {b_min}")));
        }
        let t = from_usize::<T>(horizon);
        let (delta, kappa) = match mode {
            Mode::H => (lit(Self::DEFAULT_DELTA_H), T::zero()),
            Mode::E => {
                let raw = b_min / (lit::<T>(2.0) * problem.s_bound * problem.diameter * t);
                (raw.min(lit(0.5)), b_min / t)
            }
        };
        let lambda = T::one().max(problem.diameter * problem.diameter);
        let config = Self { mode, horizon, delta, kappa, lambda, problem, inner: InnerKind::HedgeDescent, relaxed: true };
        config.validate()?;
        Ok(config)
    }

    pub fn with_inner(mut self, inner: InnerKind, relaxed: bool) -> Result<Self> {
        self.inner = inner;
        self.relaxed = relaxed;
        self.validate()?;
        Ok(self)
    }

    /// Overrides `δ` in high-probability mode.
    pub fn with_delta(mut self, delta: T) -> Result<Self> {
        if self.mode != Mode::H {
            return Err(Error::invalid("δ is derived from the horizon in expectation mode"));
        }
        self.delta = delta;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.problem;
        if p.b.len() != p.n {
            return Err(Error::invalid("b must have n entries"));
        }
        p.action_set.validate(p.d)?;
        if !(p.g > T::zero()) {
            return Err(Error::invalid("G must be positive"));
        }
        if self.mode == Mode::H && self.kappa != T::zero() {
            return Err(Error::invalid("high-probability mode requires κ = 0"));
        }
        if self.mode == Mode::H && !(self.delta < lit(0.5)) {
            return Err(Error::invalid("high-probability mode requires δ < 1/2"));
        }
        if !(self.kappa < p.b_min()) {
            return Err(Error::invalid("κ must be below b_min"));
        }
        if matches!(self.inner, InnerKind::HedgeDescent | InnerKind::Ftpl) && !self.relaxed {
            return Err(Error::invalid("HedgeDescent and FTPL need the relaxed optimistic family"));
        }
        self.confidence().validate()
    }

    pub fn confidence(&self) -> ConfidenceParams<T> {
        let p = &self.problem;
        ConfidenceParams {
            rho: p.rho,
            d: p.d,
            n: p.n,
            delta: self.delta,
            s_bound: p.s_bound,
            diameter: p.diameter,
            lambda: self.lambda,
        }
    }

    fn step_constants(&self) -> StepConstants<T> {
        StepConstants { g: self.problem.g, d: self.problem.diameter }
    }
}

/// Frozen estimate and learner of one phase.
pub struct PhaseRecord<T: Real> {
    pub index: usize,
    pub start: usize,
    pub spec: SafeSetSpec<T>,
    pub v_bar: DMatrix<T>,
    pub logdet_start: T,
    inner: Box<dyn InnerAlgorithm<T>>,
}

impl<T: Real> fmt::Debug for PhaseRecord<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PhaseRecord")
            .field("index", &self.index)
            .field("start", &self.start)
            .field("spec", &self.spec)
            .field("logdet_start", &self.logdet_start)
            .finish_non_exhaustive()
    }
}

/// Freezes the estimate at round `t` and starts a fresh inner learner on its optimistic set.
pub fn begin_phase<T: Real>(gram: &GramState<T>, config: &OsocoConfig<T>, index: usize, t: usize) -> Result<PhaseRecord<T>> {
    let beta = config.confidence().beta(gram.round())?;
    let p = &config.problem;
    let spec = SafeSetSpec::from_gram(gram, beta, p.b.clone(), config.kappa, p.action_set.clone())?;
    let inner: Box<dyn InnerAlgorithm<T>> = match config.inner {
        InnerKind::HedgeDescent => Box::new(HedgeDescent::new(spec.relaxed_pieces(), p.d, config.step_constants())?),
        InnerKind::Ftpl => Box::new(Ftpl::new(spec.relaxed_pieces(), p.d, config.step_constants())?),
        InnerKind::CoverHedge => {
            let filter = if config.relaxed { NetFilter::Relaxed(spec.clone()) } else { NetFilter::Optimistic(spec.clone()) };
            Box::new(CoverHedge::new(p.action_set.clone(), p.d, filter, config.step_constants())?)
        }
    };
    Ok(PhaseRecord { index, start: t, spec, v_bar: gram.gram().clone(), logdet_start: gram.logdet(), inner })
}

/// Outcome of one action selection.
#[derive(Debug, Clone, PartialEq)]
pub struct Step<T: Real> {
    pub x: DVector<T>,
    pub x_tilde: DVector<T>,
    pub gamma: T,
    pub phase: usize,
}

/// Running OSOCO instance for one trial.
#[derive(Debug)]
pub struct Osoco<T: Real> {
    config: OsocoConfig<T>,
    gram: GramState<T>,
    phase: PhaseRecord<T>,
    t: usize,
    pending: Option<Step<T>>,
    potential: T,
    max_action_norm: T,
}

impl<T: Real> Osoco<T> {
    pub fn new(config: OsocoConfig<T>) -> Result<Self> {
        config.validate()?;
        let gram = GramState::new(config.problem.d, config.problem.n, config.lambda)?;
        let phase = begin_phase(&gram, &config, 1, 1)?;
        Ok(Self { config, gram, phase, t: 1, pending: None, potential: T::zero(), max_action_norm: T::zero() })
    }

    pub fn config(&self) -> &OsocoConfig<T> {
        &self.config
    }

    pub fn gram(&self) -> &GramState<T> {
        &self.gram
    }

    pub fn phase(&self) -> &PhaseRecord<T> {
        &self.phase
    }

    /// Number of phases started so far.
    pub fn phase_count(&self) -> usize {
        self.phase.index
    }

    /// Round of the next action.
    pub fn round(&self) -> usize {
        self.t
    }

    /// `Σ ‖x_t‖²_{V_t⁻¹}` over the rounds observed so far.
    pub fn elliptic_potential(&self) -> T {
        self.potential
    }

    /// Receives `x̃_t` from the inner learner, scales it into the pessimistic
    /// set, and checks the per-round guarantees.
    pub fn select_action(&mut self, rng: &mut dyn RngCore) -> Result<Step<T>> {
        if self.pending.is_some() {
            return Err(Error::Precondition("select_action called twice without observe".into()));
        }
        if self.t > self.config.horizon {
            return Err(Error::Precondition(format!("horizon {} exhausted", self.config.horizon)));
        }
        let proposal = self.phase.inner.propose(rng)?;
        // Absorb projection round-off so safe scaling sees a member of 𝒳.
        let x_tilde = self.config.problem.action_set.project(&proposal);
        let spec = &self.phase.spec;
        let gamma = spec.safe_scaling(&x_tilde)?;
        let x = &x_tilde * gamma;
        audit_pessimistic(spec, &x)?;
        audit_gamma(spec, &x_tilde, &x, gamma, self.config.relaxed)?;
        let step = Step { x, x_tilde, gamma, phase: self.phase.index };
        self.pending = Some(step.clone());
        Ok(step)
    }

    /// Feeds the round's cost and constraint feedback; returns whether the
    /// current phase continues. A new phase begins immediately when it does not.
    pub fn observe(&mut self, cost: &dyn CostFunction<T>, y: &DVector<T>) -> Result<bool> {
        let step = self
            .pending
            .take()
            .ok_or_else(|| Error::Precondition("observe called without a selected action".into()))?;
        self.phase.inner.update(cost)?;
        self.potential += self.gram.inv_norm_sq(&step.x)?;
        self.max_action_norm = self.max_action_norm.max(step.x.norm());
        self.gram.rank1_update(&step.x, y)?;
        let doubled = self.gram.logdet() > self.phase.logdet_start + lit::<T>(2f64.ln() + 1e-12);
        let go_on = !doubled && self.t < self.config.horizon;
        self.t += 1;
        if !go_on && self.t <= self.config.horizon {
            self.phase = begin_phase(&self.gram, &self.config, self.phase.index + 1, self.t)?;
        }
        Ok(go_on)
    }

    /// Whether the current phase's confidence set contains `a_true`.
    pub fn phase_covers(&self, a_true: &DMatrix<T>) -> Result<bool> {
        confidence_contains(&self.phase.v_bar, &self.phase.spec.a_hat, self.phase.spec.beta_bar, a_true)
    }

    /// End-of-run checks: phase count `N ≤ 4d·ln T` and the elliptic potential bound.
    pub fn audit_run(&self) -> Result<()> {
        let d = self.config.problem.d;
        let horizon = self.config.horizon;
        let n_max = 4.0 * d as f64 * (horizon as f64).ln();
        if self.phase_count() as f64 > n_max + AUDIT_TOL {
            return Err(Error::invariant(format!("{} phases exceed 4d·ln T = {n_max}", self.phase_count())));
        }
        let rounds = self.gram.round() - 1;
        let bound = elliptic_potential_bound(d, rounds, to_f64(self.config.lambda), to_f64(self.max_action_norm));
        let potential = to_f64(self.potential);
        if potential > bound * (1.0 + AUDIT_TOL) + AUDIT_TOL {
            return Err(Error::invariant(format!("elliptic potential {potential} exceeds {bound}")));
        }
        Ok(())
    }
}

fn audit_pessimistic<T: Real>(spec: &SafeSetSpec<T>, x: &DVector<T>) -> Result<()> {
    let slack = spec.pessimistic_slack(x)?;
    let scale = T::one().max(spec.b.amax());
    if slack > tol::<T>(AUDIT_TOL, 64.0) * scale || !spec.action_set.contains(x, tol(MEMBERSHIP_TOL, 64.0)) {
        return Err(Error::invariant(format!("played action leaves the pessimistic set (slack {slack})")));
    }
    Ok(())
}

/// `γ ≥ 1 − 2w(x_t)/(b_min − κ)` whenever `x̃` is optimistic, where `w` is
/// the uncertainty width matching the optimistic family in use.
fn audit_gamma<T: Real>(spec: &SafeSetSpec<T>, x_tilde: &DVector<T>, x: &DVector<T>, gamma: T, relaxed: bool) -> Result<()> {
    let width = |v: &DVector<T>| {
        if relaxed {
            spec.relaxed_width(v)
        } else {
            spec.beta_bar * spec.weighted_norm(v)
        }
    };
    let ax = &spec.a_hat * x_tilde;
    let w_tilde = width(x_tilde);
    let excess = ax
        .iter()
        .zip(spec.b.iter())
        .map(|(v, b)| *v - w_tilde - (*b - spec.kappa))
        .fold(-T::max_value().unwrap_or(lit(f64::MAX)), |a, b| a.max(b));
    if excess > tol(1e-8, 64.0) {
        return Ok(());
    }
    let margin = spec.b_min() - spec.kappa;
    let bound = T::one() - lit::<T>(2.0) * width(x) / margin;
    if gamma < bound - tol::<T>(1e-7, 64.0) {
        return Err(Error::invariant(format!("safe scaling {gamma} below its lower bound {bound}")));
    }
    Ok(())
}

/// Closed-form high-probability regret bound for the relaxed HedgeDescent
/// variant, with `C_𝒜 = DG√(ln 2d) + 3DG`. The larger of the two closed
/// forms is returned.
pub fn regret_bound(problem: &ProblemConstants<f64>, horizon: usize, delta: f64, beta_t: f64) -> f64 {
    let d = problem.d as f64;
    let t = horizon as f64;
    let dg = problem.diameter * problem.g;
    let b_min = problem.b_min();
    let c_a = dg * (2.0 * d).ln().sqrt() + 3.0 * dg;
    let tail = 2.0 * dg * (2.0 * t * (1.0 / delta).ln()).sqrt();
    let general = 4.0 * dg / b_min * beta_t * (3.0 * d * t * t.ln()).sqrt() + c_a * (4.0 * d * t * t.ln()).sqrt() + tail;
    let relaxed = 8.0 * dg / b_min * beta_t * d * (2.0 * t * t.ln()).sqrt() + c_a * (4.0 * d * t * t.ln()).sqrt() + tail;
    general.max(relaxed)
}
