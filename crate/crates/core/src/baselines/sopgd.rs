use nalgebra::DVector;
use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::numerics::{ConfidenceParams, GramState};
use crate::osoco::ProblemConstants;
use crate::safe_sets::{SafeSetSpec, PROJECTION_TOL};
use crate::scalar::{from_usize, lit, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SoPgdPhase {
    Explore,
    Exploit,
}

impl SoPgdPhase {
    /// Numeric label used in result tables.
    pub fn code(self) -> u32 {
        match self {
            SoPgdPhase::Explore => 0,
            SoPgdPhase::Exploit => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoPgdConfig<T: Real> {
    pub horizon: usize,
    /// Exploration length `T₀ = ⌈T^{2/3}⌉`.
    pub explore_rounds: usize,
    /// Gradient step `η = D/(G√T)`.
    pub eta: T,
    pub lambda: T,
    pub delta: T,
    pub problem: ProblemConstants<T>,
}

impl<T: Real> SoPgdConfig<T> {
    pub fn new(problem: ProblemConstants<T>, horizon: usize) -> Result<Self> {
        if horizon < 2 {
            return Err(Error::invalid("horizon must be at least 2"));
        }
        let explore_rounds = ((horizon as f64).powf(2.0 / 3.0) - 1e-9).ceil() as usize;
        let eta = problem.diameter / (problem.g * from_usize::<T>(horizon).sqrt());
        Ok(Self { horizon, explore_rounds: explore_rounds.min(horizon), eta, lambda: T::one(), delta: lit(0.01), problem })
    }

    fn confidence(&self) -> ConfidenceParams<T> {
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

    /// Exploration radius: `b_min/S`, shrunk if needed to stay inside 𝒳 along every axis.
    pub fn explore_scale(&self) -> T {
        let p = &self.problem;
        let mut scale = p.b_min() / p.s_bound;
        for k in 0..p.d {
            for sign in [T::one(), -T::one()] {
                let mut e = DVector::zeros(p.d);
                e[k] = sign;
                if let Some(m) = p.action_set.max_scale(&e) {
                    scale = scale.min(m);
                }
            }
        }
        scale
    }
}

/// Pure exploration for `T₀` rounds, then projected gradient descent on the
/// pessimistic set estimated from the exploration data.
#[derive(Debug, Clone)]
pub struct SoPgd<T: Real> {
    config: SoPgdConfig<T>,
    gram: GramState<T>,
    spec: Option<SafeSetSpec<T>>,
    x: DVector<T>,
    t: usize,
    pending: Option<DVector<T>>,
}

impl<T: Real> SoPgd<T> {
    pub fn new(config: SoPgdConfig<T>) -> Result<Self> {
        config.confidence().validate()?;
        let p = &config.problem;
        let gram = GramState::new(p.d, p.n, config.lambda)?;
        let x = DVector::zeros(p.d);
        Ok(Self { config, gram, spec: None, x, t: 1, pending: None })
    }

    pub fn config(&self) -> &SoPgdConfig<T> {
        &self.config
    }

    pub fn phase(&self) -> SoPgdPhase {
        if self.t <= self.config.explore_rounds {
            SoPgdPhase::Explore
        } else {
            SoPgdPhase::Exploit
        }
    }

    /// Pessimistic set used after exploration.
    pub fn safe_set(&self) -> Option<&SafeSetSpec<T>> {
        self.spec.as_ref()
    }

    pub fn select_action(&mut self, rng: &mut dyn RngCore) -> Result<DVector<T>> {
        if self.t > self.config.horizon {
            return Err(Error::Precondition(format!("horizon {} exhausted", self.config.horizon)));
        }
        let x = match self.phase() {
            SoPgdPhase::Explore => {
                let d = self.config.problem.d;
                let sign = if rng.random::<bool>() { T::one() } else { -T::one() };
                let mut x = DVector::zeros(d);
                x[(self.t - 1) % d] = sign * self.config.explore_scale();
                x
            }
            SoPgdPhase::Exploit => self.x.clone(),
        };
        self.pending = Some(x.clone());
        Ok(x)
    }

    /// Absorbs the feedback of the current round.
    pub fn observe(&mut self, grad_f: &DVector<T>, y: &DVector<T>) -> Result<()> {
        let x = self
            .pending
            .take()
            .ok_or_else(|| Error::Precondition("observe called without a selected action".into()))?;
        match self.phase() {
            SoPgdPhase::Explore => {
                self.gram.rank1_update(&x, y)?;
                if self.t == self.config.explore_rounds {
                    let beta = self.config.confidence().beta(self.gram.round())?;
                    let p = &self.config.problem;
                    self.spec = Some(SafeSetSpec::from_gram(&self.gram, beta, p.b.clone(), T::zero(), p.action_set.clone())?);
                    self.x = DVector::zeros(p.d);
                }
            }
            SoPgdPhase::Exploit => {
                let spec = self.spec.as_ref().ok_or_else(|| Error::invariant("exploitation without a safe set"))?;
                let z = &self.x - grad_f * self.config.eta;
                self.x = spec.project_pessimistic(&z, lit(PROJECTION_TOL))?;
            }
        }
        self.t += 1;
        Ok(())
    }
}
