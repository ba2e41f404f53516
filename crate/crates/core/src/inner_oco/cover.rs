use std::collections::HashSet;

use nalgebra::DVector;
use rand::RngCore;

use super::{epoch_of, hedge_update, sample_index, CostFunction, InnerAlgorithm, StepConstants};
use crate::error::{Error, Result};
use crate::safe_sets::{ActionSet, Projector, SafeSetSpec};
use crate::scalar::{from_usize, lit, to_f64, Real};

/// Largest net the builder will materialize.
pub const MAX_NET_POINTS: usize = 10_000_000;

/// Which points of the action set a cover keeps.
#[derive(Debug, Clone)]
pub enum NetFilter<T: Real> {
    /// The whole action set.
    All,
    /// Points in the unrelaxed optimistic set of the spec.
    Optimistic(SafeSetSpec<T>),
    /// Points in the relaxed optimistic set (the union of pieces).
    Relaxed(SafeSetSpec<T>),
}

impl<T: Real> NetFilter<T> {
    fn keeps(&self, x: &DVector<T>) -> Result<bool> {
        match self {
            NetFilter::All => Ok(true),
            NetFilter::Optimistic(spec) => spec.optimistic_contains(x),
            NetFilter::Relaxed(spec) => spec.relaxed_contains(x),
        }
    }
}

/// Grid cover of `action_set` with covering radius `delta`.
///
/// The grid uses spacing `2Δ/√d` at integer multiples (so the origin is a
/// node) plus the box endpoints, which puts every box point within `Δ` of a
/// node. Nodes outside the set are projected onto it; projection is
/// nonexpansive so the cover property survives.
pub fn build_epsilon_net<T: Real>(action_set: &ActionSet<T>, d: usize, delta: T) -> Result<Vec<DVector<T>>> {
    if !(delta > T::zero()) || d == 0 {
        return Err(Error::invalid(format!("covering radius must be positive, got {delta}")));
    }
    if delta >= action_set.max_norm() {
        return Ok(vec![DVector::zeros(d)]);
    }
    let h = lit::<T>(2.0) * delta / from_usize::<T>(d).sqrt();
    let (lower, upper) = action_set.bounding_box(d);
    let mut axes: Vec<Vec<T>> = Vec::with_capacity(d);
    let mut total = 1usize;
    for (lo, hi) in lower.iter().zip(&upper) {
        let k_lo = to_f64((*lo / h).ceil()) as i64;
        let k_hi = to_f64((*hi / h).floor()) as i64;
        let count = (k_hi - k_lo + 1).max(0) as usize + 2;
        total = total.saturating_mul(count);
        if total > MAX_NET_POINTS {
            return Err(Error::Resource(format!(
                "covering net for radius {delta} in dimension {d} exceeds {MAX_NET_POINTS} points"
            )));
        }
        let mut axis: Vec<T> = Vec::with_capacity(count);
        axis.push(*lo);
        axis.extend((k_lo..=k_hi).map(|k| h * lit::<T>(k as f64)));
        axis.push(*hi);
        axis.dedup_by(|a, b| *a == *b);
        axes.push(axis);
    }
    let mut seen: HashSet<Vec<u64>> = HashSet::new();
    let mut net = Vec::new();
    let mut idx = vec![0usize; d];
    loop {
        let node = DVector::from_iterator(d, idx.iter().zip(&axes).map(|(i, a)| a[*i]));
        let p = action_set.project(&node);
        let key: Vec<u64> = p.iter().map(|v| to_f64(*v).to_bits()).collect();
        if seen.insert(key) {
            net.push(p);
        }
        let mut k = 0;
        loop {
            if k == d {
                return Ok(net);
            }
            idx[k] += 1;
            if idx[k] < axes[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// Hedge over a finite cover, restarted on a doubling schedule.
///
/// Epoch `j` covers phase-local rounds `[2^j, 2^{j+1})`, uses radius
/// `Δ_j = 1/(G√τ_j)` and rate `η_j = √(2 ln M_j/τ_j)/(G·D)`, and starts
/// from uniform weights over a freshly built net.
#[derive(Debug, Clone)]
pub struct CoverHedge<T: Real> {
    action_set: ActionSet<T>,
    filter: NetFilter<T>,
    dim: usize,
    constants: StepConstants<T>,
    t: u64,
    epoch: Option<u32>,
    net: Vec<DVector<T>>,
    weights: Vec<T>,
}

impl<T: Real> CoverHedge<T> {
    pub fn new(action_set: ActionSet<T>, dim: usize, filter: NetFilter<T>, constants: StepConstants<T>) -> Result<Self> {
        action_set.validate(dim)?;
        if !(constants.g > T::zero() && constants.d > T::zero()) {
            return Err(Error::invalid("G and D must be positive"));
        }
        let mut s = Self {
            action_set,
            filter,
            dim,
            constants,
            t: 1,
            epoch: None,
            net: Vec::new(),
            weights: Vec::new(),
        };
        s.start_epoch_if_needed()?;
        Ok(s)
    }

    pub fn net(&self) -> &[DVector<T>] {
        &self.net
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn epoch(&self) -> u32 {
        self.epoch.unwrap_or(0)
    }

    fn tau(&self) -> T {
        lit(super::doubling_schedule(self.epoch()) as f64)
    }

    fn start_epoch_if_needed(&mut self) -> Result<()> {
        let j = epoch_of(self.t);
        if self.epoch == Some(j) {
            return Ok(());
        }
        self.epoch = Some(j);
        let delta = T::one() / (self.constants.g * self.tau().sqrt());
        let mut net = Vec::new();
        for p in build_epsilon_net(&self.action_set, self.dim, delta)? {
            if self.filter.keeps(&p)? {
                net.push(p);
            }
        }
        if net.is_empty() {
            net.push(DVector::zeros(self.dim));
        }
        let m = net.len();
        self.weights = vec![T::one() / from_usize::<T>(m); m];
        self.net = net;
        Ok(())
    }

    fn rate(&self) -> T {
        let m = from_usize::<T>(self.net.len());
        (lit::<T>(2.0) * m.ln() / self.tau()).sqrt() / (self.constants.g * self.constants.d)
    }
}

impl<T: Real> InnerAlgorithm<T> for CoverHedge<T> {
    fn propose(&mut self, rng: &mut dyn RngCore) -> Result<DVector<T>> {
        let m = if self.net.len() == 1 { 0 } else { sample_index(&self.weights, rng) };
        Ok(self.net[m].clone())
    }

    fn update(&mut self, cost: &dyn CostFunction<T>) -> Result<()> {
        let losses: Vec<T> = self.net.iter().map(|x| cost.value(x)).collect();
        self.weights = hedge_update(&self.weights, &losses, self.rate())?;
        self.t += 1;
        self.start_epoch_if_needed()
    }
}
