//! Seeded simulation environments: quadratic cost streams with static
//! noisy or stochastic linear constraints.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inner_oco::QuadraticCost;
use crate::osoco::ProblemConstants;
use crate::safe_sets::ActionSet;

/// Slack allowed when checking declared constants against derived ones.
const DECLARED_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvMode {
    /// `y_t = A x_t + ε_t`.
    Static,
    /// `g_t(x) = A_t x − b_t` with `b_t = b + ε_t`.
    Stochastic,
}

/// Random streams split per trial so that costs, feedback noise and
/// algorithm randomness never share draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Cost = 0,
    Noise = 1,
    Algo = 2,
}

/// Generator for one (seed, trial, purpose) triple.
pub fn stream_rng(seed: u64, trial: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ trial.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(stream as u64);
    rng
}

fn default_action_set() -> ActionSet<f64> {
    ActionSet::ball(1.0)
}

/// Environment description; serialized as JSON with these field names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub d: usize,
    pub n: usize,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub noise_std: f64,
    pub cost_scale: f64,
    pub v_low: f64,
    pub v_high: f64,
    pub mode: EnvMode,
    pub seed: u64,
    #[serde(default = "default_action_set")]
    pub action_set: ActionSet<f64>,
    /// Declared row-norm bound; derived from `A` when absent.
    #[serde(rename = "S_bound", default, skip_serializing_if = "Option::is_none")]
    pub s_bound: Option<f64>,
    /// Declared diameter bound; derived from the action set when absent.
    #[serde(rename = "D", default, skip_serializing_if = "Option::is_none")]
    pub diameter: Option<f64>,
    /// Declared cost Lipschitz bound; derived when absent.
    #[serde(rename = "G", default, skip_serializing_if = "Option::is_none")]
    pub g: Option<f64>,
    /// Std of i.i.d. perturbations of `A` in stochastic mode.
    #[serde(default)]
    pub a_noise_std: f64,
}

impl EnvConfig {
    /// Two-dimensional benchmark: unit ball, `A = [−1 −1]`, `b = 0.8`,
    /// `f_t(x) = 3‖x − v_t‖²` with `v_t ∼ U[−1, 0]²`, noise std 0.01.
    pub fn app_d(mode: EnvMode, seed: u64) -> Self {
        let r2 = std::f64::consts::SQRT_2;
        Self {
            d: 2,
            n: 1,
            a: vec![vec![-1.0, -1.0]],
            b: vec![0.8],
            noise_std: 0.01,
            cost_scale: 3.0,
            v_low: -1.0,
            v_high: 0.0,
            mode,
            seed,
            action_set: ActionSet::ball(1.0),
            s_bound: Some(r2),
            diameter: Some(2.0),
            g: Some(6.0 * r2 + 6.0),
            a_noise_std: 0.0,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)
            .map_err(|e| Error::Parse { path: "<config>".into(), message: e.to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Parse { path: path.to_path_buf(), message: e.to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.d, |i, j| self.a[i][j])
    }

    pub fn b_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.b)
    }

    pub fn b_min(&self) -> f64 {
        self.b.iter().copied().fold(f64::INFINITY, f64::min)
    }

    fn derived_s(&self) -> f64 {
        self.a
            .iter()
            .map(|row| row.iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    fn max_center_norm(&self) -> f64 {
        let m = self.v_low.abs().max(self.v_high.abs());
        m * (self.d as f64).sqrt()
    }

    fn derived_g(&self) -> f64 {
        2.0 * self.cost_scale * (self.action_set.max_norm() + self.max_center_norm())
    }

    pub fn s_bound(&self) -> f64 {
        self.s_bound.unwrap_or_else(|| self.derived_s())
    }

    pub fn diameter(&self) -> f64 {
        self.diameter.unwrap_or_else(|| 2.0 * self.action_set.max_norm())
    }

    pub fn g(&self) -> f64 {
        self.g.unwrap_or_else(|| self.derived_g())
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.n == 0 {
            return Err(Error::invalid("d and n must be positive"));
        }
        if self.a.len() != self.n || self.a.iter().any(|r| r.len() != self.d) {
            return Err(Error::invalid(format!("A must be {}×{}", self.n, self.d)));
        }
        if self.b.len() != self.n {
            return Err(Error::invalid(format!("b must have {} entries", self.n)));
        }
        let finite = self.a.iter().flatten().chain(&self.b).all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("A and b must be finite"));
        }
        if !(self.b_min() > 0.0) {
            return Err(Error::invalid(format!("b_min must be positive, got {}", self.b_min())));
        }
        if !(self.noise_std >= 0.0) || !(self.a_noise_std >= 0.0) {
            return Err(Error::invalid("noise scales must be nonnegative"));
        }
        if !(self.cost_scale > 0.0) {
            return Err(Error::invalid("cost_scale must be positive"));
        }
        if !(self.v_low <= self.v_high) {
            return Err(Error::invalid("v_low must not exceed v_high"));
        }
        self.action_set.validate(self.d)?;
        let s = self.derived_s();
        if s > self.s_bound() * (1.0 + DECLARED_TOL) {
            return Err(Error::invalid(format!("row norm {s} exceeds S_bound {}", self.s_bound())));
        }
        if 2.0 * self.action_set.max_norm() > self.diameter() * (1.0 + DECLARED_TOL) {
            return Err(Error::invalid(format!("D = {} is below the action-set diameter", self.diameter())));
        }
        let g = self.derived_g();
        if g > self.g() * (1.0 + DECLARED_TOL) {
            return Err(Error::invalid(format!("cost centers imply Lipschitz constant {g} above declared G {}", self.g())));
        }
        Ok(())
    }

    /// Constants handed to the algorithms.
    pub fn problem(&self) -> ProblemConstants<f64> {
        ProblemConstants {
            d: self.d,
            n: self.n,
            rho: self.noise_std,
            s_bound: self.s_bound(),
            diameter: self.diameter(),
            g: self.g(),
            b: self.b_vector(),
            action_set: self.action_set.clone(),
        }
    }

    pub fn cost(&self, center: DVector<f64>) -> QuadraticCost<f64> {
        QuadraticCost::new(self.cost_scale, center)
    }
}

/// Uniform draw from `[v_low, v_high]^d`.
pub fn sample_cost_center(config: &EnvConfig, rng: &mut impl Rng) -> DVector<f64> {
    DVector::from_fn(config.d, |_, _| {
        if config.v_low == config.v_high {
            config.v_low
        } else {
            rng.random_range(config.v_low..config.v_high)
        }
    })
}

/// Pre-drawn randomness of one trial; replaying it reproduces feedback exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvTrace {
    pub centers: Vec<DVector<f64>>,
    pub noise: Vec<DVector<f64>>,
    /// Per-round constraint matrices when `A` is perturbed.
    pub a_draws: Option<Vec<DMatrix<f64>>>,
    a: DMatrix<f64>,
    b: DVector<f64>,
    mode: EnvMode,
}

impl EnvTrace {
    pub fn generate(config: &EnvConfig, horizon: usize, trial: u64) -> Result<Self> {
        config.validate()?;
        let mut cost_rng = stream_rng(config.seed, trial, Stream::Cost);
        let mut noise_rng = stream_rng(config.seed, trial, Stream::Noise);
        let centers = (0..horizon).map(|_| sample_cost_center(config, &mut cost_rng)).collect();
        let normal = Normal::new(0.0, config.noise_std).map_err(|e| Error::invalid(e.to_string()))?;
        let noise = (0..horizon)
            .map(|_| DVector::from_fn(config.n, |_, _| normal.sample(&mut noise_rng)))
            .collect();
        let a = config.matrix();
        let a_draws = if config.mode == EnvMode::Stochastic && config.a_noise_std > 0.0 {
            let an = Normal::new(0.0, config.a_noise_std).map_err(|e| Error::invalid(e.to_string()))?;
            Some((0..horizon).map(|_| a.map(|v| v + an.sample(&mut noise_rng))).collect())
        } else {
            None
        };
        Ok(Self { centers, noise, a_draws, a, b: config.b_vector(), mode: config.mode })
    }

    pub fn horizon(&self) -> usize {
        self.centers.len()
    }

    pub fn mode(&self) -> EnvMode {
        self.mode
    }

    pub fn mean_center(&self) -> DVector<f64> {
        let d = self.a.ncols();
        let sum = self.centers.iter().fold(DVector::zeros(d), |acc, v| acc + v);
        sum / self.centers.len().max(1) as f64
    }

    /// `y = A x + ε_t` (round `t` is one based).
    pub fn static_feedback(&self, t: usize, x: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.noise[t - 1]
    }

    /// `g_t(x) = A_t x − (b + ε_t)`.
    pub fn stochastic_feedback(&self, t: usize, x: &DVector<f64>) -> DVector<f64> {
        let a_t = self.a_draws.as_ref().map_or(&self.a, |m| &m[t - 1]);
        a_t * x - &self.b - &self.noise[t - 1]
    }

    /// Feedback in the static interface `y ≈ A x` for either mode; in
    /// stochastic mode the known `b` is added back to `g_t(x)`.
    pub fn feedback(&self, t: usize, x: &DVector<f64>) -> DVector<f64> {
        match self.mode {
            EnvMode::Static => self.static_feedback(t, x),
            EnvMode::Stochastic => self.stochastic_feedback(t, x) + &self.b,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inner_oco::CostFunction;
    use nalgebra::dvector;

    #[test]
    fn app_d_is_valid_and_tight() {
        let c = EnvConfig::app_d(EnvMode::Static, 0);
        c.validate().unwrap();
        assert!((c.derived_g() - c.g()).abs() < 1e-12);
        assert!((c.derived_s() - c.s_bound()).abs() < 1e-15);
        assert_eq!(c.b_min(), 0.8);
    }

    #[test]
    fn validation_rejects_bad_constants() {
        let mut c = EnvConfig::app_d(EnvMode::Static, 0);
        c.s_bound = Some(1.0);
        assert!(c.validate().is_err());
        let mut c = EnvConfig::app_d(EnvMode::Static, 0);
        c.b = vec![0.0];
        assert!(c.validate().is_err());
        let mut c = EnvConfig::app_d(EnvMode::Static, 0);
        c.v_low = -2.0;
        assert!(c.validate().is_err());
        let mut c = EnvConfig::app_d(EnvMode::Static, 0);
        c.diameter = Some(1.5);
        assert!(c.validate().is_err());
    }

    #[test]
    fn json_round_trip_uses_spec_names() {
        let c = EnvConfig::app_d(EnvMode::Stochastic, 7);
        let text = serde_json::to_string(&c).unwrap();
        for key in ["\"A\"", "\"S_bound\"", "\"D\"", "\"G\"", "\"noise_std\"", "\"mode\":\"stochastic\""] {
            assert!(text.contains(key), "{key} missing from {text}");
        }
        assert_eq!(EnvConfig::from_json(&text).unwrap(), c);
        assert!(matches!(EnvConfig::from_json("{\"d\": 2}"), Err(Error::Parse { .. })));
    }

    #[test]
    fn degenerate_center_box() {
        let mut c = EnvConfig::app_d(EnvMode::Static, 0);
        c.v_low = 0.0;
        c.v_high = 0.0;
        let trace = EnvTrace::generate(&c, 50, 0).unwrap();
        assert!(trace.centers.iter().all(|v| v.iter().all(|x| *x == 0.0)));
    }

    #[test]
    fn centers_are_uniform_on_box() {
        let c = EnvConfig::app_d(EnvMode::Static, 3);
        let trace = EnvTrace::generate(&c, 10_000, 0).unwrap();
        let mut bins = [0usize; 10];
        for v in &trace.centers {
            for x in v.iter() {
                assert!((-1.0..=0.0).contains(x));
                bins[(((x + 1.0) * 10.0) as usize).min(9)] += 1;
            }
        }
        let expected = 20_000.0 / 10.0;
        let chi2: f64 = bins.iter().map(|o| (*o as f64 - expected).powi(2) / expected).sum();
        // 99.9% quantile of χ² with 9 degrees of freedom.
        assert!(chi2 < 27.877, "χ² = {chi2}");
    }

    #[test]
    fn seeds_are_deterministic_and_streams_independent() {
        let c = EnvConfig::app_d(EnvMode::Static, 42);
        assert_eq!(EnvTrace::generate(&c, 100, 1).unwrap(), EnvTrace::generate(&c, 100, 1).unwrap());
        assert_ne!(EnvTrace::generate(&c, 100, 1).unwrap(), EnvTrace::generate(&c, 100, 2).unwrap());
        let mut other = c.clone();
        other.noise_std = 0.5;
        assert_eq!(
            EnvTrace::generate(&c, 100, 1).unwrap().centers,
            EnvTrace::generate(&other, 100, 1).unwrap().centers
        );
    }

    #[test]
    fn cost_examples() {
        let c = EnvConfig::app_d(EnvMode::Static, 0);
        let f = c.cost(dvector![-1.0, -1.0]);
        assert_eq!(f.value(&dvector![0.0, 0.0]), 6.0);
        assert_eq!(f.gradient(&dvector![0.0, 0.0]), dvector![6.0, 6.0]);
        assert_eq!(f.value(&dvector![-1.0, -1.0]), 0.0);
        let mut rng = stream_rng(1, 0, Stream::Algo);
        for _ in 0..100 {
            let v = sample_cost_center(&c, &mut rng);
            let f = c.cost(v);
            let x = dvector![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let g = f.gradient(&x);
            for i in 0..2 {
                let mut e = DVector::zeros(2);
                e[i] = 1e-6;
                let fd = (f.value(&(&x + &e)) - f.value(&(&x - &e))) / 2e-6;
                assert!((fd - g[i]).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn feedback_examples() {
        let mut c = EnvConfig::app_d(EnvMode::Static, 0);
        c.noise_std = 0.0;
        let trace = EnvTrace::generate(&c, 3, 0).unwrap();
        assert_eq!(trace.static_feedback(1, &dvector![0.5, 0.5]), dvector![-1.0]);
        c.mode = EnvMode::Stochastic;
        let trace = EnvTrace::generate(&c, 3, 0).unwrap();
        assert_eq!(trace.stochastic_feedback(1, &dvector![0.0, 0.0]), dvector![-0.8]);
        assert!((trace.stochastic_feedback(2, &dvector![0.5, 0.5])[0] + 1.8).abs() < 1e-15);
    }

    #[test]
    fn noise_means_match() {
        let c = EnvConfig::app_d(EnvMode::Stochastic, 5);
        let trace = EnvTrace::generate(&c, 100_000, 0).unwrap();
        let bound = 3.0 * 0.01 / (1e5f64).sqrt();
        let y_mean: f64 = (1..=100_000).map(|t| trace.static_feedback(t, &dvector![0.0, 0.0])[0]).sum::<f64>() / 1e5;
        assert!(y_mean.abs() < bound);
        let x = dvector![0.3, -0.2];
        let g_mean: f64 = (1..=100_000).map(|t| trace.stochastic_feedback(t, &x)[0]).sum::<f64>() / 1e5;
        assert!((g_mean - (-0.1 - 0.8)).abs() < bound);
    }
}
