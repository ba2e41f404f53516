//! Experiment plumbing: optimum oracle, trial runner, aggregation and
//! result files.

mod aggregate;
mod experiment;
mod io;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::baselines::{dpp_round, DppState, SoPgd, SoPgdConfig, SoPgdPhase};
use crate::environments::{stream_rng, EnvConfig, EnvTrace, Stream};
use crate::error::{Error, Result};
use crate::inner_oco::CostFunction;
use crate::osoco::{InnerKind, Mode, Osoco, OsocoConfig};
use crate::safe_sets::{ActionSet, ConvexPiece, Halfspace};

pub use aggregate::{aggregate, AggregateRow, METRICS};
pub use experiment::{
    figure_data, run_audit, run_trials, sweep, thread_pool, write_run, RunOutput, CHECKPOINT_LADDER, THREADS_ENV,
};
pub use io::{
    parse_aggregate_csv, parse_rounds_csv, read_trials_json, rounds_to_rows, write_aggregate_csv, write_rounds_csv,
    write_trials_json, RoundRow, AGGREGATE_HEADER, ROUNDS_HEADER,
};

/// Tolerance of the optimum projection.
pub const OPTIMUM_TOL: f64 = 1e-10;

/// Algorithms the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Algo {
    #[serde(rename = "osoco-h")]
    OsocoH,
    #[serde(rename = "osoco-e")]
    OsocoE,
    #[serde(rename = "dpp")]
    Dpp,
    #[serde(rename = "dpp-cons")]
    DppCons,
    #[serde(rename = "sopgd")]
    SoPgd,
}

impl Algo {
    pub const ALL: [Algo; 5] = [Algo::OsocoH, Algo::OsocoE, Algo::Dpp, Algo::DppCons, Algo::SoPgd];

    pub fn name(self) -> &'static str {
        match self {
            Algo::OsocoH => "osoco-h",
            Algo::OsocoE => "osoco-e",
            Algo::Dpp => "dpp",
            Algo::DppCons => "dpp-cons",
            Algo::SoPgd => "sopgd",
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algo::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown algorithm {s:?} (expected one of osoco-h, osoco-e, dpp, dpp-cons, sopgd)")))
    }
}

/// Everything recorded about one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub t: usize,
    pub x: Vec<f64>,
    pub cost: f64,
    /// Cumulative regret through this round.
    pub regret: f64,
    /// `A x_t − b`.
    pub static_viol: Vec<f64>,
    /// Feedback-side violation `g_t(x_t)` (in static mode, `y_t − b`).
    pub stoch_viol: Vec<f64>,
    pub cum_static_viol: f64,
    pub cum_static_viol_pos: f64,
    pub cum_stoch_viol: f64,
    pub cum_stoch_viol_pos: f64,
    pub gamma: f64,
    pub phase: usize,
}

impl RoundRecord {
    pub fn static_viol_max(&self) -> f64 {
        self.static_viol.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub algo: Algo,
    pub trial: u64,
    pub seed: u64,
    pub horizon: usize,
    pub x_star: Vec<f64>,
    pub rounds: Vec<RoundRecord>,
    /// For OSOCO: whether every phase's confidence set held the true `A`.
    pub coverage: Option<bool>,
    /// For OSOCO: number of phases.
    pub phases: Option<usize>,
}

impl TrialResult {
    pub fn run_id(&self) -> String {
        format!("{}_T{}_s{}", self.algo, self.horizon, self.seed)
    }

    pub fn final_regret(&self) -> f64 {
        self.rounds.last().map_or(0.0, |r| r.regret)
    }

    pub fn max_static_viol(&self) -> f64 {
        self.rounds.iter().map(RoundRecord::static_viol_max).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Best fixed action in hindsight for quadratic costs sharing one scale:
/// the projection of the mean center onto `{x ∈ 𝒳 : Ax ≤ b}`.
pub fn compute_optimum(
    mean_center: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    action_set: &ActionSet<f64>,
) -> Result<DVector<f64>> {
    let halfspaces = a
        .row_iter()
        .zip(b.iter())
        .map(|(row, bi)| Halfspace::new(row.transpose(), *bi))
        .collect();
    ConvexPiece::new(halfspaces, action_set.clone()).project(mean_center, OPTIMUM_TOL)
}

enum Runner {
    Osoco(Box<Osoco<f64>>),
    Dpp(DppState<f64>),
    SoPgd(Box<SoPgd<f64>>),
}

/// Runs one algorithm against one trial of the environment.
///
/// OSOCO trials check the per-round pessimistic membership and safe-scaling
/// bound, and at the end the phase count and elliptic potential bounds;
/// any failure aborts the trial with an invariant error.
pub fn run_trial(env: &EnvConfig, algo: Algo, horizon: usize, trial: u64) -> Result<TrialResult> {
    run_trial_with(env, algo, horizon, trial, InnerKind::HedgeDescent)
}

/// As [`run_trial`], with an explicit inner learner for OSOCO.
pub fn run_trial_with(env: &EnvConfig, algo: Algo, horizon: usize, trial: u64, inner: InnerKind) -> Result<TrialResult> {
    env.validate()?;
    let trace = EnvTrace::generate(env, horizon, trial)?;
    let a = env.matrix();
    let b = env.b_vector();
    let x_star = compute_optimum(&trace.mean_center(), &a, &b, &env.action_set)?;
    let mut rng = stream_rng(env.seed, trial, Stream::Algo);
    let problem = env.problem();
    let mut runner = match algo {
        Algo::OsocoH | Algo::OsocoE => {
            let mode = if algo == Algo::OsocoH { Mode::H } else { Mode::E };
            let relaxed = inner != InnerKind::CoverHedge;
            let config = OsocoConfig::configure(mode, problem, horizon)?.with_inner(inner, relaxed)?;
            Runner::Osoco(Box::new(Osoco::new(config)?))
        }
        Algo::Dpp => Runner::Dpp(DppState::nominal(env.d, env.n, horizon)?),
        Algo::DppCons => Runner::Dpp(DppState::conservative(env.d, env.n, horizon)?),
        Algo::SoPgd => Runner::SoPgd(Box::new(SoPgd::new(SoPgdConfig::new(problem, horizon)?)?)),
    };
    let mut coverage = match &runner {
        Runner::Osoco(o) => Some(o.phase_covers(&a)?),
        _ => None,
    };

    let mut rounds = Vec::with_capacity(horizon);
    let (mut cum_cost, mut cum_opt) = (0.0, 0.0);
    let (mut cs, mut csp, mut cg, mut cgp) = (0.0, 0.0, 0.0, 0.0);
    for t in 1..=horizon {
        let cost = env.cost(trace.centers[t - 1].clone());
        let (x, gamma, phase) = match &mut runner {
            Runner::Osoco(o) => {
                let step = o.select_action(&mut rng)?;
                (step.x, step.gamma, step.phase)
            }
            Runner::Dpp(s) => (s.x.clone(), 1.0, 0),
            Runner::SoPgd(s) => {
                let phase = s.phase();
                (s.select_action(&mut rng)?, 1.0, phase.code() as usize)
            }
        };
        let y = trace.feedback(t, &x);
        let static_viol = &a * &x - &b;
        let stoch_viol = &y - &b;
        match &mut runner {
            Runner::Osoco(o) => {
                let before = o.phase_count();
                o.observe(&cost, &y)?;
                if o.phase_count() != before {
                    coverage = Some(coverage.unwrap_or(true) && o.phase_covers(&a)?);
                }
            }
            Runner::Dpp(s) => {
                dpp_round(s, &cost.gradient(&x), &stoch_viol, &a, &env.action_set)?;
            }
            Runner::SoPgd(s) => {
                if s.phase() == SoPgdPhase::Explore && static_viol.max() > 1e-12 {
                    return Err(Error::invariant(format!("exploration action violates the constraint at round {t}")));
                }
                s.observe(&cost.gradient(&x), &y)?;
            }
        }
        let f = cost.value(&x);
        cum_cost += f;
        cum_opt += cost.value(&x_star);
        cs += static_viol.sum();
        csp += static_viol.iter().map(|v| v.max(0.0)).sum::<f64>();
        cg += stoch_viol.sum();
        cgp += stoch_viol.iter().map(|v| v.max(0.0)).sum::<f64>();
        rounds.push(RoundRecord {
            t,
            x: x.iter().copied().collect(),
            cost: f,
            regret: cum_cost - cum_opt,
            static_viol: static_viol.iter().copied().collect(),
            stoch_viol: stoch_viol.iter().copied().collect(),
            cum_static_viol: cs,
            cum_static_viol_pos: csp,
            cum_stoch_viol: cg,
            cum_stoch_viol_pos: cgp,
            gamma,
            phase,
        });
    }
    let phases = match &runner {
        Runner::Osoco(o) => {
            o.audit_run()?;
            Some(o.phase_count())
        }
        _ => None,
    };
    Ok(TrialResult {
        algo,
        trial,
        seed: env.seed,
        horizon,
        x_star: x_star.iter().copied().collect(),
        rounds,
        coverage,
        phases,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::EnvMode;
    use nalgebra::{dmatrix, dvector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn optimum_examples() {
        let a = dmatrix![-1.0, -1.0];
        let b = dvector![0.8];
        let ball = ActionSet::ball(1.0);
        let x = compute_optimum(&dvector![-0.6, -0.6], &a, &b, &ball).unwrap();
        assert!((x - dvector![-0.4, -0.4]).norm() < 1e-12);
        let inside = dvector![-0.1, -0.3];
        assert_eq!(compute_optimum(&inside, &a, &b, &ball).unwrap(), inside);
        assert_eq!(compute_optimum(&dvector![0.0, 0.0], &a, &b, &ball).unwrap(), dvector![0.0, 0.0]);
    }

    #[test]
    fn optimum_matches_grid_search() {
        let a = dmatrix![-1.0, -1.0];
        let b = dvector![0.8];
        let z = dvector![-0.6, -0.6];
        let x = compute_optimum(&z, &a, &b, &ActionSet::ball(1.0)).unwrap();
        let mut best = (f64::INFINITY, dvector![0.0, 0.0]);
        for i in -1000..=1000 {
            for j in -1000..=1000 {
                let y = dvector![i as f64 * 1e-3, j as f64 * 1e-3];
                if y.norm() <= 1.0 && -y[0] - y[1] <= 0.8 + 1e-12 {
                    let dist = (&y - &z).norm();
                    if dist < best.0 {
                        best = (dist, y);
                    }
                }
            }
        }
        assert!((best.1 - x).norm() <= 1.5e-3);
    }

    #[test]
    fn optimum_matches_projected_gradient() {
        let a = dmatrix![-1.0, -1.0; 2.0, -0.5];
        let b = dvector![0.8, 0.6];
        let ball = ActionSet::ball(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10 {
            let z = dvector![rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)];
            let x = compute_optimum(&z, &a, &b, &ball).unwrap();
            // Projected gradient on ½‖x − z‖² over the intersection, from random starts.
            let halfspaces: Vec<Halfspace<f64>> =
                a.row_iter().zip(b.iter()).map(|(r, bi)| Halfspace::new(r.transpose(), *bi)).collect();
            let piece = ConvexPiece::new(halfspaces, ball.clone());
            for _ in 0..10 {
                let mut y = piece.project(&dvector![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)], 1e-12).unwrap();
                for _ in 0..200 {
                    y = piece.project(&(&y - (&y - &z) * 0.5), 1e-12).unwrap();
                }
                assert!((&y - &x).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn algo_names_round_trip() {
        for a in Algo::ALL {
            assert_eq!(a.name().parse::<Algo>().unwrap(), a);
            assert_eq!(serde_json::to_string(&a).unwrap(), format!("\"{}\"", a.name()));
        }
        assert!("osoco".parse::<Algo>().is_err());
    }

    #[test]
    fn every_algorithm_runs_and_regret_is_consistent() {
        let env = EnvConfig::app_d(EnvMode::Static, 0);
        for algo in Algo::ALL {
            let r = run_trial(&env, algo, 120, 0).unwrap();
            assert_eq!(r.rounds.len(), 120);
            let x_star = DVector::from_vec(r.x_star.clone());
            let trace = EnvTrace::generate(&env, 120, 0).unwrap();
            let mut acc = 0.0;
            for rec in &r.rounds {
                let c = env.cost(trace.centers[rec.t - 1].clone());
                acc += rec.cost - c.value(&x_star);
                assert!((rec.regret - acc).abs() <= 1e-9 * acc.abs().max(1.0));
            }
            if matches!(algo, Algo::OsocoH | Algo::OsocoE | Algo::SoPgd) {
                assert!(r.max_static_viol() <= 1e-12, "{algo}");
            }
        }
    }

    #[test]
    fn trials_are_deterministic() {
        let env = EnvConfig::app_d(EnvMode::Stochastic, 3);
        for algo in Algo::ALL {
            assert_eq!(run_trial(&env, algo, 60, 2).unwrap(), run_trial(&env, algo, 60, 2).unwrap());
        }
    }

    #[test]
    fn zero_player_regret_is_nonnegative() {
        let env = EnvConfig::app_d(EnvMode::Static, 1);
        let trace = EnvTrace::generate(&env, 200, 0).unwrap();
        let x_star = compute_optimum(&trace.mean_center(), &env.matrix(), &env.b_vector(), &env.action_set).unwrap();
        let regret_of = |x: &DVector<f64>| {
            trace.centers.iter().map(|v| {
                let c = env.cost(v.clone());
                c.value(x) - c.value(&x_star)
            }).sum::<f64>()
        };
        assert!(regret_of(&x_star).abs() < 1e-9);
        assert!(regret_of(&DVector::zeros(2)) >= 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let x = dvector![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            if x.norm() <= 1.0 && -x[0] - x[1] <= 0.8 {
                assert!(regret_of(&x) >= -1e-9);
            }
        }
    }
}
