#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use safe_oco::environments::{EnvConfig, EnvMode};
use safe_oco::harness::{parse_rounds_csv, read_trials_json, rounds_to_rows, run_trial, write_rounds_csv, write_trials_json, Algo};
use safe_oco::inner_oco::{build_epsilon_net, hedge_update, CostFunction, Ftpl, InnerAlgorithm, QuadraticCost, StepConstants};
use safe_oco::safe_sets::{ActionSet, ConvexPiece, Halfspace, SafeSetSpec};

pub type Check = Result<String, String>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(rng: &mut ChaCha8Rng, d: usize, lo: f64, hi: f64) -> DVector<f64> {
    DVector::from_fn(d, |_, _| rng.random_range(lo..hi))
}

/// Uniform point of the ball of radius `r`, by rejection.
pub fn in_ball(rng: &mut ChaCha8Rng, d: usize, r: f64) -> DVector<f64> {
    loop {
        let x = random_vec(rng, d, -r, r);
        if x.norm() <= r {
            return x;
        }
    }
}

pub fn random_spd(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    let b = DMatrix::from_fn(d, d, |_, _| rng.random_range(-2.0..2.0));
    &b * b.transpose() + DMatrix::identity(d, d) * rng.random_range(0.5..5.0)
}

/// Random spec: `d ∈ 1..=4`, `n ∈ 1..=3`, unit ball or box action set.
pub fn random_spec(rng: &mut ChaCha8Rng) -> SafeSetSpec<f64> {
    let d = rng.random_range(1..=4);
    let n = rng.random_range(1..=3);
    let a_hat = DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.5..1.5));
    let v_bar = random_spd(rng, d);
    let beta = rng.random_range(0.0..1.0);
    let b = random_vec(rng, n, 0.1, 1.5);
    let b_min = b.min();
    let kappa = if rng.random::<bool>() { 0.0 } else { rng.random_range(0.0..0.5) * b_min };
    let set = if rng.random::<bool>() {
        ActionSet::ball(1.0)
    } else {
        ActionSet::boxed(vec![-1.0; d], vec![1.0; d])
    };
    SafeSetSpec::from_gram_matrix(a_hat, beta, &v_bar, b, kappa, set).unwrap()
}

pub fn point_in_set(rng: &mut ChaCha8Rng, set: &ActionSet<f64>, d: usize) -> DVector<f64> {
    match set {
        ActionSet::Ball { radius } => in_ball(rng, d, *radius),
        ActionSet::Box { lower, upper } => DVector::from_fn(d, |i, _| rng.random_range(lower[i]..=upper[i])),
    }
}

/// Largest feasible scaling by bisection on pessimistic membership.
pub fn scaling_by_bisection(spec: &SafeSetSpec<f64>, x: &DVector<f64>) -> f64 {
    let ok = |g: f64| spec.pessimistic_slack(&(x * g)).unwrap() <= 0.0;
    if ok(1.0) {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

fn summarize(name: &str, failures: usize, total: usize, worst: f64) -> Check {
    let line = format!("{name}: {failures}/{total} failures, worst {worst:.3e}");
    if failures == 0 {
        Ok(line)
    } else {
        Err(line)
    }
}

pub fn check_hedge_normalization(samples: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    let (mut fails, mut worst) = (0, 0.0f64);
    for _ in 0..samples {
        let m = r.random_range(1..12);
        let mut p: Vec<f64> = (0..m).map(|_| r.random_range(0.01..1.0)).collect();
        let s: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= s);
        let losses: Vec<f64> = (0..m).map(|_| r.random_range(-50.0..50.0)).collect();
        let next = hedge_update(&p, &losses, r.random_range(0.0..5.0)).map_err(|e| e.to_string())?;
        let err = (next.iter().sum::<f64>() - 1.0).abs();
        worst = worst.max(err);
        if err > 1e-12 || next.iter().any(|v| *v < 0.0) {
            fails += 1;
        }
    }
    summarize("hedge normalization", fails, samples, worst)
}

pub fn random_piece(rng: &mut ChaCha8Rng, d: usize) -> ConvexPiece<f64> {
    let k = rng.random_range(0..4);
    let halfspaces = (0..k)
        .map(|_| Halfspace::new(random_vec(rng, d, -1.0, 1.0), rng.random_range(0.05..1.0)))
        .collect();
    let set = if rng.random::<bool>() { ActionSet::ball(1.0) } else { ActionSet::boxed(vec![-1.0; d], vec![1.0; d]) };
    ConvexPiece::new(halfspaces, set)
}

/// One more projection leaves the point fixed, and the point is in the piece.
pub fn check_projection_fixed_point(samples: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    let (mut fails, mut worst) = (0, 0.0f64);
    for _ in 0..samples {
        let d = r.random_range(1..=4);
        let piece = random_piece(&mut r, d);
        let z = random_vec(&mut r, d, -3.0, 3.0);
        let p = piece.project(&z, 1e-10).map_err(|e| e.to_string())?;
        let q = piece.project(&p, 1e-10).map_err(|e| e.to_string())?;
        let err = (&p - &q).norm().max(piece.violation(&p));
        worst = worst.max(err);
        if err > 1e-9 {
            fails += 1;
        }
    }
    summarize("projection idempotence", fails, samples, worst)
}

pub fn check_safe_scaling(samples: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    let (mut fails, mut worst) = (0, 0.0f64);
    for _ in 0..samples {
        let spec = random_spec(&mut r);
        let x = point_in_set(&mut r, &spec.action_set, spec.dim());
        let gamma = spec.safe_scaling(&x).map_err(|e| e.to_string())?;
        let err = (gamma - scaling_by_bisection(&spec, &x)).abs();
        worst = worst.max(err);
        if err > 1e-8 {
            fails += 1;
        }
    }
    summarize("safe scaling vs bisection", fails, samples, worst)
}

pub fn check_epsilon_net(seed: u64) -> Check {
    let mut r = rng(seed);
    let (mut fails, mut total, mut worst) = (0, 0, 0.0f64);
    for (set, d, delta) in [
        (ActionSet::ball(1.0), 2, 0.1),
        (ActionSet::ball(1.0), 3, 0.25),
        (ActionSet::boxed(vec![-1.0, 0.0], vec![0.5, 2.0]), 2, 0.05),
        (ActionSet::ball(2.0), 1, 0.3),
    ] {
        let net = build_epsilon_net(&set, d, delta).map_err(|e| e.to_string())?;
        for _ in 0..2000 {
            let x = point_in_set(&mut r, &set, d);
            let dist = net.iter().map(|p| (p - &x).norm()).fold(f64::INFINITY, f64::min);
            worst = worst.max(dist / delta);
            total += 1;
            if dist > delta + 1e-12 || net.iter().any(|p| !set.contains(p, 1e-12)) {
                fails += 1;
            }
        }
    }
    summarize("epsilon-net covering (worst is dist/Δ)", fails, total, worst)
}

/// The leader beats 10³ random feasible points on the perturbed objective.
pub fn check_ftpl_oracle(rounds: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    let (mut fails, mut worst) = (0, f64::NEG_INFINITY);
    let spec = loop {
        let s = random_spec(&mut r);
        if s.dim() >= 2 {
            break s;
        }
    };
    let d = spec.dim();
    let pieces = spec.relaxed_pieces();
    let mut ftpl = Ftpl::new(pieces.clone(), d, StepConstants { g: 10.0, d: 2.0 }).map_err(|e| e.to_string())?;
    let feasible: Vec<DVector<f64>> = std::iter::repeat_with(|| point_in_set(&mut r, &spec.action_set, d))
        .filter(|x| pieces.iter().any(|p| p.contains(x, 0.0)))
        .take(1000)
        .collect();
    for _ in 0..rounds {
        let sigma = random_vec(&mut r, d, -2.0, 2.0);
        let leader = ftpl.leader(&sigma).map_err(|e| e.to_string())?;
        let value = ftpl.objective(&leader, &sigma);
        let best = feasible.iter().map(|x| ftpl.objective(x, &sigma)).fold(f64::INFINITY, f64::min);
        worst = worst.max(value - best);
        if value > best + 1e-6 || !pieces.iter().any(|p| p.contains(&leader, 1e-8)) {
            fails += 1;
        }
        let cost = QuadraticCost::new(r.random_range(0.5..3.0), random_vec(&mut r, d, -1.0, 1.0));
        ftpl.propose(&mut r).map_err(|e| e.to_string())?;
        ftpl.update(&cost).map_err(|e| e.to_string())?;
    }
    summarize("FTPL oracle (worst is leader − best sample)", fails, rounds, worst)
}

pub fn check_gradient(samples: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    let (mut fails, mut worst) = (0, 0.0f64);
    let h = 1e-6;
    for _ in 0..samples {
        let d = r.random_range(1..=5);
        let cost = QuadraticCost::new(r.random_range(0.1..5.0), random_vec(&mut r, d, -1.0, 1.0));
        let x = random_vec(&mut r, d, -1.0, 1.0);
        let g = cost.gradient(&x);
        for i in 0..d {
            let mut e = DVector::zeros(d);
            e[i] = h;
            let fd = (cost.value(&(&x + &e)) - cost.value(&(&x - &e))) / (2.0 * h);
            let err = (fd - g[i]).abs() / g[i].abs().max(1.0);
            worst = worst.max(err);
            if err > 1e-6 {
                fails += 1;
            }
        }
    }
    summarize("finite-difference gradient", fails, samples, worst)
}

pub fn check_csv_round_trip(seed: u64) -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let env = EnvConfig::app_d(EnvMode::Stochastic, seed);
    let trials: Vec<_> = Algo::ALL.iter().map(|a| run_trial(&env, *a, 50, 1).unwrap()).collect();
    let rows = rounds_to_rows(&trials);
    let csv = dir.path().join("rounds.csv");
    let json = dir.path().join("rounds.json");
    write_rounds_csv(&csv, &rows).map_err(|e| e.to_string())?;
    write_trials_json(&json, &rows).map_err(|e| e.to_string())?;
    let ok = parse_rounds_csv(&csv).map_err(|e| e.to_string())? == rows
        && read_trials_json(&json).map_err(|e| e.to_string())? == rows;
    summarize("CSV/JSON round-trip", usize::from(!ok), rows.len(), 0.0)
}

pub fn check_determinism(seed: u64) -> Check {
    let mut fails = 0;
    for mode in [EnvMode::Static, EnvMode::Stochastic] {
        let env = EnvConfig::app_d(mode, seed);
        for algo in Algo::ALL {
            let a = run_trial(&env, algo, 80, 3).map_err(|e| e.to_string())?;
            let b = run_trial(&env, algo, 80, 3).map_err(|e| e.to_string())?;
            let c = run_trial(&env, algo, 80, 4).map_err(|e| e.to_string())?;
            if a != b || a == c {
                fails += 1;
            }
        }
    }
    summarize("seed determinism", fails, 2 * Algo::ALL.len(), 0.0)
}
