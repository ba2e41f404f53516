use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::json;
use walkdir::WalkDir;

use super::aggregate::aggregate;
use super::io::{parse_rounds_csv, rounds_to_rows, write_aggregate_csv, write_rounds_csv, write_trials_json, RoundRow};
use super::{run_trial, Algo, TrialResult};
use crate::environments::EnvConfig;
use crate::error::{Error, Result};

/// Environment variable capping the worker pool size.
pub const THREADS_ENV: &str = "SAFE_OCO_THREADS";

/// Horizons and checkpoints used for horizon sweeps. The grid is a
/// stand-in sized for desk-scale runtimes.
pub const CHECKPOINT_LADDER: [usize; 5] = [250, 500, 1000, 2000, 4000];

const LADDER_NOTE: &str = "checkpoint ladder {250, 500, 1000, 2000, 4000} is a stand-in grid chosen for desk-scale runtimes";

/// Worker pool sized by `SAFE_OCO_THREADS` (all cores when unset).
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => n,
            _ => return Err(Error::invalid(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        },
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Resource(format!("cannot start worker pool: {e}")))
}

/// Runs trials `0..trials` in parallel; results come back in trial order.
pub fn run_trials(env: &EnvConfig, algo: Algo, horizon: usize, trials: u64) -> Result<Vec<TrialResult>> {
    thread_pool()?.install(|| (0..trials).into_par_iter().map(|k| run_trial(env, algo, horizon, k)).collect())
}

/// Summary of one written run directory.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub algo: Algo,
    pub horizon: usize,
    pub trials: usize,
    pub mean_regret: f64,
    pub max_static_viol: f64,
}

fn checkpoints(horizon: usize) -> Vec<usize> {
    let step = (horizon / 100).max(1);
    let mut c: Vec<usize> = (1..=horizon).filter(|t| t % step == 0).collect();
    c.extend(CHECKPOINT_LADDER.iter().copied().filter(|&t| t <= horizon));
    c.push(horizon);
    c.sort_unstable();
    c.dedup();
    c
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer_pretty(BufWriter::new(file), value).map_err(|e| Error::io(path, e.into()))
}

/// Writes `rounds.csv`, `rounds.json`, `metadata.json` and, with at least
/// two trials, `aggregate.csv` into `dir`.
pub fn write_run(dir: &Path, env: &EnvConfig, algo: Algo, horizon: usize, results: &[TrialResult]) -> Result<RunOutput> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let rows = rounds_to_rows(results);
    write_rounds_csv(&dir.join("rounds.csv"), &rows)?;
    write_trials_json(&dir.join("rounds.json"), &rows)?;
    if results.len() >= 2 {
        write_aggregate_csv(&dir.join("aggregate.csv"), &aggregate(&rows, &checkpoints(horizon))?)?;
    }
    let coverage: Vec<Option<bool>> = results.iter().map(|r| r.coverage).collect();
    let phases: Vec<Option<usize>> = results.iter().map(|r| r.phases).collect();
    write_json(
        &dir.join("metadata.json"),
        &json!({
            "algo": algo.name(),
            "horizon": horizon,
            "trials": results.len(),
            "config": env,
            "checkpoints": checkpoints(horizon),
            "checkpoint_note": LADDER_NOTE,
            "coverage": coverage,
            "phases": phases,
        }),
    )?;
    let n = results.len().max(1) as f64;
    Ok(RunOutput {
        dir: dir.to_path_buf(),
        algo,
        horizon,
        trials: results.len(),
        mean_regret: results.iter().map(TrialResult::final_regret).sum::<f64>() / n,
        max_static_viol: results.iter().map(TrialResult::max_static_viol).fold(f64::NEG_INFINITY, f64::max),
    })
}

/// Every algorithm at every horizon, written to `<out>/<algo>_T<T>/`.
pub fn sweep(env: &EnvConfig, algos: &[Algo], horizons: &[usize], trials: u64, out: &Path) -> Result<Vec<RunOutput>> {
    let mut outputs = Vec::new();
    for &algo in algos {
        for &horizon in horizons {
            let results = run_trials(env, algo, horizon, trials)?;
            outputs.push(write_run(&out.join(format!("{algo}_T{horizon}")), env, algo, horizon, &results)?);
        }
    }
    Ok(outputs)
}

/// Collects every `rounds.csv` under `input` and writes
/// `horizons.csv` (final-round metrics against horizon), `curves.csv`
/// (per-round checkpoints of each algorithm's longest run) and
/// `metadata.json` into `out`. Returns the written paths.
pub fn figure_data(input: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    // algo -> horizon -> rows
    let mut runs: BTreeMap<String, BTreeMap<usize, Vec<RoundRow>>> = BTreeMap::new();
    for entry in WalkDir::new(input).sort_by_file_name() {
        let entry = entry.map_err(|e| {
            let path = e.path().unwrap_or(input).to_path_buf();
            Error::io(path, e.into())
        })?;
        if entry.file_type().is_file() && entry.file_name() == "rounds.csv" {
            let rows = parse_rounds_csv(entry.path())?;
            let mut per_algo: BTreeMap<String, Vec<RoundRow>> = BTreeMap::new();
            for r in rows {
                per_algo.entry(r.algo.clone()).or_default().push(r);
            }
            for (algo, rows) in per_algo {
                let horizon = rows.iter().map(|r| r.t).max().unwrap_or(0);
                runs.entry(algo).or_default().entry(horizon).or_default().extend(rows);
            }
        }
    }
    if runs.is_empty() {
        return Err(Error::invalid(format!("no rounds.csv found under {}", input.display())));
    }
    let mut horizons = Vec::new();
    let mut curves = Vec::new();
    for by_horizon in runs.values() {
        for (&horizon, rows) in by_horizon {
            horizons.extend(aggregate(rows, &[horizon])?);
        }
        if let Some((&horizon, rows)) = by_horizon.iter().next_back() {
            curves.extend(aggregate(rows, &checkpoints(horizon))?);
        }
    }
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let paths = [out.join("horizons.csv"), out.join("curves.csv"), out.join("metadata.json")];
    write_aggregate_csv(&paths[0], &horizons)?;
    write_aggregate_csv(&paths[1], &curves)?;
    let listing: BTreeMap<&String, Vec<usize>> = runs.iter().map(|(a, h)| (a, h.keys().copied().collect())).collect();
    write_json(&paths[2], &json!({ "runs": listing, "checkpoint_note": LADDER_NOTE }))?;
    Ok(paths.to_vec())
}

/// Runs one OSOCO-H and one OSOCO-E trial with every invariant check
/// enabled. Any failed check is returned as an error; the report lists the
/// phase counts and confidence coverage of the two runs.
pub fn run_audit(env: &EnvConfig, horizon: usize) -> Result<Vec<String>> {
    let mut report = Vec::new();
    for algo in [Algo::OsocoH, Algo::OsocoE] {
        let r = run_trial(env, algo, horizon, 0)?;
        report.push(format!(
            "{algo}: T={horizon} phases={} coverage={} max_static_viol={:.3e} ok",
            r.phases.unwrap_or(0),
            r.coverage.unwrap_or(false),
            r.max_static_viol(),
        ));
    }
    Ok(report)
}
