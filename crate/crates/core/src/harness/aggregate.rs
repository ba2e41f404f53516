use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::io::RoundRow;
use crate::error::{Error, Result};

/// Metrics reported per checkpoint. `static_viol_worst` is the running
/// maximum of `static_viol_max`.
pub const METRICS: [&str; 6] = ["cost", "regret", "static_viol_max", "static_viol_worst", "stoch_viol_sum", "gamma"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub algo: String,
    pub t: usize,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Mean and sample standard deviation (n − 1) of every metric at every
/// checkpoint, per algorithm. Each algorithm needs at least two runs of the
/// same horizon; checkpoints beyond the horizon are skipped.
pub fn aggregate(rows: &[RoundRow], checkpoints: &[usize]) -> Result<Vec<AggregateRow>> {
    // algo -> (run_id, trial) -> rows in round order
    let mut runs: BTreeMap<&str, BTreeMap<(&str, u64), Vec<&RoundRow>>> = BTreeMap::new();
    for r in rows {
        runs.entry(&r.algo).or_default().entry((&r.run_id, r.trial)).or_default().push(r);
    }
    let mut out = Vec::new();
    for (algo, group) in runs {
        if group.len() < 2 {
            return Err(Error::invalid(format!("{algo}: aggregation needs at least two trials, got {}", group.len())));
        }
        let mut series = Vec::with_capacity(group.len());
        let mut horizon = None;
        for ((run_id, trial), mut rs) in group {
            rs.sort_by_key(|r| r.t);
            if rs.iter().enumerate().any(|(i, r)| r.t != i + 1) {
                return Err(Error::invalid(format!("{run_id} trial {trial}: rounds are not 1..T")));
            }
            match horizon {
                None => horizon = Some(rs.len()),
                Some(h) if h != rs.len() => {
                    return Err(Error::invalid(format!("{algo}: mismatched horizons {h} and {}", rs.len())))
                }
                _ => {}
            }
            let mut worst = f64::NEG_INFINITY;
            let values: Vec<[f64; 6]> = rs
                .iter()
                .map(|r| {
                    worst = worst.max(r.static_viol_max);
                    [r.cost, r.regret, r.static_viol_max, worst, r.stoch_viol_sum, r.gamma]
                })
                .collect();
            series.push(values);
        }
        let horizon = horizon.unwrap_or(0);
        for &t in checkpoints.iter().filter(|&&t| t >= 1 && t <= horizon) {
            for (m, name) in METRICS.iter().enumerate() {
                let vals: Vec<f64> = series.iter().map(|s| s[t - 1][m]).collect();
                let (mean, std) = mean_std(&vals);
                out.push(AggregateRow { algo: algo.to_string(), t, metric: name.to_string(), mean, std });
            }
        }
    }
    Ok(out)
}
