use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::aggregate::AggregateRow;
use super::TrialResult;
use crate::error::{Error, Result};

pub const ROUNDS_HEADER: [&str; 10] =
    ["run_id", "algo", "trial", "t", "cost", "regret", "static_viol_max", "stoch_viol_sum", "gamma", "phase"];
pub const AGGREGATE_HEADER: [&str; 5] = ["algo", "t", "metric", "mean", "std"];

/// One line of the per-round table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRow {
    pub run_id: String,
    pub algo: String,
    pub trial: u64,
    pub t: usize,
    pub cost: f64,
    pub regret: f64,
    pub static_viol_max: f64,
    /// Cumulative `Σ_s Σ_i g_{s,i}(x_s)` through round `t`.
    pub stoch_viol_sum: f64,
    pub gamma: f64,
    pub phase: usize,
}

pub fn rounds_to_rows(trials: &[TrialResult]) -> Vec<RoundRow> {
    trials
        .iter()
        .flat_map(|tr| {
            let run_id = tr.run_id();
            tr.rounds.iter().map(move |r| RoundRow {
                run_id: run_id.clone(),
                algo: tr.algo.name().to_string(),
                trial: tr.trial,
                t: r.t,
                cost: r.cost,
                regret: r.regret,
                static_viol_max: r.static_viol_max(),
                stoch_viol_sum: r.cum_stoch_viol,
                gamma: r.gamma,
                phase: r.phase,
            })
        })
        .collect()
}

fn float(v: f64) -> String {
    format!("{v:.16e}")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse { path: path.to_path_buf(), message: format!("{other:?}") },
    }
}

fn write_csv<R, const N: usize>(path: &Path, header: [&str; N], rows: R) -> Result<()>
where
    R: IntoIterator<Item = [String; N]>,
{
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes the per-round table; floats carry 17 significant digits.
pub fn write_rounds_csv(path: &Path, rows: &[RoundRow]) -> Result<()> {
    write_csv(
        path,
        ROUNDS_HEADER,
        rows.iter().map(|r| {
            [
                r.run_id.clone(),
                r.algo.clone(),
                r.trial.to_string(),
                r.t.to_string(),
                float(r.cost),
                float(r.regret),
                float(r.static_viol_max),
                float(r.stoch_viol_sum),
                float(r.gamma),
                r.phase.to_string(),
            ]
        }),
    )
}

pub fn write_aggregate_csv(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    write_csv(
        path,
        AGGREGATE_HEADER,
        rows.iter().map(|r| [r.algo.clone(), r.t.to_string(), r.metric.clone(), float(r.mean), float(r.std)]),
    )
}

fn parse_csv<T: for<'de> Deserialize<'de>>(path: &Path, header: &[&str]) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(BufReader::new(file));
    let found = r.headers().map_err(|e| csv_error(path, e))?.clone();
    for (i, want) in header.iter().enumerate() {
        match found.get(i) {
            Some(got) if got == *want => {}
            Some(got) => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    message: format!("column {i} is {got:?}, expected {want:?}"),
                })
            }
            None => return Err(Error::Parse { path: path.to_path_buf(), message: format!("missing column {want:?}") }),
        }
    }
    if found.len() != header.len() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            message: format!("expected {} columns, found {}", header.len(), found.len()),
        });
    }
    r.deserialize().map(|row| row.map_err(|e| csv_error(path, e))).collect()
}

pub fn parse_rounds_csv(path: &Path) -> Result<Vec<RoundRow>> {
    parse_csv(path, &ROUNDS_HEADER)
}

pub fn parse_aggregate_csv(path: &Path) -> Result<Vec<AggregateRow>> {
    parse_csv(path, &AGGREGATE_HEADER)
}

/// JSON mirror of the per-round table.
pub fn write_trials_json(path: &Path, rows: &[RoundRow]) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer(&mut w, rows).map_err(|e| Error::io(path, e.into()))?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn read_trials_json(path: &Path) -> Result<Vec<RoundRow>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Error::Parse { path: path.to_path_buf(), message: e.to_string() })
}
