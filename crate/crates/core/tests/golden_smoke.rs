use std::path::PathBuf;

use safe_oco::environments::{EnvConfig, EnvMode};
use safe_oco::harness::{aggregate, rounds_to_rows, run_trials, write_aggregate_csv, write_rounds_csv, Algo, TrialResult};

fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

/// Seed-0 smoke run: every algorithm, T = 40, two trials.
fn smoke() -> Vec<TrialResult> {
    let env = EnvConfig::app_d(EnvMode::Static, 0);
    Algo::ALL.iter().flat_map(|a| run_trials(&env, *a, 40, 2).unwrap()).collect()
}

fn compare(name: &str, fresh: &std::path::Path) {
    let path = golden(name);
    let got = std::fs::read_to_string(fresh).unwrap();
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, &got).unwrap();
    }
    let want = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert!(got == want, "{name} differs from the golden file; rerun with UPDATE_GOLDEN=1 after an intended change");
}

#[test]
fn smoke_run_matches_golden_files() {
    let dir = tempfile::tempdir().unwrap();
    let rows = rounds_to_rows(&smoke());
    let rounds = dir.path().join("rounds.csv");
    write_rounds_csv(&rounds, &rows).unwrap();
    compare("smoke_rounds.csv", &rounds);
    let agg = dir.path().join("aggregate.csv");
    write_aggregate_csv(&agg, &aggregate(&rows, &[10, 20, 40]).unwrap()).unwrap();
    compare("smoke_aggregate.csv", &agg);
}

#[test]
fn golden_header_order() {
    let text = std::fs::read_to_string(golden("smoke_rounds.csv")).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "run_id,algo,trial,t,cost,regret,static_viol_max,stoch_viol_sum,gamma,phase"
    );
    let text = std::fs::read_to_string(golden("smoke_aggregate.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "algo,t,metric,mean,std");
}
