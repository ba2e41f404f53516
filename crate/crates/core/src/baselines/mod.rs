//! Comparison algorithms: drift-plus-penalty and safe projected gradient
//! descent with a pure-exploration warm-up.

mod dpp;
mod sopgd;

pub use dpp::{dpp_round, DppState};
pub use sopgd::{SoPgd, SoPgdConfig, SoPgdPhase};
