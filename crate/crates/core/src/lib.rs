//! Online convex optimization with unknown linear constraints.
//!
//! The algorithms are generic over the scalar (`f32` or `f64`); the aliases
//! below fix it to `f64`, which is what the harness uses.

// `!(x > 0)` style checks are deliberate: they reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod environments;
pub mod error;
pub mod harness;
pub mod inner_oco;
pub mod numerics;
pub mod osoco;
pub mod safe_sets;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

pub type GramState = numerics::GramState<f64>;
pub type ConfidenceParams = numerics::ConfidenceParams<f64>;
pub type ActionSet = safe_sets::ActionSet<f64>;
pub type ConvexPiece = safe_sets::ConvexPiece<f64>;
pub type SafeSetSpec = safe_sets::SafeSetSpec<f64>;
pub type QuadraticCost = inner_oco::QuadraticCost<f64>;
pub type HedgeDescent = inner_oco::HedgeDescent<f64>;
pub type ProblemConstants = osoco::ProblemConstants<f64>;
pub type OsocoConfig = osoco::OsocoConfig<f64>;
pub type Osoco = osoco::Osoco<f64>;
pub type DppState = baselines::DppState<f64>;
pub type SoPgd = baselines::SoPgd<f64>;
