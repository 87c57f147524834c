//! Heterogeneous-beliefs asset pricing with evolutionary strategy switching,
//! with and without an uptick rule on short sales.
//!
//! - [`model`]: structural constants and one-period mechanics.
//! - [`predictors`]: fundamental, chartist, and rate-of-change beliefs.
//! - [`clearing`]: region partition and the piecewise one-period map.
//! - [`equilibria`]: closed-form equilibria, eigenvalues, and thresholds.
//! - [`dynamics`]: orbits, Lyapunov exponents, and bifurcation scans.

pub mod clearing;
pub mod dynamics;
pub mod equilibria;
pub mod error;
pub mod model;
pub mod predictors;

pub use clearing::{
    candidate_demands, classify, clear_general, DemandCurve, Market, MarketState, Mode, Region, StepOutcome,
    CLEARING_TOLERANCE,
};
pub use error::{Error, Result};
pub use model::{fundamental_price, MarketParams};
pub use predictors::Predictor;
