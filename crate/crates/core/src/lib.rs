//! Growth-optimal portfolio selection under dynamic risk limits.
//!
//! The crate covers the whole pipeline from closed-form risk measures of the
//! projected (lognormal) wealth loss, through the scalar constraint pair
//! `(f, h)` and the projection of the Merton proportion onto the admissible
//! set, to Euler simulation of the constrained wealth equation in ergodic
//! markets and Monte Carlo verification of growth-rate optimality.
//!
//! Rates and volatilities are annualized; horizons are in years.

// `!(x > 0.0)` also rejects NaN, which is the point of those guards.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constraints;
pub mod error;
pub mod market;
pub mod numerics;
pub mod projection;
pub mod risk;
pub mod rng;
pub mod simulate;
pub mod verification;

pub use constraints::{ConstraintPair, ConstraintSetQuery, Limit};
pub use error::{Error, Result};
pub use market::{MarketModel, MarketPoint};
pub use projection::{MertonData, ProjectionResult};
pub use risk::{PortfolioStats, RiskMeasure, RiskParams};
pub use simulate::{PathResult, SimConfig, StrategyRule};

