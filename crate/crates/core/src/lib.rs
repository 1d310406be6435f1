//! Same-day delivery with endogenous regional demand.
//!
//! The crate simulates the within-day acceptance and routing process, evolves
//! each region's expected demand over a multi-month horizon, trains deep
//! Q-learning dispatch policies on shaped scenario distributions, and analyses
//! the stylized two-region steady-state allocation problem.

pub mod dqn;
pub mod error;
pub mod harness;
pub mod instance;
pub mod interday;
pub mod intraday;
pub mod policies;
pub mod routing;
pub mod seeds;
pub mod shaping;
pub mod steady_state;

pub use error::{Error, Result};
