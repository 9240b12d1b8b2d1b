//! Burning second-price transaction fee mechanism under proof-of-stake.
//!
//! Exact rational arithmetic for everything the mechanism touches, a
//! scaled-integer stake chain for the long-run simulations, and a
//! bounded-exhaustive verifier for the incentive properties.

pub mod mechanism;
pub mod rational;
pub mod stake;
pub mod utility;
pub mod verifier;

pub use mechanism::{execute, Bid, BidId, BlockOutcome, MechanismError, MechanismParams, Owner, ParamError, Validity};
pub use rational::{format_rational, parse_rational, Rational};
pub use utility::{long_run_miner_utility, theta_bar, LongRunParams, ThetaBar};
