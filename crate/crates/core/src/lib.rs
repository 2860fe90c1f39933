//! Coalitions of prosumers for a constrained energy market.
//!
//! The crate covers the whole chain from zone weather to coalition
//! structures:
//!
//! - [`weather`]: ingest or synthesize zone weather on a shared time axis;
//! - [`powermodel`]: turn weather into per-agent net production traces;
//! - [`corrgraph`]: correlation matrix, distance graphs, ε-filtering and
//!   disjoint clique packings;
//! - [`market`]: contract values, validity and utility under a grid policy;
//! - [`formation`]: clique-seeded greedy formation and two baselines;
//! - [`resilience`]: structure resilience under random agent failures.

// Negated comparisons are used deliberately so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod corrgraph;
pub mod error;
pub mod formation;
pub mod market;
pub mod powermodel;
pub mod resilience;
pub mod seed;
pub mod special;
pub mod stats;
pub mod weather;

pub use error::{Error, Result};
