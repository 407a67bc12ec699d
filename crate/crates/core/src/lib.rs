//! Simulation and Markov-chain analysis of dynamic matching markets with two
//! agent types: hard-to-match (H) and easy-to-match (E) agents.
//!
//! Each agent arrives with one item and wants one item in return. Any
//! directed compatibility `i -> j` exists independently with probability
//! `p_H` when `j` is an H agent and `p_E` when `j` is an E agent. The crate
//! covers:
//!
//! * [`params`]: market parameters, regimes, run controls and RNG streams.
//! * [`counts`]: exact count-level simulators for bilateral and chain
//!   matching policies, including coupled runs.
//! * [`graph`]: an explicit compatibility-graph simulator that serves as an
//!   independent check of the count-level engine and implements Max-Chains.
//! * [`ctmc`]: continuous-time rate functions and a stationary solver.
//! * [`theory`]: closed-form limit constants, bounds, heuristics and tail
//!   bound lemmas.
//! * [`experiments`]: experiment grids, the threshold search and CSV output.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod counts;
pub mod ctmc;
pub mod error;
pub mod experiments;
pub mod graph;
pub mod numeric;
pub mod params;
pub mod stats;
pub mod theory;

pub use error::{Error, Result};
pub use params::{CountsState, MarketParams, Regime, RunControls, SimSummary};
