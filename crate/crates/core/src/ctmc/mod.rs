//! Continuous-time Markov chains of the matching policies.
//!
//! Rates are exact functions of the state; [`solve_stationary`] computes the
//! stationary distribution on a finite box of states. Transitions leaving
//! the box are dropped, which makes the box reflecting.

mod rates;
mod segment;
mod solver;

pub use rates::{
    default_token_rate, rates_bilateral_e, rates_bilateral_e_tilde, rates_bilateral_h,
    rates_chain_hat, rates_token_chain, ChainState, CtmcKind, NeighborRates, PolicyRates,
    RateQuery,
};
pub use segment::{
    chain_removal_dist, chain_seg_pmf, chain_seg_pmf_all, chain_seg_tail, check_memoryless,
    RemovalDist,
};
pub use solver::{
    expected_chain_length_hat, expected_chain_length_stationary, solve_stationary, token_rates,
    SolveMethod, StationaryDistribution, TruncationSpec, DEFAULT_BOUNDARY_TOLERANCE,
};
