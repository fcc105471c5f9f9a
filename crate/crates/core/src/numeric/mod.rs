//! Shared numerical kernels: quantiles, small dense solvers, clustering,
//! and assignment. Everything here is deterministic given its inputs (and
//! seed, where one is taken).

pub mod assignment;
pub mod gauss;
pub mod kmeans;
pub mod nnls;
pub mod simplex_lp;

mod quantile;

pub use quantile::{quantile_of, quantile_sorted};

/// SplitMix64 step, used to derive independent per-replicate seeds from a
/// base seed without sharing RNG state.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}
