//! Monte Carlo densities of SDEs with additive fractional noise.
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod bridge;
pub mod density;
pub mod error;
pub mod frac_calc;
pub mod grid;
pub mod noise;
pub mod quad;
pub mod rng;
pub mod sde;
pub mod stats;
pub mod validate;

pub use error::{Error, Result};
pub use grid::{Grid, SampledFunction, SampledPath};
