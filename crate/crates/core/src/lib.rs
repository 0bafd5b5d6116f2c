//! Simulation and numerical checks of Berry–Esseen rates for partial sums
//! `V_n = n^{-1/2} Σ (f(X_t) - E f(X_1))` of heavy-tailed Lévy moving
//! averages `X_t = ∫_{-∞}^t g(t-s) dL_s`.

// `!(x > 0.0)` also rejects NaN, which is the point of writing it that way.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod error;
pub mod harness;
pub mod kernels;
pub mod quad;
pub mod rng;
pub mod simulate;
pub mod special;
pub mod stable;
pub mod stats;

pub use error::{Error, Result};
