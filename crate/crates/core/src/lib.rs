//! Simulation and likelihood-free inference for piecewise diffusion Markov
//! processes (PDifMPs).
//!
//! A PDifMP couples a diffusion `X` with a piecewise-constant regime `Z`
//! that switches at random jump times. This crate provides:
//!
//! - [`flows`]: exact Gaussian transitions of the inter-jump SDEs,
//! - [`simulate`]: path simulation with constant or state-dependent jump rates,
//! - [`summaries`] and [`distance`]: hybrid summary statistics and their distance,
//! - [`abc`]: rejection and sequential Monte Carlo ABC samplers,
//! - [`ergodicity`]: time-average versus ensemble density diagnostics.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod abc;
pub mod distance;
pub mod ergodicity;
pub mod error;
pub mod flows;
pub mod model;
pub mod rng;
pub mod simulate;
pub mod stats;
pub mod summaries;
pub mod synthetic;

pub use error::{Error, Result};
pub use model::{
    HybridPath, InitialRegime, ModelId, ModelSpec, ObservationMode, ObservedDataset, ParamVector, RateKind,
};
