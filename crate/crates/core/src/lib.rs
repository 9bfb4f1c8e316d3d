//! Simulation and estimation toolkit for bifurcating autoregressive
//! processes of order `p` on the complete binary tree.
//!
//! Each cell `k` carries a value `X_k`; its daughters `2k` and `2k + 1` follow
//!
//! ```text
//! X_2k   = a_0 + a_1 X_k + a_2 X_{k/2} + ... + a_p X_{k/2^{p-1}} + eps_2k
//! X_2k+1 = b_0 + b_1 X_k + b_2 X_{k/2} + ... + b_p X_{k/2^{p-1}} + eps_2k+1
//! ```
//!
//! with a centered, possibly correlated noise pair. The crate covers the
//! whole loop: tree index algebra ([`tree`]), model and simulation
//! ([`model`]), least-squares and noise-moment estimation ([`estimate`]),
//! deterministic limit objects and rate functions ([`limits`]), and a
//! replicated Monte-Carlo harness for deviation diagnostics ([`verify`]).
//!
//! ```
//! use barlab::model::{simulate, BarModel, InitSpec, NoiseModel};
//! use barlab::estimate::estimate;
//!
//! let model = BarModel::new(1, vec![1.0, 0.5], vec![1.0, 0.5])?;
//! let noise = NoiseModel::gaussian(1.0, 0.3)?;
//! let tree = simulate(&model, Some(&noise), &InitSpec::Zero, 12, 7)?;
//! let est = estimate(&tree, 12, Some(&noise), Some(&model))?;
//! assert!((&est.theta_hat - model.theta()).norm() < 0.1);
//! # Ok::<(), barlab::Error>(())
//! ```
//!
//! A guide with worked chapters lives in the `book/` directory of the
//! repository; its code listings are compiled as doc-tests of this crate.

// `!(x > 0.0)` rejects NaN along with nonpositive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimate;
pub mod limits;
pub mod linalg;
pub mod model;
pub mod seed;
pub mod tree;
pub mod verify;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/tree.md")]
    mod tree {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/estimation.md")]
    mod estimation {}
    #[doc = include_str!("../../../book/src/limits.md")]
    mod limits {}
    #[doc = include_str!("../../../book/src/montecarlo.md")]
    mod montecarlo {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../README.md")]
    mod readme {}
}
