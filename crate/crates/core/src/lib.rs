//! Numerical solver for McKean-Vlasov SDEs with Hoelder coefficients.
//!
//! Layers, bottom up: `measure` (representations and exact dual metrics),
//! `coeffs` (coefficient registry and validation), `engine` (particle and
//! density propagation under a frozen flow), `kernels` (transition kernels,
//! push-forward/pull-back, inversion check), `fixpoint` (Picard iteration).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod grid;
mod lp;
pub mod measure;
pub mod coeffs;
pub mod config;
pub mod engine;
pub mod fit;
pub mod kernels;

pub mod fixpoint;

pub use error::{Error, Result};
