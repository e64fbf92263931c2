//! Verification toolkit for neural networks whose activations are staircase
//! or general piecewise-linear functions.
//!
//! Each neuron can be modelled with a Big-M formulation or with the convex
//! hull of its Cayley embedding. The hull is described implicitly and grown
//! on demand by a fast separation oracle ([`separation`]). Relaxed and exact
//! (branch-and-bound) verifiers live in [`verifier`].

pub mod bounds;
pub mod error;
pub mod formulations;
pub mod lp;
pub mod network;
pub mod oracles;
pub mod pwl;
pub mod separation;
pub mod verifier;

pub use error::{Error, Result};
