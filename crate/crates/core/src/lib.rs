//! Detect adversarial inputs to small neural networks from the topology of
//! their activation graphs.
//!
//! For a trained network and an input, the forward pass induces a weighted
//! graph over the neurons (edge weight = |activation x parameter|). Restricted
//! to the under-optimized edges (those whose magnitude grew least since
//! initialization), that graph looks very different for clean and adversarial
//! inputs. This crate extracts those graphs, summarizes them as 0-dimensional
//! persistence diagrams, and classifies diagrams with a sliced-Wasserstein
//! kernel one-class SVM.
//!
//! The crate is organized bottom-up:
//!
//! - [`tensor`] / [`nn`]: a minimal dense/conv network engine with reverse-mode
//!   differentiation, SGD/Adam training, initialization snapshots, and a
//!   path-sum Jacobian oracle.
//! - [`attack`]: PGD adversary generation and adversarial training.
//! - [`graph`]: induced activation graphs and under-optimized edge masks.
//! - [`persistence`]: 0-dimensional persistent homology of weighted graphs.
//! - [`kernels`]: sliced-Wasserstein and RBF gram matrices.
//! - [`detector`]: one-class / binary kernel SVMs, AUC, bootstrap intervals.
//! - [`pipeline`]: end-to-end experiment orchestration and result emission.

// Index loops mirror the matrix arithmetic they implement.
#![allow(clippy::needless_range_loop)]

pub mod attack;
pub mod detector;
mod error;
pub mod graph;
pub mod kernels;
pub mod nn;
pub mod persistence;
pub mod pipeline;
pub mod tensor;

pub use error::{Error, Result};
