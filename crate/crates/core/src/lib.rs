//! Diversity-by-disagreement ensemble training.
//!
//! Ensemble members fit the labelled training data while a penalty pushes
//! each new member to disagree with its predecessors on unlabelled
//! out-of-distribution inputs. The crate is `no_std` (it needs `alloc`) and
//! holds everything that does not touch the filesystem:
//!
//! - [`autodiff`]: dense tensors and a reverse-mode tape.
//! - [`models`]: feed-forward softmax classifiers and their binary encoding.
//! - [`losses`]: cross-entropy, the agreement penalties and the combined objective.
//! - [`datasets`]: synthetic generators, IDX parsing and domino composition.
//! - [`training`]: SGD with momentum, ERM, sequential and simultaneous training.
//! - [`oodgen`]: agreement-minimising perturbations and the two-feature posterior oracle.
//! - [`evaluation`]: accuracy, entropy, aggregation, disagreement and histograms.

#![no_std]

extern crate alloc;

pub mod autodiff;
pub mod datasets;
pub mod evaluation;
pub mod losses;
pub mod models;
pub mod oodgen;
pub mod rng;
pub mod training;

mod error;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
