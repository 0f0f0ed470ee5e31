//! Differentiable particle filters with normalizing-flow dynamics and
//! conditional normalizing-flow proposals.
//!
//! Layering, bottom-up:
//!
//! - [`autodiff`]: tensors and a define-by-run reverse-mode tape.
//! - [`nn`]: MLPs, encoders, parameter storage and Adam.
//! - [`flows`]: coupling layers and flow stacks.
//! - [`filtering`]: particle ensembles, models, weighting and resampling.
//! - [`learning`]: supervised and pseudo-likelihood objectives and training.
//! - [`diskworld`]: the synthetic disk-tracking environment.
//! - [`cli`]: the `flowpf` command-line front end.

pub mod autodiff;
pub mod cli;
pub mod container;
pub mod diskworld;
mod error;
pub mod filtering;
pub mod flows;
pub mod gaussian;
pub mod learning;
pub mod nn;
pub mod rng;

pub use error::{Error, Result};
