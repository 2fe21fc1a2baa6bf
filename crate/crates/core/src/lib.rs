//! Permutation-equivariant ("exchangeable") layers for matrices and tensors.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`]: sparse D-dimensional arrays, axis grouping and permutations.
//! - [`autodiff`]: a small reverse-mode graph with the pooling primitives the
//!   layers are built from.
//! - [`layers`]: the exchangeable matrix/tensor layer, side features, channel
//!   dropout and factor pooling.
//! - [`models`]: the self-supervised stack and the factorized exchangeable
//!   autoencoder.
//! - [`sampling`], [`data`], [`training`]: minibatches, ratings ingestion and
//!   the training loop.
//! - [`verifier`]: brute-force checks of the weight-tying theory on small
//!   instances.
//! - [`checkpoint`], [`config`]: on-disk formats shared by the CLI.

pub mod autodiff;
pub mod checkpoint;
pub mod config;
pub mod data;
mod error;
pub mod layers;
pub mod models;
pub mod rng;
pub mod sampling;
pub mod synthetic;
pub mod tensor;
pub mod training;
pub mod verifier;

pub use error::{Error, Result};
