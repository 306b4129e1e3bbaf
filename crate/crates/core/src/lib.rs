//! Prior-augmented few-shot classification of irregular multichannel time
//! series.
//!
//! The crate is organized around a small set of numeric building blocks:
//!
//! - [`dirichlet`] — gamma/Dirichlet sampling and log-density evaluation,
//! - [`dipa`] — softmax, pseudo-prior logit adjustment, and the
//!   cross-entropy / focal losses with analytic gradients,
//! - [`model`] — a transformer-encoder classifier over day-indexed
//!   observations with exact reverse-mode gradients,
//! - [`data`] — synthetic long-tailed dataset generation, splitting, and
//!   k-shot episode sampling,
//! - [`metrics`] — confusion-matrix accuracy, Cohen's kappa, and macro-F1,
//! - [`trainer`] — the mini-batch Adam loop with per-step prior sampling
//!   and patience-based early stopping,
//! - [`gradcheck`] — a finite-difference audit of the analytic gradients.
//!
//! Everything is `f64`, deterministic under an explicit [`rng::Rng`] stream,
//! and usable without the standard library (`default-features = false`;
//! allocation is required).

#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod data;
pub mod dipa;
pub mod dirichlet;
pub mod error;
pub mod gradcheck;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod special;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
