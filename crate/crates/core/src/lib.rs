//! Differentiable known-operator toolkit.
//!
//! The crate wires fixed, analytically defined operators (projectors, circulant
//! filters, Hessian banks) into a reverse-mode operator graph next to a small
//! number of trainable diagonal / convolutional parameters, and ships three
//! desk-scale imaging pipelines on top of it:
//!
//! * [`ct`] — 2-D parallel/fan-beam projectors with matched adjoints, Parker and
//!   cosine weights, a Ram-Lak filter, and the trainable filtered back-projection
//!   network `y = relu(Aᵀ K W x)`.
//! * [`frangi`] — the multiscale Frangi vesselness measure as a differentiable
//!   network with an optionally trainable second-derivative kernel bank.
//! * [`rebin`] — parallel-to-fan projection rebinning with trainable frequency
//!   (`C`) and image-domain (`W`) diagonal operators.
//! * [`bounds`] — an empirical lab for maximal-error-bound checks of compositions
//!   of approximated and known operators.
//!
//! Everything is double precision and deterministic: a fixed seed reproduces
//! byte-identical artifacts. Data-parallel inner loops run on rayon when the
//! `parallel` feature (default) is enabled and fall back to sequential
//! iteration otherwise; reduction orders are fixed either way.

pub mod bounds;
pub mod ct;
pub mod error;
pub mod exec;
pub mod frangi;
pub mod graph;
pub mod io;
pub mod phantom;
pub mod rebin;
pub mod rng;
pub mod tensor;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
pub use tensor::Tensor;
