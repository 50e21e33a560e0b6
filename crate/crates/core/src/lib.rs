//! Compressed-sensing adapters: frozen random projections `L`, `R` around a
//! small trainable core `Y`, with `dW = alpha * L Y R`.
//!
//! The crate covers the numerical kernels, seeded generation of the projection
//! pair, restricted-isometry estimation for the induced Kronecker dictionary,
//! adapter layers and their on-disk format, parameter budgets for real model
//! shapes, and toy-scale training.

pub mod adapter;
pub mod budget;
pub mod error;
pub mod numerics;
pub mod projection;
pub mod randgen;
pub mod rip;
pub mod train;

pub use adapter::{AdaptedLinear, Adapter, CosaAdapter, LoraAdapter};
pub use error::{CosaError, Result};
pub use numerics::Matrix;
pub use projection::{DictionaryView, ProjectionPair};
pub use randgen::{derive_seed, RngStream};
