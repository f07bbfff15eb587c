//! Numerical lab for the fractional heat operator `(∂_t − Δ)^s` and its
//! degenerate local extension `y^a ∂_t U = div(y^a B ∇U)`.

pub mod dtn;
pub mod error;
pub mod extension;
pub mod geometry;
pub mod kernels;
pub mod lorentz;
pub mod moduli;
pub mod probe;
pub mod quadrature;
pub mod special;

pub use error::{Error, Result};

/// Version of this crate, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
