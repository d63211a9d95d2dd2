//! Heat and drought stress modelling for crop yield reduction.
//!
//! Two stress pipelines share one downstream path:
//!
//! * deterministic expert models ([`dem`]) turn daily weather into per-period
//!   heat and drought stress on a growing-degree-unit calendar ([`growth`]);
//! * single-filter convolutional stress modules ([`neural`]) learn the same
//!   representation from the raw daily features.
//!
//! Either stress representation feeds an MLP that regresses the delta-yield of
//! a planting instance. The [`sensitivity`] module derives per-hybrid
//! covariance and gradient sensitivity matrices, and [`analysis`] ranks and
//! clusters hybrids into susceptible and resistant groups.

pub mod analysis;
pub mod data;
pub mod dem;
pub mod error;
pub mod growth;
pub mod neural;
pub mod pipeline;
pub mod sensitivity;

pub use error::{Error, Result};

/// Tool version recorded in output provenance.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
