//! Truncated Lévy-Ciesielski construction of Brownian and geometric Brownian
//! paths, with truncation-error experiments and Gumbel-limit diagnostics.

pub mod basis;
pub mod cli;
pub mod error;
pub mod experiments;
pub mod extremes;
pub mod gaussian;
pub mod io;
pub mod paths;
pub mod quadrature;
pub mod stats;

pub use basis::BasisIndex;
pub use error::{Error, Result};
pub use extremes::GumbelNormalization;
pub use gaussian::RandomStream;
pub use paths::{CoefficientSet, DyadicPath, GbmParams};
pub use stats::RunningStats;
