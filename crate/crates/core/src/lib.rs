//! Carleson-condition auditing for sampled metric measure spaces: dyadic
//! cube systems, optimal transport, Haar energies and flatness coefficients.

pub mod audit;
pub mod coefficients;
pub mod cubes;
pub mod dyadic;
pub mod error;
pub mod generators;
pub mod haar;
pub mod metric;
pub mod transport;

pub use error::{Error, Result};
