//! Heat-kernel random Bergman metrics on the Riemann sphere.

pub mod analytic_oracle;
pub mod boundary_zeros;
pub mod cli;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod heat_sampler;
pub mod linalg;
pub mod matrix_metric;
pub mod quadrature;
pub mod roots;
pub mod special;
pub mod statistics;

pub use error::{Error, Result};
